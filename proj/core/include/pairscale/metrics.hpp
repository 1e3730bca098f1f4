#pragma once

#include <span>
#include <vector>

#include "pairscale/levels.hpp"

namespace pairscale {

// Average (fractional) ranks, 1-based; ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);

// Spearman correlation: Pearson on average ranks. Throws ValidationError
// ("degenerate ranking") when either side has no rank variance.
double srcc(std::span<const double> pred, std::span<const double> truth);

struct LogisticFit {
  double b1 = 0.0, b2 = 0.0, b3 = 0.0, b4 = 1.0;
  bool converged = false;

  double operator()(double x) const;
};

// Least-squares fit of the monotone logistic
//   y = b2 + (b1 - b2) / (1 + exp(-(x - b3) / b4)).
LogisticFit fit_logistic(std::span<const double> x, std::span<const double> y);

struct PlccResult {
  double value = 0.0;
  bool logistic_applied = false;  // false when the fit failed and raw was used
};

PlccResult plcc_report(std::span<const double> pred, std::span<const double> truth,
                       bool logistic_map);
double plcc(std::span<const double> pred, std::span<const double> truth, bool logistic_map = false);

// Fraction of positions where the two level lists agree.
double level_accuracy(std::span<const Level> pred, std::span<const Level> truth);

double median(std::vector<double> values);

}  // namespace pairscale
