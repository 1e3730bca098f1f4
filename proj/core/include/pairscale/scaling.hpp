#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pairscale/anchors.hpp"
#include "pairscale/comparator.hpp"

namespace pairscale {

// Square matrix of preference probabilities: (i, j) is the probability that
// item i is preferred over item j. The diagonal is 0.5 and every off-diagonal
// pair is written together, so (i, j) + (j, i) == 1 holds by construction.
class PreferenceMatrix {
 public:
  PreferenceMatrix() = default;
  explicit PreferenceMatrix(std::size_t n);

  // Validates a dense matrix (entries in [0,1], diagonal 0.5, complements
  // within `tolerance`) and rebuilds it from its upper triangle.
  static PreferenceMatrix from_rows(const std::vector<std::vector<double>>& rows,
                                    double tolerance = 1e-9);

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }

  // Sets P(i over j) = p and P(j over i) = 1 - p.
  void set(std::size_t i, std::size_t j, double p_i_over_j);

  std::span<const double> data() const { return data_; }
  PreferenceMatrix transposed() const;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

// (i, j) accumulates (possibly fractional) wins of item i over item j.
class CountMatrix {
 public:
  CountMatrix() = default;
  explicit CountMatrix(std::size_t n);

  static CountMatrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  void add(std::size_t winner, std::size_t loser, double amount);

  // Copy grown by one item with no recorded comparisons.
  CountMatrix grown() const;
  std::span<const double> data() const { return data_; }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

struct ScaleScores {
  std::vector<double> values;
};

enum class Prior { gaussian, none };

struct SolverConfig {
  Prior prior = Prior::gaussian;
  double prior_weight = 1.0;
  double tol = 1e-9;  // on the norm of the centered gradient
  int max_iter = 500;

  void validate() const;
};

inline constexpr double kProbabilityClamp = 1e-6;

// Probability that the SECOND image of the compared pair is preferred: the
// level-weighted sum of the softmax of the logits.
double soft_preference(const ComparisonLogits& logits);

// Comparison schedule over anchors: each unordered pair is compared once as
// (first = a_i, second = a_j), i < j, giving P(a_j over a_i). With symmetrize
// the reversed order is compared too and the two estimates are averaged.
PreferenceMatrix build_preference_matrix(std::span<const std::string> ids,
                                         const Comparator& comparator, bool symmetrize);
PreferenceMatrix build_anchor_matrix(const AnchorSet& anchors, const Comparator& comparator,
                                     bool symmetrize);

// b_n = P(test over anchor n), from comparisons with the anchor first.
std::vector<double> preference_vector(std::span<const std::string> anchor_ids,
                                      std::string_view test_id, const Comparator& comparator,
                                      bool symmetrize);

// Appends the test item: last row = b, last column = 1 - b, corner 0.5.
PreferenceMatrix extend_matrix(const PreferenceMatrix& anchor_matrix, std::span<const double> b);

// Hard-decision counterpart: each comparison adds the top-1 level weight w to
// (second, first) and 1 - w to (first, second). Same schedule as above.
CountMatrix build_anchor_count_matrix(std::span<const std::string> ids,
                                      const Comparator& comparator, bool symmetrize);
CountMatrix extend_count_matrix(const CountMatrix& anchor_counts,
                                std::span<const std::string> anchor_ids,
                                std::string_view test_id, const Comparator& comparator,
                                bool symmetrize);
CountMatrix build_count_matrix(const AnchorSet& anchors, std::string_view test_id,
                               const Comparator& comparator, bool symmetrize);

// J(q) = sum_{i != j} M_ij ln Phi(q_i - q_j) - (lambda / 2) sum q_i^2.
class ThurstoneObjective {
 public:
  // `weights` is a row-major n x n matrix; the diagonal is ignored.
  ThurstoneObjective(std::size_t n, std::vector<double> weights, const SolverConfig& config);

  std::size_t size() const { return n_; }
  double value(std::span<const double> q) const;
  std::vector<double> gradient(std::span<const double> q) const;
  // Row-major n x n Hessian.
  std::vector<double> hessian(std::span<const double> q) const;

 private:
  std::size_t n_;
  std::vector<double> weights_;
  double prior_weight_;
};

struct SolveReport {
  ScaleScores scores;
  int iterations = 0;
  double gradient_norm = 0.0;
  std::vector<double> objective_trace;  // J after every accepted update
  std::size_t clamped_entries = 0;
  std::vector<std::string> warnings;
};

// MAP scale values under Thurstone Case V, centered to sum to zero. Damped
// Newton on the centered problem with a gradient-ascent fallback. Preference
// entries are clamped to [1e-6, 1 - 1e-6]. Throws ConvergenceError carrying
// the final gradient norm when max_iter is exhausted.
SolveReport solve_map_report(const PreferenceMatrix& matrix, const SolverConfig& config);
SolveReport solve_map_report(const CountMatrix& matrix, const SolverConfig& config);
ScaleScores solve_map(const PreferenceMatrix& matrix, const SolverConfig& config);
ScaleScores solve_map(const CountMatrix& matrix, const SolverConfig& config);

enum class MatrixKind { probability, count };

// Scores test images against a fixed anchor set. The anchor block is built
// once; each call compares the test image with every anchor, extends the
// matrix, solves, and returns the test item's coordinate.
class AnchorScorer {
 public:
  AnchorScorer(const AnchorSet& anchors, const Comparator& comparator, SolverConfig config,
               MatrixKind kind = MatrixKind::probability, bool symmetrize = false);

  double score(std::string_view test_id) const;
  ScaleScores solve_with(std::string_view test_id) const;

  const PreferenceMatrix& anchor_matrix() const { return anchor_matrix_; }
  const CountMatrix& anchor_counts() const { return anchor_counts_; }
  std::span<const std::string> anchor_ids() const { return anchor_ids_; }

 private:
  std::vector<std::string> anchor_ids_;
  const Comparator& comparator_;
  SolverConfig config_;
  MatrixKind kind_;
  bool symmetrize_;
  PreferenceMatrix anchor_matrix_;
  CountMatrix anchor_counts_;
};

// Score of `test_id` relative to the anchors (zero-sum with them).
double score_image(std::string_view test_id, const AnchorSet& anchors,
                   const PreferenceMatrix& anchor_matrix, const Comparator& comparator,
                   const SolverConfig& config, bool symmetrize = false);

}  // namespace pairscale
