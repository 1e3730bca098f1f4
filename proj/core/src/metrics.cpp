#include "pairscale/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>

#include "pairscale/error.hpp"

namespace pairscale {
namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("metric inputs differ in length");
  if (a.size() < 2) throw ValidationError("metrics need at least two items");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw ValidationError("metric inputs must be finite");
  }
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Logistic value and L (1 - L) without overflow.
struct LogisticTerms {
  double l;
  double l_one_minus_l;
};

LogisticTerms logistic_terms(double u) {
  // L = 1 / (1 + exp(u))
  if (u > 0.0) {
    const double e = std::exp(-u);
    const double l = e / (1.0 + e);
    return {l, l * (1.0 / (1.0 + e))};
  }
  const double e = std::exp(u);
  const double l = 1.0 / (1.0 + e);
  return {l, l * (e / (1.0 + e))};
}

struct LogisticResiduals {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  std::span<const double> x;
  std::span<const double> y;

  int inputs() const { return 4; }
  int values() const { return static_cast<int>(x.size()); }

  int operator()(const Eigen::VectorXd& b, Eigen::VectorXd& fvec) const {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto t = logistic_terms(-(x[i] - b[2]) / b[3]);
      fvec[static_cast<Eigen::Index>(i)] = b[1] + (b[0] - b[1]) * t.l - y[i];
    }
    return 0;
  }

  int df(const Eigen::VectorXd& b, Eigen::MatrixXd& jac) const {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const auto t = logistic_terms(-(x[i] - b[2]) / b[3]);
      jac(r, 0) = t.l;
      jac(r, 1) = 1.0 - t.l;
      jac(r, 2) = -(b[0] - b[1]) * t.l_one_minus_l / b[3];
      jac(r, 3) = -(b[0] - b[1]) * t.l_one_minus_l * (x[i] - b[2]) / (b[3] * b[3]);
    }
    return 0;
  }
};

double sum_squares(const LogisticFit& fit, std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = fit(x[i]) - y[i];
    s += r * r;
  }
  return s;
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start + 1;
    while (end < order.size() && values[order[end]] == values[order[start]]) ++end;
    // Positions start..end-1 share rank (start+1 + end) / 2.
    const double rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) ranks[order[k]] = rank;
    start = end;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw ValidationError("zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double srcc(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth);
  const auto rp = average_ranks(pred);
  const auto rt = average_ranks(truth);
  auto constant = [](const std::vector<double>& r) {
    return std::all_of(r.begin(), r.end(), [&](double v) { return v == r.front(); });
  };
  if (constant(rp) || constant(rt)) throw ValidationError("degenerate ranking");
  return pearson(rp, rt);
}

double LogisticFit::operator()(double x) const {
  return b2 + (b1 - b2) * logistic_terms(-(x - b3) / b4).l;
}

LogisticFit fit_logistic(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  const double range = *xmax - *xmin;
  if (range <= 0.0) throw ValidationError("zero variance");

  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  const double slope = sxy / sxx;

  // Two starts: a saturating curve spanning the data, and a nearly linear
  // one matching the least-squares line.
  std::vector<Eigen::VectorXd> starts;
  {
    Eigen::VectorXd b(4);
    const double sd = std::sqrt(sxx / static_cast<double>(x.size()));
    b << (slope >= 0 ? *ymax : *ymin), (slope >= 0 ? *ymin : *ymax), mx, std::max(sd, 1e-12 * range);
    starts.push_back(b);
  }
  {
    Eigen::VectorXd b(4);
    const double scale = 10.0 * range;
    const double half = 2.0 * scale * slope;
    b << my + half, my - half, mx, scale;
    starts.push_back(b);
  }

  LogisticFit best;
  double best_sse = std::numeric_limits<double>::infinity();
  for (auto b : starts) {
    LogisticResiduals functor{x, y};
    Eigen::LevenbergMarquardt<LogisticResiduals> lm(functor);
    lm.parameters.maxfev = 2000;
    const auto status = lm.minimize(b);
    const bool ok = status != Eigen::LevenbergMarquardtSpace::ImproperInputParameters &&
                    status != Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation;
    LogisticFit fit{b[0], b[1], b[2], b[3], ok && b.allFinite() && b[3] != 0.0};
    if (!fit.converged) continue;
    const double sse = sum_squares(fit, x, y);
    if (std::isfinite(sse) && sse < best_sse) {
      best_sse = sse;
      best = fit;
    }
  }
  return best;
}

PlccResult plcc_report(std::span<const double> pred, std::span<const double> truth, bool logistic_map) {
  const double raw = pearson(pred, truth);
  if (!logistic_map) return {raw, false};
  const auto fit = fit_logistic(pred, truth);
  if (!fit.converged) return {raw, false};
  std::vector<double> mapped(pred.size());
  std::transform(pred.begin(), pred.end(), mapped.begin(), [&](double v) { return fit(v); });
  try {
    return {pearson(mapped, truth), true};
  } catch (const ValidationError&) {
    return {raw, false};
  }
}

double plcc(std::span<const double> pred, std::span<const double> truth, bool logistic_map) {
  return plcc_report(pred, truth, logistic_map).value;
}

double level_accuracy(std::span<const Level> pred, std::span<const Level> truth) {
  if (pred.size() != truth.size()) throw ValidationError("level lists differ in length");
  if (pred.empty()) throw ValidationError("level accuracy needs at least one pair");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace pairscale
