#include "pairscale/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "pairscale/error.hpp"
#include "pairscale/normal.hpp"

namespace pairscale {

// --- matrices --------------------------------------------------------------

PreferenceMatrix::PreferenceMatrix(std::size_t n) : n_(n), data_(n * n, 0.5) {}

void PreferenceMatrix::set(std::size_t i, std::size_t j, double p_i_over_j) {
  if (i == j) throw ValidationError("cannot set a diagonal preference entry");
  data_[i * n_ + j] = p_i_over_j;
  data_[j * n_ + i] = 1.0 - p_i_over_j;
}

PreferenceMatrix PreferenceMatrix::from_rows(const std::vector<std::vector<double>>& rows,
                                             double tolerance) {
  const std::size_t n = rows.size();
  for (const auto& row : rows) {
    if (row.size() != n) throw ValidationError("preference matrix must be square");
    for (double v : row) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw ValidationError("preference entries must lie in [0, 1]");
      }
    }
  }
  PreferenceMatrix m(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(rows[i][i] - 0.5) > tolerance) throw ValidationError("preference diagonal must be 0.5");
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(rows[i][j] + rows[j][i] - 1.0) > tolerance) {
        throw ValidationError("preference entries (" + std::to_string(i) + ", " + std::to_string(j) +
                              ") and their transpose must sum to 1");
      }
      m.set(i, j, rows[i][j]);
    }
  }
  return m;
}

PreferenceMatrix PreferenceMatrix::transposed() const {
  PreferenceMatrix t(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = i + 1; j < n_; ++j) t.set(i, j, (*this)(j, i));
  }
  return t;
}

CountMatrix::CountMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

CountMatrix CountMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size();
  CountMatrix m(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != n) throw ValidationError("count matrix must be square");
    for (std::size_t j = 0; j < n; ++j) {
      const double v = rows[i][j];
      if (!std::isfinite(v) || v < 0.0) throw ValidationError("count entries must be finite and non-negative");
      if (i == j && v != 0.0) throw ValidationError("count matrix diagonal must be 0");
      m.data_[i * n + j] = v;
    }
  }
  return m;
}

void CountMatrix::add(std::size_t winner, std::size_t loser, double amount) {
  if (winner == loser) throw ValidationError("an item cannot be compared with itself");
  data_[winner * n_ + loser] += amount;
}

CountMatrix CountMatrix::grown() const {
  CountMatrix out(n_ + 1);
  for (std::size_t i = 0; i < n_; ++i) {
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(i * n_), n_,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * (n_ + 1)));
  }
  return out;
}

void SolverConfig::validate() const {
  if (!(tol > 0.0)) throw ValidationError("solver tolerance must be positive");
  if (!(prior_weight >= 0.0)) throw ValidationError("prior weight must be non-negative");
  if (max_iter < 1) throw ValidationError("max_iter must be at least 1");
}

// --- soft comparison -------------------------------------------------------

double soft_preference(const ComparisonLogits& logits) {
  const auto p = level_probabilities(logits);
  double s = 0.0;
  for (std::size_t i = 0; i < kLevelCount; ++i) s += kLevelWeights[i] * p[i];
  return std::clamp(s, 0.0, 1.0);
}

namespace {

ComparisonLogits checked_compare(const Comparator& comparator, std::string_view first,
                                 std::string_view second) {
  try {
    return comparator.compare(first, second);
  } catch (const ComparatorError& e) {
    throw ComparatorError(e.kind(), "comparing (" + std::string(first) + ", " + std::string(second) +
                                        "): " + e.what());
  }
}

// Estimate of P(second over first), optionally averaged over both orders.
double pair_preference(const Comparator& comparator, std::string_view first, std::string_view second,
                       bool symmetrize) {
  const double forward = soft_preference(checked_compare(comparator, first, second));
  if (!symmetrize) return forward;
  const double backward = soft_preference(checked_compare(comparator, second, first));
  return 0.5 * (forward + (1.0 - backward));
}

void add_hard_comparison(CountMatrix& counts, std::size_t first, std::size_t second,
                         const ComparisonLogits& logits) {
  const double w = weight(top_level(logits));
  counts.add(second, first, w);
  counts.add(first, second, 1.0 - w);
}

}  // namespace

PreferenceMatrix build_preference_matrix(std::span<const std::string> ids, const Comparator& comparator,
                                         bool symmetrize) {
  if (ids.size() < 2) throw ValidationError("need at least two items to build a preference matrix");
  PreferenceMatrix m(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      m.set(j, i, pair_preference(comparator, ids[i], ids[j], symmetrize));
    }
  }
  return m;
}

PreferenceMatrix build_anchor_matrix(const AnchorSet& anchors, const Comparator& comparator,
                                     bool symmetrize) {
  const auto ids = anchors.ids();
  return build_preference_matrix(ids, comparator, symmetrize);
}

std::vector<double> preference_vector(std::span<const std::string> anchor_ids, std::string_view test_id,
                                      const Comparator& comparator, bool symmetrize) {
  std::vector<double> b;
  b.reserve(anchor_ids.size());
  for (const auto& a : anchor_ids) b.push_back(pair_preference(comparator, a, test_id, symmetrize));
  return b;
}

PreferenceMatrix extend_matrix(const PreferenceMatrix& anchor_matrix, std::span<const double> b) {
  const std::size_t m = anchor_matrix.size();
  if (b.size() != m) {
    throw ValidationError("preference vector has " + std::to_string(b.size()) + " entries for " +
                          std::to_string(m) + " anchors");
  }
  PreferenceMatrix out(m + 1);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) out.set(i, j, anchor_matrix(i, j));
  }
  for (std::size_t n = 0; n < m; ++n) {
    if (!std::isfinite(b[n]) || b[n] < 0.0 || b[n] > 1.0) {
      throw ValidationError("preference vector entries must lie in [0, 1]");
    }
    out.set(m, n, b[n]);
  }
  return out;
}

CountMatrix build_anchor_count_matrix(std::span<const std::string> ids, const Comparator& comparator,
                                      bool symmetrize) {
  if (ids.size() < 2) throw ValidationError("need at least two items to build a count matrix");
  CountMatrix counts(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      add_hard_comparison(counts, i, j, checked_compare(comparator, ids[i], ids[j]));
      if (symmetrize) add_hard_comparison(counts, j, i, checked_compare(comparator, ids[j], ids[i]));
    }
  }
  return counts;
}

CountMatrix extend_count_matrix(const CountMatrix& anchor_counts, std::span<const std::string> anchor_ids,
                                std::string_view test_id, const Comparator& comparator, bool symmetrize) {
  const std::size_t m = anchor_counts.size();
  if (anchor_ids.size() != m) throw ValidationError("anchor ids do not match the count matrix size");
  CountMatrix out = anchor_counts.grown();
  for (std::size_t n = 0; n < m; ++n) {
    add_hard_comparison(out, n, m, checked_compare(comparator, anchor_ids[n], test_id));
    if (symmetrize) add_hard_comparison(out, m, n, checked_compare(comparator, test_id, anchor_ids[n]));
  }
  return out;
}

CountMatrix build_count_matrix(const AnchorSet& anchors, std::string_view test_id,
                               const Comparator& comparator, bool symmetrize) {
  const auto ids = anchors.ids();
  return extend_count_matrix(build_anchor_count_matrix(ids, comparator, symmetrize), ids, test_id,
                             comparator, symmetrize);
}

// --- objective -------------------------------------------------------------

ThurstoneObjective::ThurstoneObjective(std::size_t n, std::vector<double> weights,
                                       const SolverConfig& config)
    : n_(n),
      weights_(std::move(weights)),
      prior_weight_(config.prior == Prior::gaussian ? config.prior_weight : 0.0) {
  if (weights_.size() != n_ * n_) throw ValidationError("objective weights must be n x n");
}

double ThurstoneObjective::value(std::span<const double> q) const {
  double j = 0.0;
  double prior = 0.0;
  for (std::size_t a = 0; a < n_; ++a) {
    prior += q[a] * q[a];
    for (std::size_t b = 0; b < n_; ++b) {
      const double w = weights_[a * n_ + b];
      if (a != b && w != 0.0) j += w * log_norm_cdf(q[a] - q[b]);
    }
  }
  return j - 0.5 * prior_weight_ * prior;
}

std::vector<double> ThurstoneObjective::gradient(std::span<const double> q) const {
  std::vector<double> g(n_, 0.0);
  for (std::size_t a = 0; a < n_; ++a) {
    for (std::size_t b = 0; b < n_; ++b) {
      const double w = weights_[a * n_ + b];
      if (a == b || w == 0.0) continue;
      const double t = w * inverse_mills_ratio(q[a] - q[b]);
      g[a] += t;
      g[b] -= t;
    }
  }
  for (std::size_t a = 0; a < n_; ++a) g[a] -= prior_weight_ * q[a];
  return g;
}

std::vector<double> ThurstoneObjective::hessian(std::span<const double> q) const {
  std::vector<double> h(n_ * n_, 0.0);
  for (std::size_t a = 0; a < n_; ++a) {
    for (std::size_t b = 0; b < n_; ++b) {
      const double w = weights_[a * n_ + b];
      if (a == b || w == 0.0) continue;
      const double c = w * log_norm_cdf_curvature(q[a] - q[b]);
      h[a * n_ + a] += c;
      h[b * n_ + b] += c;
      h[a * n_ + b] -= c;
      h[b * n_ + a] -= c;
    }
  }
  for (std::size_t a = 0; a < n_; ++a) h[a * n_ + a] -= prior_weight_;
  return h;
}

// --- solver ----------------------------------------------------------------

namespace {

void center(std::vector<double>& v) {
  if (v.empty()) return;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (auto& x : v) x -= mean;
}

double norm(std::span<const double> v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

std::vector<double> centered_gradient(const ThurstoneObjective& f, std::span<const double> q) {
  auto g = f.gradient(q);
  center(g);
  return g;
}

// Newton direction on the centered subspace: solve (-H + 1 1^T) d = g.
// Empty when the system is not positive definite or the direction is not
// an ascent direction.
std::vector<double> newton_direction(const ThurstoneObjective& f, std::span<const double> q,
                                     std::span<const double> g) {
  const std::size_t n = f.size();
  const auto h = f.hessian(q);
  Eigen::MatrixXd a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = -h[i * n + j] + 1.0;
  }
  Eigen::VectorXd rhs(n);
  for (std::size_t i = 0; i < n; ++i) rhs(static_cast<Eigen::Index>(i)) = g[i];
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return {};
  const Eigen::VectorXd d = ldlt.solve(rhs);
  if (!d.allFinite()) return {};
  std::vector<double> dir(d.data(), d.data() + n);
  center(dir);
  if (std::inner_product(dir.begin(), dir.end(), g.begin(), 0.0) <= 0.0) return {};
  return dir;
}

struct Step {
  bool accepted = false;
  std::vector<double> q;
  double value = 0.0;
  std::vector<double> gradient;
};

// Halves the step until the objective does not decrease. A step that only
// loses to rounding is accepted when it still shrinks the gradient.
Step line_search(const ThurstoneObjective& f, std::span<const double> q, double value,
                 double gradient_norm, std::span<const double> direction, double initial) {
  const double slack = 1e-14 * std::max(1.0, std::abs(value));
  double t = initial;
  for (int k = 0; k < 60; ++k, t *= 0.5) {
    Step s;
    s.q.assign(q.begin(), q.end());
    for (std::size_t i = 0; i < s.q.size(); ++i) s.q[i] += t * direction[i];
    center(s.q);
    s.value = f.value(s.q);
    if (!std::isfinite(s.value)) continue;
    if (s.value > value) {
      s.accepted = true;
    } else if (s.value >= value - slack) {
      s.gradient = centered_gradient(f, s.q);
      s.accepted = norm(s.gradient) < gradient_norm;
    }
    if (s.accepted) {
      if (s.gradient.empty()) s.gradient = centered_gradient(f, s.q);
      return s;
    }
  }
  return {};
}

SolveReport solve_weights(std::size_t n, std::vector<double> weights, const SolverConfig& config) {
  config.validate();
  if (n < 2) throw ValidationError("need at least two items to solve for scale values");
  const ThurstoneObjective f(n, std::move(weights), config);

  SolveReport report;
  std::vector<double> q(n, 0.0);
  double value = f.value(q);
  auto g = centered_gradient(f, q);
  double gnorm = norm(g);
  report.objective_trace.push_back(value);

  while (gnorm > config.tol) {
    if (report.iterations >= config.max_iter) {
      throw ConvergenceError("MAP solver did not converge in " + std::to_string(config.max_iter) +
                                 " iterations (gradient norm " + std::to_string(gnorm) + ")",
                             gnorm);
    }
    ++report.iterations;
    Step step;
    if (const auto dir = newton_direction(f, q, g); !dir.empty()) {
      step = line_search(f, q, value, gnorm, dir, 1.0);
    }
    if (!step.accepted) step = line_search(f, q, value, gnorm, g, 1.0);
    if (!step.accepted) {
      throw ConvergenceError("MAP solver stalled (gradient norm " + std::to_string(gnorm) + ")", gnorm);
    }
    q = std::move(step.q);
    value = step.value;
    g = std::move(step.gradient);
    gnorm = norm(g);
    report.objective_trace.push_back(value);
  }

  center(q);
  report.scores.values = std::move(q);
  report.gradient_norm = gnorm;
  return report;
}

}  // namespace

SolveReport solve_map_report(const PreferenceMatrix& matrix, const SolverConfig& config) {
  const std::size_t n = matrix.size();
  std::vector<double> weights(matrix.data().begin(), matrix.data().end());
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      auto& w = weights[i * n + j];
      const double c = std::clamp(w, kProbabilityClamp, 1.0 - kProbabilityClamp);
      if (c != w) ++clamped;
      w = c;
    }
  }
  auto report = solve_weights(n, std::move(weights), config);
  report.clamped_entries = clamped;
  if (clamped > 0 && config.prior == Prior::none) {
    report.warnings.push_back(std::to_string(clamped) +
                              " preference entries clamped to [1e-6, 1 - 1e-6] to keep the likelihood finite");
  }
  return report;
}

SolveReport solve_map_report(const CountMatrix& matrix, const SolverConfig& config) {
  return solve_weights(matrix.size(), std::vector<double>(matrix.data().begin(), matrix.data().end()),
                       config);
}

ScaleScores solve_map(const PreferenceMatrix& matrix, const SolverConfig& config) {
  return solve_map_report(matrix, config).scores;
}

ScaleScores solve_map(const CountMatrix& matrix, const SolverConfig& config) {
  return solve_map_report(matrix, config).scores;
}

// --- scoring ---------------------------------------------------------------

AnchorScorer::AnchorScorer(const AnchorSet& anchors, const Comparator& comparator, SolverConfig config,
                           MatrixKind kind, bool symmetrize)
    : anchor_ids_(anchors.ids()),
      comparator_(comparator),
      config_(config),
      kind_(kind),
      symmetrize_(symmetrize) {
  config_.validate();
  if (kind_ == MatrixKind::probability) {
    anchor_matrix_ = build_preference_matrix(anchor_ids_, comparator_, symmetrize_);
  } else {
    anchor_counts_ = build_anchor_count_matrix(anchor_ids_, comparator_, symmetrize_);
  }
}

ScaleScores AnchorScorer::solve_with(std::string_view test_id) const {
  if (kind_ == MatrixKind::probability) {
    const auto b = preference_vector(anchor_ids_, test_id, comparator_, symmetrize_);
    return solve_map(extend_matrix(anchor_matrix_, b), config_);
  }
  return solve_map(extend_count_matrix(anchor_counts_, anchor_ids_, test_id, comparator_, symmetrize_),
                   config_);
}

double AnchorScorer::score(std::string_view test_id) const { return solve_with(test_id).values.back(); }

double score_image(std::string_view test_id, const AnchorSet& anchors, const PreferenceMatrix& anchor_matrix,
                   const Comparator& comparator, const SolverConfig& config, bool symmetrize) {
  const auto ids = anchors.ids();
  if (anchor_matrix.size() != ids.size()) throw ValidationError("anchor matrix does not match the anchor set");
  const auto b = preference_vector(ids, test_id, comparator, symmetrize);
  return solve_map(extend_matrix(anchor_matrix, b), config).values.back();
}

}  // namespace pairscale
