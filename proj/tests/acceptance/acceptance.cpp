// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "pairscale/anchors.hpp"
#include "pairscale/corpus.hpp"
#include "pairscale/experiment.hpp"
#include "pairscale/metrics.hpp"
#include "pairscale/normal.hpp"
#include "pairscale/scaling.hpp"
#include "support/oracles.hpp"

using namespace pairscale;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

SolverConfig no_prior() {
  SolverConfig c;
  c.prior = Prior::none;
  return c;
}

PreferenceMatrix random_matrix(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.02, 0.98);
  PreferenceMatrix p(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) p.set(i, j, u(rng));
  return p;
}

std::vector<std::size_t> order_of(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  return idx;
}

// 1 -------------------------------------------------------------------------
Outcome two_item_closed_form() {
  const auto start = Clock::now();
  const auto p = PreferenceMatrix::from_rows({{0.5, 0.75}, {0.25, 0.5}});
  const auto q = solve_map(p, no_prior()).values;
  const double elapsed = seconds_since(start);

  const double half = oracle::norm_quantile(0.75) / 2;
  // Grid oracle along the zero-sum line q = (d/2, -d/2), step 1e-4.
  double best_d = 0.0, best = -INFINITY;
  for (int k = -60000; k <= 60000; ++k) {
    const double d = k * 1e-4;
    const double j = 0.75 * std::log(0.5 * boost::math::erfc(-d / std::sqrt(2.0))) +
                     0.25 * std::log(0.5 * boost::math::erfc(d / std::sqrt(2.0)));
    if (j > best) best = j, best_d = d;
  }
  const double err = std::max(std::abs(q[0] - half), std::abs(q[1] + half));
  const double grid_err = std::max(std::abs(q[0] - best_d / 2), std::abs(q[1] + best_d / 2));
  return {err <= 1e-3 && grid_err <= 1e-3 && elapsed < 1.0,
          fmt("q=(%.6f, %.6f) closed-form err %.1e, grid err %.1e, %.3f s", q[0], q[1], err, grid_err, elapsed)};
}

// 2 -------------------------------------------------------------------------
Outcome grid_oracle_equivalence() {
  const auto start = Clock::now();
  std::mt19937_64 rng(20240501);
  double worst = 0.0;
  int order_mismatch = 0;
  for (int t = 0; t < 50; ++t) {
    const auto p = oracle::random_preference3(rng);
    PreferenceMatrix m(3);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = i + 1; j < 3; ++j) m.set(i, j, p[i * 3 + j]);
    const auto q = solve_map(m, SolverConfig{}).values;
    const auto grid = oracle::grid_search3(p, 1.0);
    const std::vector<double> g(grid.q.begin(), grid.q.end());
    for (std::size_t k = 0; k < 3; ++k) worst = std::max(worst, std::abs(q[k] - g[k]));
    if (order_of(q) != order_of(g)) ++order_mismatch;
  }
  const double elapsed = seconds_since(start);
  return {worst <= 2e-3 && order_mismatch == 0 && elapsed < 120.0,
          fmt("50 matrices, max coordinate err %.2e, ordering mismatches %d, %.1f s", worst, order_mismatch, elapsed)};
}

// 3 -------------------------------------------------------------------------
Outcome gradient_check() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> uq(-2.5, 2.5);
  double worst = 0.0;
  int points = 0;
  for (std::size_t n = 2; n <= 6; ++n) {
    for (int t = 0; t < 100; ++t) {
      const auto p = random_matrix(n, rng);
      const ThurstoneObjective f(n, {p.data().begin(), p.data().end()}, SolverConfig{});
      std::vector<double> q(n);
      for (double& x : q) x = uq(rng);
      const auto g = f.gradient(q);
      for (std::size_t k = 0; k < n; ++k) {
        const double fd = oracle::central_difference([&](auto& x) { return f.value(x); }, q, k, 1e-6);
        worst = std::max(worst, std::abs(g[k] - fd));
      }
      ++points;
    }
  }
  return {worst <= 1e-6, fmt("%d points over n=2..6, max |analytic - central difference| %.2e", points, worst)};
}

// 4 -------------------------------------------------------------------------
Outcome log_norm_cdf_accuracy() {
  double worst = 0.0, worst_x = 0.0;
  for (int k = -8000; k <= 8000; ++k) {
    const double x = k * 1e-3;
    const double ref = oracle::log_norm_cdf(x);
    const double rel = std::abs(log_norm_cdf(x) - ref) / std::abs(ref);
    if (rel > worst) worst = rel, worst_x = x;
  }
  bool finite_monotone = true;
  double prev = -INFINITY;
  for (int k = -40000; k <= 40000; ++k) {
    const double v = log_norm_cdf(k * 1e-3);
    if (!std::isfinite(v) || v < prev || v > 0.0) finite_monotone = false;
    prev = v;
  }
  return {worst <= 1e-10 && finite_monotone,
          fmt("max relative error %.2e (x=%.3f) on [-8,8]; finite and monotone on [-40,40]: %s", worst, worst_x,
              finite_monotone ? "yes" : "no")};
}

ExperimentConfig synthetic_config(std::uint64_t seed, int splits) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.splits = splits;
  cfg.alpha = 5;
  cfg.beta = 1;
  cfg.accuracy_pairs = 0;
  cfg.comparator.seed = seed;
  return cfg;
}

// 5 -------------------------------------------------------------------------
Outcome end_to_end_recovery() {
  const auto start = Clock::now();
  const auto data = make_synthetic_dataset({.count = 200, .mos_min = 0, .mos_max = 5, .sigma = 0.25, .seed = 0});
  const auto result = run_experiment(data, synthetic_config(0, 10));
  const double elapsed = seconds_since(start);
  double min_srcc = 1.0, min_plcc = 1.0;
  for (const auto& r : result.splits) min_srcc = std::min(min_srcc, r.srcc), min_plcc = std::min(min_plcc, r.plcc);
  return {min_srcc >= 0.95 && min_plcc >= 0.95 && elapsed < 60.0,
          fmt("10 splits of 40 test images: min SRCC %.4f, min PLCC %.4f (median %.4f / %.4f), %.1f s", min_srcc,
              min_plcc, result.median.srcc, result.median.plcc, elapsed)};
}

// 6 -------------------------------------------------------------------------
struct RouteComparison {
  int prob_ge_count = 0;
  int strictly_better = 0;
  double prob_median = 0.0;
  double count_median = 0.0;
};

RouteComparison compare_routes(OracleMode mode) {
  RouteComparison out;
  std::vector<double> prob, count;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto data = make_synthetic_dataset({.count = 200, .sigma = 0.25, .seed = seed});
    auto cfg = synthetic_config(seed, 1);
    cfg.comparator.oracle_mode = mode;
    cfg.comparator.noise_scale = 0.0;
    const double p = run_experiment(data, cfg).splits[0].srcc;
    cfg.matrix = MatrixKind::count;
    const double c = run_experiment(data, cfg).splits[0].srcc;
    prob.push_back(p);
    count.push_back(c);
    if (p >= c) ++out.prob_ge_count;
    if (p > c) ++out.strictly_better;
  }
  out.prob_median = median(prob);
  out.count_median = median(count);
  return out;
}

Outcome probability_vs_count() {
  const auto s = compare_routes(OracleMode::stochastic);
  const auto d = compare_routes(OracleMode::deterministic);
  return {s.prob_ge_count >= 8,
          fmt("stochastic oracle: probability >= count in %d/10 seeds (%d strictly), median SRCC %.4f vs %.4f; "
              "deterministic oracle (diagnostic): %d/10 (%d strictly), %.4f vs %.4f",
              s.prob_ge_count, s.strictly_better, s.prob_median, s.count_median, d.prob_ge_count,
              d.strictly_better, d.prob_median, d.count_median)};
}

// 7 -------------------------------------------------------------------------
bool on_band_edge(double m, double s) {
  for (double k : {-2.0, -1.0, 1.0, 2.0})
    if (m == k * s) return true;
  return false;
}

Outcome structural_invariants() {
  std::vector<std::string> failures;
  auto check = [&](bool ok, const char* what) {
    if (!ok && std::find(failures.begin(), failures.end(), what) == failures.end()) failures.push_back(what);
  };
  std::mt19937_64 rng(7);

  // Matrix structure after build and extend, with both oracle modes.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto data = make_synthetic_dataset({.count = 60, .sigma_spread = 0.2, .seed = seed});
    const OracleOptions opts{seed % 2 ? OracleMode::stochastic : OracleMode::deterministic, 1.0, seed};
    const OracleComparator cmp(data, opts);
    const auto anchors = select_anchors(data, 5, 2);
    for (bool sym : {false, true}) {
      const auto pa = build_anchor_matrix(anchors, cmp, sym);
      const auto b = preference_vector(anchors.ids(), data[seed].image_id, cmp, sym);
      const auto full = extend_matrix(pa, b);
      for (std::size_t i = 0; i < full.size(); ++i) {
        check(full(i, i) == 0.5, "diagonal 0.5");
        for (std::size_t j = 0; j < full.size(); ++j) {
          check(full(i, j) + full(j, i) == 1.0, "antisymmetry");
          check(full(i, j) >= 0.0 && full(i, j) <= 1.0, "entries in [0,1]");
        }
      }
    }
  }

  // Zero-sum, permutation and mirror invariance of the solver.
  double worst_sum = 0.0, worst_perm = 0.0, worst_mirror = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + t % 9;
    const auto p = random_matrix(n, rng);
    const auto cfg = t % 2 ? SolverConfig{} : no_prior();
    const auto q = solve_map(p, cfg).values;
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(q.begin(), q.end(), 0.0)));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    PreferenceMatrix pp(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) pp.set(i, j, p(perm[i], perm[j]));
    const auto qp = solve_map(pp, cfg).values;
    const auto qm = solve_map(p.transposed(), cfg).values;
    for (std::size_t i = 0; i < n; ++i) {
      worst_perm = std::max(worst_perm, std::abs(qp[i] - q[perm[i]]));
      worst_mirror = std::max(worst_mirror, std::abs(qm[i] + q[i]));
    }
  }
  check(worst_sum <= 1e-9, "zero-sum");
  check(worst_perm <= 1e-7, "permutation invariance");
  check(worst_mirror <= 1e-7, "mirror invariance");

  // Soft preference mirror identity.
  std::normal_distribution<double> g(0.0, 5.0);
  double worst_soft = 0.0;
  for (int t = 0; t < 10000; ++t) {
    ComparisonLogits l;
    for (double& v : l.values) v = g(rng);
    worst_soft = std::max(worst_soft, std::abs(soft_preference(mirrored(l)) - (1.0 - soft_preference(l))));
  }
  check(worst_soft <= 1e-12, "soft_preference mirror");

  // classify_level mirror property away from band edges.
  std::uniform_real_distribution<double> um(-5, 5), us(0.01, 2);
  for (int t = 0; t < 100000; ++t) {
    const double m = um(rng), s = us(rng);
    if (on_band_edge(m, s)) continue;
    check(classify_level({-m, s}) == mirror(classify_level({m, s})), "classify_level mirror");
  }

  // Oracle determinism under a fixed seed, across instances and threads.
  const auto data = make_synthetic_dataset({.count = 40, .seed = 3});
  const OracleOptions opts{OracleMode::stochastic, 0.7, 1234};
  const OracleComparator a(data, opts), b(data, opts);
  std::vector<ComparisonLogits> serial, threaded(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) serial.push_back(a.compare(data[i].image_id, data[(i + 1) % data.size()].image_id));
  {
    std::vector<std::jthread> pool;
    for (std::size_t i = data.size(); i-- > 0;)
      pool.emplace_back([&, i] { threaded[i] = b.compare(data[i].image_id, data[(i + 1) % data.size()].image_id); });
  }
  check(serial == threaded, "oracle determinism");

  std::string detail = fmt("zero-sum %.1e, permutation %.1e, mirror %.1e, soft mirror %.1e", worst_sum, worst_perm,
                           worst_mirror, worst_soft);
  for (const auto& f : failures) detail += "; violated: " + f;
  return {failures.empty(), detail};
}

// 8 -------------------------------------------------------------------------
Outcome level_banding_table() {
  struct Case {
    double mean, std;
    Level expected;
  };
  const std::vector<Case> cases{
      {2.0, 0.5, Level::inferior}, {0.0, 0.5, Level::similar},  {0.0, 3.0, Level::similar},
      {-1.0, 1.0, Level::better},  {0.5, 0.5, Level::similar},  {-0.5, 0.5, Level::better},
      {1.0, 0.5, Level::worse},    {-1.0, 0.5, Level::superior}, {0.25, 0.25, Level::similar},
      {-0.25, 0.25, Level::better}, {0.5, 0.25, Level::worse},  {-0.5, 0.25, Level::superior}};
  int wrong = 0;
  std::string detail;
  for (const auto& c : cases) {
    const auto got = classify_level({c.mean, c.std});
    if (got != c.expected) {
      ++wrong;
      detail += fmt(" (%g, %g) -> %s, expected %s;", c.mean, c.std, std::string(level_name(got)).c_str(),
                    std::string(level_name(c.expected)).c_str());
    }
  }
  return {wrong == 0, fmt("%zu cases, %d wrong", cases.size(), wrong) + detail};
}

// 9 -------------------------------------------------------------------------
Outcome anchor_exactness() {
  std::mt19937_64 rng(99);
  int datasets = 0, violations = 0, rejected = 0;
  while (datasets < 1000) {
    const int alpha = std::uniform_int_distribution<int>(1, 7)(rng);
    const int beta = std::uniform_int_distribution<int>(1, 3)(rng);
    const int n = std::uniform_int_distribution<int>(alpha * beta, alpha * beta * 6)(rng);
    std::uniform_real_distribution<double> mos(0, 5);
    std::uniform_int_distribution<int> sd(1, 12);
    std::vector<ImageRecord> r;
    for (int i = 0; i < n; ++i) {
      r.push_back({"r" + std::to_string(rng() % 1000000) + "_" + std::to_string(i), mos(rng), sd(rng) * 0.05,
                   std::nullopt, "x"});
    }
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& x : r) lo = std::min(lo, x.mos), hi = std::max(hi, x.mos);
    std::vector<std::vector<const ImageRecord*>> by(alpha);
    for (const auto& x : r) {
      int k = x.mos >= hi ? alpha - 1 : 0;
      for (int b = 1; b < alpha && x.mos < hi; ++b)
        if (x.mos >= lo + (hi - lo) * b / alpha) k = b;
      by[k].push_back(&x);
    }
    if (std::any_of(by.begin(), by.end(), [&](auto& v) { return int(v.size()) < beta; })) {
      ++rejected;
      continue;
    }
    ++datasets;
    const auto set = select_anchors(r, alpha, beta);
    if (int(set.size()) != alpha * beta) ++violations;
    for (int k = 0; k < alpha; ++k) {
      std::set<std::string> chosen;
      for (const auto& a : set.anchors)
        if (a.interval == k) chosen.insert(a.image_id);
      // Exhaustive scan: every chosen record is in interval k, and no
      // unchosen record of interval k beats a chosen one on (std, id).
      for (const auto& id : chosen)
        if (std::none_of(by[k].begin(), by[k].end(), [&](auto* x) { return x->image_id == id; })) ++violations;
      for (const auto* x : by[k]) {
        if (chosen.count(x->image_id)) continue;
        for (const auto* y : by[k]) {
          if (!chosen.count(y->image_id)) continue;
          if (x->std < y->std || (x->std == y->std && x->image_id < y->image_id)) ++violations;
        }
      }
    }
  }

  // Min-variance vs random anchors on a synthetic set whose rating spread
  // varies per image (mean std 0.25). The stochastic oracle is the analog:
  // its judgments get noisier as the compared images' rating spread grows.
  // The deterministic oracle has no judgment noise and is reported only.
  auto anchor_medians = [](OracleMode mode) {
    std::vector<double> variance_srcc, random_srcc;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto data = make_synthetic_dataset({.count = 200, .sigma = 0.25, .sigma_spread = 0.2, .seed = seed});
      auto cfg = synthetic_config(seed, 1);
      cfg.comparator.oracle_mode = mode;
      variance_srcc.push_back(run_experiment(data, cfg).splits[0].srcc);
      cfg.anchor_method = AnchorMethod::random;
      random_srcc.push_back(run_experiment(data, cfg).splits[0].srcc);
    }
    return std::pair{median(variance_srcc), median(random_srcc)};
  };
  const auto [mv, rnd] = anchor_medians(OracleMode::stochastic);
  const auto [dmv, drnd] = anchor_medians(OracleMode::deterministic);
  return {violations == 0 && mv >= rnd,
          fmt("1000 datasets (%d underpopulated redrawn), %d violations; stochastic oracle median SRCC over 10 "
              "seeds: min-variance %.4f vs random %.4f; deterministic oracle (diagnostic): %.4f vs %.4f",
              rejected, violations, mv, rnd, dmv, drnd)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"two-item closed form", two_item_closed_form},
      {"grid-oracle equivalence", grid_oracle_equivalence},
      {"gradient check", gradient_check},
      {"log_norm_cdf accuracy", log_norm_cdf_accuracy},
      {"end-to-end recovery", end_to_end_recovery},
      {"probability vs count matrix", probability_vs_count},
      {"structural invariants", structural_invariants},
      {"level banding table", level_banding_table},
      {"anchor exactness", anchor_exactness},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
