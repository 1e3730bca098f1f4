#include "cli.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pairscale/anchors.hpp"
#include "pairscale/corpus.hpp"
#include "pairscale/dataset.hpp"
#include "pairscale/experiment.hpp"
#include "pairscale/parallel.hpp"
#include "pairscale/scaling.hpp"

namespace pairscale::cli {
namespace {

struct Options {
  // shared
  std::uint64_t seed = 0;
  std::string out;
  unsigned jobs = 0;
  std::vector<std::string> datasets;

  // gen-corpus
  std::size_t pairs = 0;
  bool balance_levels = false;

  // anchors
  int alpha = 5;
  int beta = 1;
  bool random_anchors = false;
  std::string anchors;

  // comparator
  std::string comparator = "oracle";
  std::string comparator_mode = "deterministic";
  double noise = 0.0;
  std::string cache;
  std::string endpoint;
  std::string image_root;
  int max_in_flight = 4;

  // solver and scoring
  bool symmetrize = false;
  double prior_weight = 1.0;
  bool no_prior = false;
  bool count = false;
  std::vector<std::string> images;
  std::string matrix;

  // evaluation
  std::string config;
  std::string split_file;
  int splits = 10;
  bool logistic_plcc = false;
  std::size_t accuracy_pairs = 1000;

  // simulate
  std::size_t n = 200;
  double sigma = 0.25;
  double sigma_spread = 0.0;
  double mos_min = 0.0;
  double mos_max = 5.0;
};

std::string format_real(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string single_dataset(const Options& o) {
  if (o.datasets.size() != 1) throw ValidationError("exactly one --dataset is required");
  return o.datasets.front();
}

std::vector<ImageRecord> load_one(const std::string& path) { return load_dataset(path, dataset_tag_from_path(path)); }

// Writes `text` to --out, or to `out` when --out is not given.
void emit(const Options& o, const std::string& text, std::ostream& out) {
  if (o.out.empty()) {
    out << text;
    return;
  }
  std::ofstream file(o.out, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write " + o.out);
  file << text;
}

SolverConfig solver_config(const Options& o) {
  SolverConfig cfg;
  cfg.prior = o.no_prior ? Prior::none : Prior::gaussian;
  cfg.prior_weight = o.prior_weight;
  cfg.validate();
  return cfg;
}

ComparatorConfig comparator_config(const Options& o) {
  ComparatorConfig cfg;
  const auto backend = parse_backend(o.comparator);
  if (!backend) throw ValidationError("unknown comparator '" + o.comparator + "'");
  cfg.backend = *backend;
  const auto mode = parse_oracle_mode(o.comparator_mode);
  if (!mode) throw ValidationError("unknown comparator mode '" + o.comparator_mode + "'");
  cfg.oracle_mode = *mode;
  cfg.noise_scale = o.noise;
  cfg.seed = o.seed;
  if (!o.endpoint.empty()) cfg.endpoint = o.endpoint;
  if (!o.cache.empty()) cfg.cache_path = o.cache;
  cfg.image_root = o.image_root;
  cfg.max_in_flight = o.max_in_flight;
  cfg.validate();
  return cfg;
}

// --- subcommands -----------------------------------------------------------

int gen_corpus(const Options& o, std::ostream& out) {
  if (o.datasets.empty()) throw ValidationError("at least one --dataset is required");
  std::vector<std::vector<ImageRecord>> datasets;
  for (const auto& path : o.datasets) datasets.push_back(load_one(path));
  const auto pairs = generate_corpus(datasets, o.pairs, o.seed, o.balance_levels);
  if (!o.out.empty()) {
    emit_corpus(pairs, o.out);
    return 0;
  }
  for (const auto& p : pairs) out << corpus_line(p) << '\n';
  return 0;
}

int select_anchors_cmd(const Options& o, std::ostream& out) {
  const auto records = load_one(single_dataset(o));
  const auto set = o.random_anchors ? select_anchors_random(records, o.alpha, o.beta, o.seed)
                                    : select_anchors(records, o.alpha, o.beta);
  std::ostringstream text;
  write_anchors(set, text);
  emit(o, text.str(), out);
  return 0;
}

int score_cmd(const Options& o, std::ostream& out) {
  const auto comparator_cfg = comparator_config(o);
  std::vector<ImageRecord> records;
  if (!o.datasets.empty()) records = load_one(single_dataset(o));
  else if (comparator_cfg.backend == Backend::oracle) throw ValidationError("the oracle comparator needs --dataset");

  const auto anchors = load_anchors(o.anchors);
  std::vector<std::string> targets = o.images;
  if (targets.empty()) {
    if (records.empty()) throw ValidationError("give --image or --dataset");
    const auto anchor_ids = anchors.ids();
    for (const auto& r : records) {
      if (std::find(anchor_ids.begin(), anchor_ids.end(), r.image_id) == anchor_ids.end()) targets.push_back(r.image_id);
    }
  }

  const auto comparator = make_comparator(comparator_cfg, records);
  const AnchorScorer scorer(anchors, *comparator, solver_config(o), o.count ? MatrixKind::count : MatrixKind::probability,
                            o.symmetrize);
  std::vector<double> scores(targets.size());
  parallel_for(targets.size(), o.jobs, [&](std::size_t i) { scores[i] = scorer.score(targets[i]); });

  std::ostringstream text;
  text << "image_id,score\n";
  for (std::size_t i = 0; i < targets.size(); ++i) text << targets[i] << ',' << format_real(scores[i]) << '\n';
  emit(o, text.str(), out);
  return 0;
}

// Square CSV matrix with an optional header row of item ids.
std::pair<std::vector<std::string>, std::vector<std::vector<double>>> read_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open matrix " + path);
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    std::vector<double> values;
    bool numeric = true;
    for (const auto& c : cells) {
      double v = 0.0;
      const auto r = std::from_chars(c.data(), c.data() + c.size(), v);
      if (r.ec != std::errc() || r.ptr != c.data() + c.size()) {
        numeric = false;
        break;
      }
      values.push_back(v);
    }
    if (!numeric) {
      if (rows.empty() && ids.empty()) {
        ids = cells;
        continue;
      }
      throw ParseError("matrix: non-numeric entry at row " + std::to_string(row), row);
    }
    rows.push_back(std::move(values));
  }
  if (rows.size() < 2) throw ValidationError("matrix must have at least two rows");
  if (ids.empty()) {
    for (std::size_t i = 0; i < rows.size(); ++i) ids.push_back(std::to_string(i));
  }
  if (ids.size() != rows.size()) throw ValidationError("matrix header names " + std::to_string(ids.size()) +
                                                       " items but has " + std::to_string(rows.size()) + " rows");
  return {ids, rows};
}

int solve_cmd(const Options& o, std::ostream& out, std::ostream& err) {
  const auto [ids, rows] = read_matrix(o.matrix);
  const auto cfg = solver_config(o);
  const auto report = o.count ? solve_map_report(CountMatrix::from_rows(rows), cfg)
                              : solve_map_report(PreferenceMatrix::from_rows(rows), cfg);
  for (const auto& w : report.warnings) err << "warning: " << w << '\n';
  std::ostringstream text;
  text << "image_id,score\n";
  for (std::size_t i = 0; i < ids.size(); ++i) text << ids[i] << ',' << format_real(report.scores.values[i]) << '\n';
  emit(o, text.str(), out);
  return 0;
}

ExperimentConfig experiment_from_flags(const Options& o) {
  ExperimentConfig cfg;
  cfg.comparator = comparator_config(o);
  cfg.anchor_method = o.random_anchors ? AnchorMethod::random : AnchorMethod::min_variance;
  cfg.alpha = o.alpha;
  cfg.beta = o.beta;
  cfg.splits = o.splits;
  cfg.seed = o.seed;
  cfg.solver = solver_config(o);
  cfg.matrix = o.count ? MatrixKind::count : MatrixKind::probability;
  cfg.symmetrize = o.symmetrize;
  cfg.logistic_plcc = o.logistic_plcc;
  cfg.accuracy_pairs = o.accuracy_pairs;
  cfg.jobs = o.jobs;
  if (!o.split_file.empty()) cfg.split_file = o.split_file;
  return cfg;
}

void report(const ExperimentResult& result, const Options& o, std::string_view title, std::ostream& out,
            std::ostream& err) {
  for (const auto& w : result.warnings) err << "warning: " << w << '\n';
  if (!o.out.empty()) write_reports(result, o.out);
  out << format_summary_table(result, title);
}

int simulate_cmd(const Options& o, std::ostream& out, std::ostream& err) {
  std::vector<ImageRecord> records;
  if (!o.datasets.empty()) {
    records = load_one(single_dataset(o));
  } else {
    SyntheticSpec spec;
    spec.count = o.n;
    spec.mos_min = o.mos_min;
    spec.mos_max = o.mos_max;
    spec.sigma = o.sigma;
    spec.sigma_spread = o.sigma_spread;
    spec.seed = o.seed;
    records = make_synthetic_dataset(spec);
  }
  auto cfg = experiment_from_flags(o);
  if (cfg.comparator.backend != Backend::oracle) throw ValidationError("simulate drives the oracle comparator only");
  report(run_experiment(records, cfg), o, "simulation", out, err);
  return 0;
}

int evaluate_cmd(const Options& o, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    cfg = load_experiment_config(o.config);
    if (!o.datasets.empty()) cfg.dataset = single_dataset(o);
    if (o.jobs) cfg.jobs = o.jobs;
  } else {
    cfg = experiment_from_flags(o);
    cfg.dataset = single_dataset(o);
  }
  if (cfg.dataset.empty()) throw ValidationError("no dataset given");
  cfg.comparator.validate();
  const std::string tag = cfg.dataset_tag.empty() ? dataset_tag_from_path(cfg.dataset) : cfg.dataset_tag;
  const auto records = load_dataset(cfg.dataset, tag);
  report(run_experiment(records, cfg), o, tag, out, err);
  return 0;
}

// --- flag wiring -----------------------------------------------------------

void add_shared(CLI::App* app, Options& o) {
  app->add_option("--seed", o.seed, "Random seed");
  app->add_option("--out", o.out, "Output file or directory");
  app->add_option("--jobs", o.jobs, "Worker threads (0 = logical cores)")->check(CLI::NonNegativeNumber);
}

void add_comparator(CLI::App* app, Options& o) {
  app->add_option("--comparator", o.comparator, "oracle, cache or remote")
      ->check(CLI::IsMember({"oracle", "cache", "remote"}));
  app->add_option("--comparator-mode", o.comparator_mode, "Oracle mode: deterministic or stochastic")
      ->check(CLI::IsMember({"deterministic", "stochastic"}));
  app->add_option("--noise", o.noise, "Stochastic oracle logit noise")->check(CLI::NonNegativeNumber);
  app->add_option("--cache", o.cache, "Precomputed logits (JSON Lines)");
  app->add_option("--endpoint", o.endpoint, "Comparator service base URL")->envname("PAIRSCALE_ENDPOINT");
  app->add_option("--image-root", o.image_root, "Directory prefixed to image ids for the remote comparator");
  app->add_option("--max-in-flight", o.max_in_flight, "Concurrent remote requests")->check(CLI::PositiveNumber);
}

void add_solver(CLI::App* app, Options& o) {
  app->add_option("--prior-weight", o.prior_weight, "Gaussian prior weight")->check(CLI::NonNegativeNumber);
  app->add_flag("--no-prior", o.no_prior, "Maximum likelihood without a prior");
}

void add_experiment(CLI::App* app, Options& o) {
  add_comparator(app, o);
  add_solver(app, o);
  app->add_option("--alpha", o.alpha, "Quality intervals")->check(CLI::PositiveNumber);
  app->add_option("--beta", o.beta, "Anchors per interval")->check(CLI::PositiveNumber);
  app->add_flag("--random", o.random_anchors, "Random anchors instead of minimum variance");
  app->add_flag("--symmetrize", o.symmetrize, "Compare both presentation orders");
  app->add_flag("--count", o.count, "Use the hard-decision count matrix");
  app->add_option("--splits", o.splits, "Random splits")->check(CLI::PositiveNumber);
  app->add_option("--split-file", o.split_file, "Explicit split (image_id,split)");
  app->add_flag("--logistic-plcc", o.logistic_plcc, "Fit a 4-parameter logistic before PLCC");
  app->add_option("--accuracy-pairs", o.accuracy_pairs, "Test pairs for level accuracy per split");
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Anchor-based image quality scaling from pairwise comparisons", "pairscale"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-corpus", "Generate the comparative instruction corpus");
  add_shared(gen, o);
  gen->add_option("--dataset", o.datasets, "Dataset CSV (repeatable)")->required();
  gen->add_option("--pairs", o.pairs, "Total pairs")->required();
  gen->add_flag("--balance-levels", o.balance_levels, "Balance comparative levels");

  auto* anchors = app.add_subcommand("select-anchors", "Select anchor images");
  add_shared(anchors, o);
  anchors->add_option("--dataset", o.datasets, "Dataset CSV")->required();
  anchors->add_option("--alpha", o.alpha, "Quality intervals")->check(CLI::PositiveNumber);
  anchors->add_option("--beta", o.beta, "Anchors per interval")->check(CLI::PositiveNumber);
  anchors->add_flag("--random", o.random_anchors, "Random anchors instead of minimum variance");

  auto* score = app.add_subcommand("score", "Score images against anchors");
  add_shared(score, o);
  add_comparator(score, o);
  add_solver(score, o);
  score->add_option("--dataset", o.datasets, "Dataset CSV");
  score->add_option("--anchors", o.anchors, "Anchor file")->required();
  score->add_option("--image", o.images, "Image id to score (repeatable; default all non-anchors)");
  score->add_flag("--symmetrize", o.symmetrize, "Compare both presentation orders");
  score->add_flag("--count", o.count, "Use the hard-decision count matrix");

  auto* solve = app.add_subcommand("solve", "Solve a preference or count matrix");
  add_shared(solve, o);
  add_solver(solve, o);
  solve->add_option("--matrix", o.matrix, "Square CSV matrix")->required();
  solve->add_flag("--count", o.count, "Treat the input as a count matrix");

  auto* simulate = app.add_subcommand("simulate", "Run the pipeline on a synthetic dataset");
  add_shared(simulate, o);
  add_experiment(simulate, o);
  simulate->add_option("--dataset", o.datasets, "Use this dataset instead of a synthetic one");
  simulate->add_option("--n", o.n, "Synthetic images")->check(CLI::PositiveNumber);
  simulate->add_option("--sigma", o.sigma, "Rating std")->check(CLI::NonNegativeNumber);
  simulate->add_option("--sigma-spread", o.sigma_spread, "Half-width of the per-image std range")
      ->check(CLI::NonNegativeNumber);
  simulate->add_option("--mos-min", o.mos_min, "Lower MOS bound");
  simulate->add_option("--mos-max", o.mos_max, "Upper MOS bound");

  auto* evaluate = app.add_subcommand("evaluate", "Multi-split evaluation on a dataset");
  add_shared(evaluate, o);
  add_experiment(evaluate, o);
  evaluate->add_option("--dataset", o.datasets, "Dataset CSV");
  evaluate->add_option("--config", o.config, "Experiment description file");

  std::vector<const char*> argv{"pairscale"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  if (gen->parsed()) return gen_corpus(o, out);
  if (anchors->parsed()) return select_anchors_cmd(o, out);
  if (score->parsed()) return score_cmd(o, out);
  if (solve->parsed()) return solve_cmd(o, out, err);
  if (simulate->parsed()) return simulate_cmd(o, out, err);
  return evaluate_cmd(o, out, err);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const SplitError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ComparatorError& e) {
    err << "error (" << error_kind_name(e.kind()) << "): " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace pairscale::cli
