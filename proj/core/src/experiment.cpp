#include "pairscale/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "pairscale/anchors.hpp"
#include "pairscale/corpus.hpp"
#include "pairscale/metrics.hpp"
#include "pairscale/parallel.hpp"
#include "text.hpp"

namespace pairscale {

// --- configuration ---------------------------------------------------------

namespace {

bool parse_bool(std::string_view value, const std::string& key) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ValidationError("config: '" + key + "' expects a boolean, got '" + std::string(value) + "'");
}

double parse_real_value(std::string_view value, const std::string& key) {
  const auto v = text::parse_real(value);
  if (!v || !std::isfinite(*v)) throw ValidationError("config: '" + key + "' expects a number");
  return *v;
}

std::int64_t parse_int_value(std::string_view value, const std::string& key) {
  const auto v = text::parse_int(value);
  if (!v) throw ValidationError("config: '" + key + "' expects an integer");
  return *v;
}

std::size_t parse_count(std::string_view value, const std::string& key) {
  const auto v = parse_int_value(value, key);
  if (v < 0) throw ValidationError("config: '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

}  // namespace

ExperimentConfig parse_experiment_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    auto content = std::string_view(line);
    if (const auto hash = content.find('#'); hash != std::string_view::npos) content = content.substr(0, hash);
    content = text::trim(content);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("config: expected 'key = value' at row " + std::to_string(row), row);
    }
    const std::string key(text::trim(content.substr(0, eq)));
    const auto value = text::trim(content.substr(eq + 1));

    if (key == "dataset") cfg.dataset = std::string(value);
    else if (key == "dataset_tag") cfg.dataset_tag = std::string(value);
    else if (key == "split_file") cfg.split_file = std::string(value);
    else if (key == "comparator") {
      const auto b = parse_backend(value);
      if (!b) throw ValidationError("config: unknown comparator '" + std::string(value) + "'");
      cfg.comparator.backend = *b;
    } else if (key == "oracle_mode") {
      const auto m = parse_oracle_mode(value);
      if (!m) throw ValidationError("config: unknown oracle_mode '" + std::string(value) + "'");
      cfg.comparator.oracle_mode = *m;
    } else if (key == "noise") cfg.comparator.noise_scale = parse_real_value(value, key);
    else if (key == "cache") cfg.comparator.cache_path = std::string(value);
    else if (key == "endpoint") cfg.comparator.endpoint = std::string(value);
    else if (key == "image_root") cfg.comparator.image_root = std::string(value);
    else if (key == "max_in_flight") cfg.comparator.max_in_flight = static_cast<int>(parse_int_value(value, key));
    else if (key == "anchors") {
      if (value == "variance") cfg.anchor_method = AnchorMethod::min_variance;
      else if (value == "random") cfg.anchor_method = AnchorMethod::random;
      else throw ValidationError("config: anchors must be 'variance' or 'random'");
    } else if (key == "alpha") cfg.alpha = static_cast<int>(parse_int_value(value, key));
    else if (key == "beta") cfg.beta = static_cast<int>(parse_int_value(value, key));
    else if (key == "splits") cfg.splits = static_cast<int>(parse_int_value(value, key));
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_count(value, key));
    else if (key == "group_by_ref") cfg.group_by_ref = parse_bool(value, key);
    else if (key == "ratios") {
      const auto parts = text::split(value, ',');
      if (parts.size() != 3) throw ValidationError("config: ratios expects three comma-separated numbers");
      cfg.ratios = {parse_real_value(parts[0], key), parse_real_value(parts[1], key),
                    parse_real_value(parts[2], key)};
    } else if (key == "prior") {
      if (value == "gaussian") cfg.solver.prior = Prior::gaussian;
      else if (value == "none") cfg.solver.prior = Prior::none;
      else throw ValidationError("config: prior must be 'gaussian' or 'none'");
    } else if (key == "prior_weight") cfg.solver.prior_weight = parse_real_value(value, key);
    else if (key == "tol") cfg.solver.tol = parse_real_value(value, key);
    else if (key == "max_iter") cfg.solver.max_iter = static_cast<int>(parse_int_value(value, key));
    else if (key == "matrix") {
      if (value == "probability") cfg.matrix = MatrixKind::probability;
      else if (value == "count") cfg.matrix = MatrixKind::count;
      else throw ValidationError("config: matrix must be 'probability' or 'count'");
    } else if (key == "symmetrize") cfg.symmetrize = parse_bool(value, key);
    else if (key == "logistic_plcc") cfg.logistic_plcc = parse_bool(value, key);
    else if (key == "accuracy_pairs") cfg.accuracy_pairs = parse_count(value, key);
    else if (key == "jobs") cfg.jobs = static_cast<unsigned>(parse_count(value, key));
    else throw ValidationError("config: unknown key '" + key + "' at row " + std::to_string(row));
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open experiment config " + path.string());
  auto cfg = parse_experiment_config(in);
  const auto base = path.parent_path();
  auto resolve = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  resolve(cfg.dataset);
  if (cfg.split_file) resolve(*cfg.split_file);
  if (cfg.comparator.cache_path) resolve(*cfg.comparator.cache_path);
  if (!cfg.comparator.image_root.empty()) resolve(cfg.comparator.image_root);
  return cfg;
}

// --- experiment ------------------------------------------------------------

namespace {

void validate(const ExperimentConfig& cfg) {
  if (cfg.alpha < 1 || cfg.beta < 1) throw ValidationError("alpha and beta must be at least 1");
  if (cfg.splits < 1) throw ValidationError("splits must be at least 1");
  cfg.solver.validate();
}

MetricReport run_split(int split_id, std::span<const ImageRecord> records, const SplitAssignment& split,
                       const ExperimentConfig& cfg, const Comparator& comparator, SplitDetail& detail,
                       std::vector<std::string>& warnings) {
  const std::uint64_t split_seed = cfg.seed + static_cast<std::uint64_t>(split_id);

  std::vector<std::string> train_ids = split.train;
  train_ids.insert(train_ids.end(), split.val.begin(), split.val.end());
  const auto train = select_records(records, train_ids);
  const auto test = select_records(records, split.test);
  if (test.size() < 2) throw ValidationError("test split has fewer than two images");

  const AnchorSet anchors = cfg.anchor_method == AnchorMethod::min_variance
                                ? select_anchors(train, cfg.alpha, cfg.beta)
                                : select_anchors_random(train, cfg.alpha, cfg.beta, text::splitmix64(split_seed));
  const AnchorScorer scorer(anchors, comparator, cfg.solver, cfg.matrix, cfg.symmetrize);

  detail.split_id = split_id;
  detail.anchor_ids = anchors.ids();
  detail.test_ids.clear();
  detail.test_mos.clear();
  for (const auto& r : test) {
    detail.test_ids.push_back(r.image_id);
    detail.test_mos.push_back(r.mos);
  }
  detail.test_scores.assign(test.size(), 0.0);
  parallel_for(test.size(), cfg.jobs, [&](std::size_t i) { detail.test_scores[i] = scorer.score(test[i].image_id); });

  MetricReport report;
  report.split_id = split_id;
  report.n_items = test.size();
  report.srcc = srcc(detail.test_scores, detail.test_mos);
  const auto p = plcc_report(detail.test_scores, detail.test_mos, cfg.logistic_plcc);
  if (cfg.logistic_plcc && !p.logistic_applied) {
    warnings.push_back("split " + std::to_string(split_id) + ": logistic fit failed, raw PLCC reported");
  }
  report.plcc = p.value;

  if (cfg.accuracy_pairs > 0) {
    const std::size_t available = test.size() * (test.size() - 1);
    const PairSampling sampling{std::min(cfg.accuracy_pairs, available), split_seed, false};
    const auto pairs = sample_pairs(test, sampling);
    std::vector<Level> predicted(pairs.size());
    std::vector<Level> truth(pairs.size());
    parallel_for(pairs.size(), cfg.jobs, [&](std::size_t i) {
      const auto& [a, b] = pairs[i];
      predicted[i] = top_level(comparator.compare(test[a].image_id, test[b].image_id));
      truth[i] = classify_level(quality_difference(test[a], test[b]));
    });
    report.accuracy = level_accuracy(predicted, truth);
  }
  return report;
}

}  // namespace

ExperimentResult run_experiment(std::span<const ImageRecord> records, const ExperimentConfig& cfg,
                                const Comparator& comparator) {
  validate(cfg);
  const bool group_by_ref =
      cfg.group_by_ref.value_or(!records.empty() && std::all_of(records.begin(), records.end(), [](const auto& r) {
        return r.ref_group.has_value();
      }));

  ExperimentResult result;
  int splits = cfg.splits;
  if (cfg.split_file && splits != 1) {
    result.warnings.push_back("explicit split file given: running a single split");
    splits = 1;
  }

  for (int k = 0; k < splits; ++k) {
    SplitDetail detail;
    try {
      const auto assignment = cfg.split_file ? load_split_file(*cfg.split_file, records)
                                             : split_dataset(records, cfg.ratios,
                                                             cfg.seed + static_cast<std::uint64_t>(k), group_by_ref);
      result.splits.push_back(run_split(k, records, assignment, cfg, comparator, detail, result.warnings));
    } catch (const Error& e) {
      throw SplitError(k, "split " + std::to_string(k) + ": " + e.what());
    }
    result.details.push_back(std::move(detail));
  }

  auto column = [&](auto get) {
    std::vector<double> v;
    for (const auto& r : result.splits) v.push_back(get(r));
    return median(std::move(v));
  };
  result.median.split_id = -1;
  result.median.n_items = static_cast<std::size_t>(column([](const MetricReport& r) { return static_cast<double>(r.n_items); }));
  result.median.srcc = column([](const MetricReport& r) { return r.srcc; });
  result.median.plcc = column([](const MetricReport& r) { return r.plcc; });
  std::vector<double> acc;
  for (const auto& r : result.splits) {
    if (r.accuracy) acc.push_back(*r.accuracy);
  }
  if (!acc.empty()) result.median.accuracy = median(std::move(acc));
  return result;
}

ExperimentResult run_experiment(std::span<const ImageRecord> records, const ExperimentConfig& cfg) {
  auto comparator_config = cfg.comparator;
  const auto comparator = make_comparator(comparator_config, records);
  return run_experiment(records, cfg, *comparator);
}

// --- reports ---------------------------------------------------------------

namespace {

constexpr std::string_view kMetricsHeader = "split,n_items,srcc,plcc,accuracy";

void write_metric_row(std::ostream& out, const std::string& label, const MetricReport& r) {
  out << label << ',' << r.n_items << ',' << text::format_real(r.srcc) << ',' << text::format_real(r.plcc) << ','
      << (r.accuracy ? text::format_real(*r.accuracy) : "") << '\n';
}

std::ofstream open_report(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write report " + path.string());
  return out;
}

}  // namespace

void write_summary_csv(const ExperimentResult& result, std::ostream& out) {
  out << kMetricsHeader << '\n';
  write_metric_row(out, "median", result.median);
}

void write_reports(const ExperimentResult& result, const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError("cannot create report directory " + directory.string() + ": " + ec.message());

  {
    auto out = open_report(directory / "metrics.csv");
    out << kMetricsHeader << '\n';
    for (const auto& r : result.splits) write_metric_row(out, std::to_string(r.split_id), r);
  }
  {
    auto out = open_report(directory / "summary.csv");
    write_summary_csv(result, out);
  }
  for (const auto& d : result.details) {
    char name[32];
    std::snprintf(name, sizeof name, "split_%02d.csv", d.split_id);
    auto out = open_report(directory / name);
    out << "image_id,mos,score\n";
    for (std::size_t i = 0; i < d.test_ids.size(); ++i) {
      out << d.test_ids[i] << ',' << text::format_real(d.test_mos[i]) << ',' << text::format_real(d.test_scores[i])
          << '\n';
    }
  }
  {
    auto out = open_report(directory / "summary.txt");
    out << format_summary_table(result, "pairscale experiment");
  }
}

std::string format_summary_table(const ExperimentResult& result, std::string_view title) {
  std::ostringstream os;
  char line[128];
  os << title << '\n';
  std::snprintf(line, sizeof line, "%-8s %8s %8s %8s %9s\n", "split", "n_items", "SRCC", "PLCC", "accuracy");
  os << line;
  auto row = [&](const std::string& label, const MetricReport& r) {
    char acc[32] = "-";
    if (r.accuracy) std::snprintf(acc, sizeof acc, "%.4f", *r.accuracy);
    std::snprintf(line, sizeof line, "%-8s %8zu %8.4f %8.4f %9s\n", label.c_str(), r.n_items, r.srcc, r.plcc, acc);
    os << line;
  };
  for (const auto& r : result.splits) row(std::to_string(r.split_id), r);
  row("median", result.median);
  return os.str();
}

// --- synthetic data --------------------------------------------------------

std::vector<ImageRecord> make_synthetic_dataset(const SyntheticSpec& spec) {
  if (!(spec.mos_max > spec.mos_min)) throw ValidationError("synthetic MOS range must be non-empty");
  if (!(spec.sigma >= 0.0) || !(spec.sigma_spread >= 0.0)) throw ValidationError("sigma must be non-negative");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> mos(spec.mos_min, spec.mos_max);
  std::uniform_real_distribution<double> jitter(-spec.sigma_spread, spec.sigma_spread);

  int width = 3;
  for (std::size_t limit = 1000; spec.count > limit; limit *= 10) ++width;

  std::vector<ImageRecord> records;
  records.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    ImageRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "img_%0*zu", width, i);
    r.image_id = id;
    r.mos = mos(rng);
    r.std = spec.sigma_spread > 0.0 ? std::max(0.0, spec.sigma + jitter(rng)) : spec.sigma;
    r.dataset = spec.tag;
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace pairscale
