#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pairscale/comparator.hpp"
#include "pairscale/dataset.hpp"
#include "pairscale/scaling.hpp"

namespace pairscale {

enum class AnchorMethod { min_variance, random };

struct ExperimentConfig {
  std::filesystem::path dataset;
  std::string dataset_tag;  // defaults to the dataset file stem
  std::optional<std::filesystem::path> split_file;
  ComparatorConfig comparator;
  AnchorMethod anchor_method = AnchorMethod::min_variance;
  int alpha = 5;
  int beta = 1;
  int splits = 10;
  std::uint64_t seed = 0;
  // Group splits by ref_group. Unset: enabled iff every record has a group.
  std::optional<bool> group_by_ref;
  SplitRatios ratios;
  SolverConfig solver;
  MatrixKind matrix = MatrixKind::probability;
  bool symmetrize = false;
  bool logistic_plcc = false;
  std::size_t accuracy_pairs = 1000;
  unsigned jobs = 0;  // 0 = logical cores
};

// `key = value` lines; `#` starts a comment. Unknown keys are rejected.
ExperimentConfig parse_experiment_config(std::istream& in);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct MetricReport {
  int split_id = 0;
  std::size_t n_items = 0;
  double srcc = 0.0;
  double plcc = 0.0;
  std::optional<double> accuracy;
};

struct SplitDetail {
  int split_id = 0;
  std::vector<std::string> anchor_ids;
  std::vector<std::string> test_ids;
  std::vector<double> test_mos;
  std::vector<double> test_scores;
};

struct ExperimentResult {
  std::vector<MetricReport> splits;
  MetricReport median;  // element-wise median; split_id = -1
  std::vector<SplitDetail> details;
  std::vector<std::string> warnings;
};

// A failure inside one split, tagged with its index.
class SplitError : public Error {
 public:
  SplitError(int split_id, const std::string& what) : Error(what), split_id_(split_id) {}
  int split_id() const noexcept { return split_id_; }

 private:
  int split_id_;
};

// Per split: anchors from train+val, anchor matrix, scores for every test
// image, SRCC/PLCC against MOS, and level accuracy on seeded test pairs.
ExperimentResult run_experiment(std::span<const ImageRecord> records,
                                const ExperimentConfig& config, const Comparator& comparator);
// Builds the comparator from config.comparator (the oracle sees `records`).
ExperimentResult run_experiment(std::span<const ImageRecord> records,
                                const ExperimentConfig& config);

// metrics.csv (one row per split), summary.csv (median row) and
// split_<k>.csv (image_id,mos,score per test image) under `directory`.
void write_reports(const ExperimentResult& result, const std::filesystem::path& directory);
void write_summary_csv(const ExperimentResult& result, std::ostream& out);
std::string format_summary_table(const ExperimentResult& result, std::string_view title);

struct SyntheticSpec {
  std::size_t count = 200;
  double mos_min = 0.0;
  double mos_max = 5.0;
  double sigma = 0.25;
  // Per-image std drawn uniformly from [sigma - spread, sigma + spread].
  double sigma_spread = 0.0;
  std::uint64_t seed = 0;
  std::string tag = "synthetic";
};

// MOS ~ U[mos_min, mos_max]; ids img_000, img_001, ...
std::vector<ImageRecord> make_synthetic_dataset(const SyntheticSpec& spec);

}  // namespace pairscale
