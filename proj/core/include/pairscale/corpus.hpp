#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pairscale/dataset.hpp"
#include "pairscale/levels.hpp"

namespace pairscale {

inline constexpr double kStdDiffFloor = 1e-6;

// Gaussian quality differential of an ordered pair (first minus second).
struct QualityDifference {
  double mean_diff = 0.0;
  double std_diff = kStdDiffFloor;
};

struct InstructionPair {
  std::string first_id;
  std::string second_id;
  Level level = Level::similar;
  std::string instruction;
  std::string response;
  std::string dataset;
};

inline constexpr std::string_view kInstructionTemplate =
    "Compared with the first image <img1>, how is the quality of the second image <img2>?";

// Throws ValidationError for records of different datasets.
QualityDifference quality_difference(const ImageRecord& first, const ImageRecord& second);

// Empirical-rule banding at +-std and +-2 std, with the half-open bands
//   inferior: mean > 2s        worse:    s < mean <= 2s
//   similar: -s < mean <= s    better: -2s < mean <= -s
//   superior: mean <= -2s
Level classify_level(const QualityDifference& d);

using IndexPair = std::pair<std::size_t, std::size_t>;

struct PairSampling {
  std::size_t count = 0;
  std::uint64_t seed = 0;
  bool balance_levels = false;
};

// Distinct ordered pairs (indices into `records`) drawn uniformly without
// replacement. With balance_levels the draw is rejection-resampled so that
// the most frequent level occurs at most twice as often as the rarest one
// whenever the dataset admits it.
std::vector<IndexPair> sample_pairs(std::span<const ImageRecord> records,
                                    const PairSampling& sampling);

InstructionPair render_pair(const ImageRecord& first, const ImageRecord& second);

std::string render_response(Level level);

// JSON Lines record with fields in the order first_image, second_image,
// instruction, response, level, dataset.
std::string corpus_line(const InstructionPair& pair);

// Writes one line per pair and returns the number of lines written.
std::size_t emit_corpus(std::span<const InstructionPair> pairs,
                        const std::filesystem::path& path);

}  // namespace pairscale

namespace pairscale {

// Pairs for several datasets at once: `total_pairs` is apportioned over the
// datasets proportional to their size (largest remainder), each dataset is
// sampled with its own derived seed, and pairs never cross datasets.
std::vector<InstructionPair> generate_corpus(std::span<const std::vector<ImageRecord>> datasets,
                                             std::size_t total_pairs, std::uint64_t seed,
                                             bool balance_levels);

}  // namespace pairscale
