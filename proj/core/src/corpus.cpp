#include "pairscale/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_set>

#include <json.hpp>

#include "pairscale/error.hpp"

namespace pairscale {
namespace {

// Enumerating every ordered pair is cheaper than rejection below this size.
constexpr std::size_t kEnumerateLimit = std::size_t{1} << 22;

std::uint64_t encode(std::size_t i, std::size_t j, std::size_t n) { return i * n + j; }

IndexPair draw_pair(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::uniform_int_distribution<std::size_t> second(0, n - 2);
  const auto i = first(rng);
  auto j = second(rng);
  if (j >= i) ++j;
  return {i, j};
}

std::vector<IndexPair> all_pairs(std::size_t n) {
  std::vector<IndexPair> pairs;
  pairs.reserve(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

// Moves a uniform random subset of size k to the front.
template <typename T>
void partial_shuffle(std::vector<T>& items, std::size_t k, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < k && i + 1 < items.size(); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
}

// Water-filling: equal shares, capped by availability, slack passed on.
std::array<std::size_t, kLevelCount> level_targets(const std::array<std::size_t, kLevelCount>& available,
                                                   std::size_t n) {
  std::array<std::size_t, kLevelCount> order{0, 1, 2, 3, 4};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return available[a] < available[b]; });
  std::array<std::size_t, kLevelCount> targets{};
  std::size_t remaining = n;
  for (std::size_t pos = 0; pos < kLevelCount; ++pos) {
    const std::size_t left = kLevelCount - pos;
    const std::size_t share = (remaining + left - 1) / left;
    const auto k = order[pos];
    targets[k] = std::min(available[k], share);
    remaining -= targets[k];
  }
  return targets;
}

Level pair_level(std::span<const ImageRecord> records, const IndexPair& p) {
  return classify_level(quality_difference(records[p.first], records[p.second]));
}

std::vector<IndexPair> sample_uniform(std::size_t n_records, std::size_t count, std::mt19937_64& rng) {
  const std::size_t total = n_records * (n_records - 1);
  if (total <= kEnumerateLimit || total <= 4 * count) {
    auto pairs = all_pairs(n_records);
    partial_shuffle(pairs, count, rng);
    pairs.resize(count);
    return pairs;
  }
  std::vector<IndexPair> out;
  out.reserve(count);
  std::unordered_set<std::uint64_t> used;
  while (out.size() < count) {
    const auto p = draw_pair(rng, n_records);
    if (used.insert(encode(p.first, p.second, n_records)).second) out.push_back(p);
  }
  return out;
}

std::vector<IndexPair> sample_balanced(std::span<const ImageRecord> records, std::size_t count,
                                       std::mt19937_64& rng) {
  const std::size_t n = records.size();
  const std::size_t total = n * (n - 1);
  if (total <= kEnumerateLimit) {
    std::array<std::vector<IndexPair>, kLevelCount> buckets;
    for (const auto& p : all_pairs(n)) buckets[static_cast<std::size_t>(pair_level(records, p))].push_back(p);
    std::array<std::size_t, kLevelCount> available{};
    for (std::size_t k = 0; k < kLevelCount; ++k) available[k] = buckets[k].size();
    const auto targets = level_targets(available, count);

    std::vector<IndexPair> out;
    out.reserve(count);
    for (std::size_t k = 0; k < kLevelCount; ++k) {
      partial_shuffle(buckets[k], targets[k], rng);
      out.insert(out.end(), buckets[k].begin(), buckets[k].begin() + static_cast<std::ptrdiff_t>(targets[k]));
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
  }

  // Rejection with an equal per-level quota; if the budget runs out the
  // remainder is drawn without quota.
  const std::size_t quota = (count + kLevelCount - 1) / kLevelCount;
  std::array<std::size_t, kLevelCount> have{};
  std::vector<IndexPair> out;
  out.reserve(count);
  std::unordered_set<std::uint64_t> used;
  const std::size_t budget = 50 * count + 1000;
  for (std::size_t attempt = 0; attempt < budget && out.size() < count; ++attempt) {
    const auto p = draw_pair(rng, n);
    const auto k = static_cast<std::size_t>(pair_level(records, p));
    if (have[k] >= quota) continue;
    if (!used.insert(encode(p.first, p.second, n)).second) continue;
    ++have[k];
    out.push_back(p);
  }
  while (out.size() < count) {
    const auto p = draw_pair(rng, n);
    if (used.insert(encode(p.first, p.second, n)).second) out.push_back(p);
  }
  return out;
}

}  // namespace

QualityDifference quality_difference(const ImageRecord& first, const ImageRecord& second) {
  if (first.dataset != second.dataset) {
    throw ValidationError("cross-dataset comparison forbidden: '" + first.dataset + "' vs '" +
                          second.dataset + "'");
  }
  QualityDifference d;
  d.mean_diff = first.mos - second.mos;
  d.std_diff = std::max(std::hypot(first.std, second.std), kStdDiffFloor);
  return d;
}

Level classify_level(const QualityDifference& d) {
  const double m = d.mean_diff;
  const double s = d.std_diff;
  if (m > 2.0 * s) return Level::inferior;
  if (m > s) return Level::worse;
  if (m > -s) return Level::similar;
  if (m > -2.0 * s) return Level::better;
  return Level::superior;
}

std::vector<IndexPair> sample_pairs(std::span<const ImageRecord> records, const PairSampling& sampling) {
  const std::size_t n = records.size();
  const std::size_t total = n < 2 ? 0 : n * (n - 1);
  if (sampling.count > total) {
    throw ValidationError("requested " + std::to_string(sampling.count) +
                          " pairs but at most " + std::to_string(total) +
                          " distinct ordered pairs are available");
  }
  for (const auto& r : records) {
    if (r.dataset != records.front().dataset) throw ValidationError("cross-dataset comparison forbidden");
  }
  if (sampling.count == 0) return {};
  std::mt19937_64 rng(sampling.seed);
  return sampling.balance_levels ? sample_balanced(records, sampling.count, rng)
                                 : sample_uniform(n, sampling.count, rng);
}

std::string render_response(Level level) {
  std::string out = "The quality of the second image is ";
  out += level_name(level);
  out += ' ';
  out += level_connective(level);
  out += " the first image.";
  return out;
}

InstructionPair render_pair(const ImageRecord& first, const ImageRecord& second) {
  InstructionPair pair;
  pair.level = classify_level(quality_difference(first, second));
  pair.first_id = first.image_id;
  pair.second_id = second.image_id;
  pair.instruction = std::string(kInstructionTemplate);
  pair.response = render_response(pair.level);
  pair.dataset = first.dataset;
  return pair;
}

std::string corpus_line(const InstructionPair& pair) {
  nlohmann::ordered_json j;
  j["first_image"] = pair.first_id;
  j["second_image"] = pair.second_id;
  j["instruction"] = pair.instruction;
  j["response"] = pair.response;
  j["level"] = std::string(level_name(pair.level));
  j["dataset"] = pair.dataset;
  return j.dump();
}

std::size_t emit_corpus(std::span<const InstructionPair> pairs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write corpus file " + path.string());
  for (const auto& p : pairs) out << corpus_line(p) << '\n';
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
  return pairs.size();
}

std::vector<InstructionPair> generate_corpus(std::span<const std::vector<ImageRecord>> datasets,
                                             std::size_t total_pairs, std::uint64_t seed,
                                             bool balance_levels) {
  std::vector<double> sizes;
  for (const auto& d : datasets) sizes.push_back(static_cast<double>(d.size()));
  const auto budget = largest_remainder(total_pairs, sizes);

  std::vector<InstructionPair> corpus;
  corpus.reserve(total_pairs);
  for (std::size_t k = 0; k < datasets.size(); ++k) {
    const auto& records = datasets[k];
    PairSampling sampling{budget[k], seed + k, balance_levels};
    for (const auto& [i, j] : sample_pairs(records, sampling)) {
      corpus.push_back(render_pair(records[i], records[j]));
    }
  }
  return corpus;
}

}  // namespace pairscale
