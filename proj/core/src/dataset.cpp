#include "pairscale/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "pairscale/error.hpp"
#include "text.hpp"

namespace pairscale {
namespace {

constexpr std::string_view kHeader = "image_id,mos,std,ref_group";

std::string row_error(std::string_view what, std::size_t row) {
  std::ostringstream os;
  os << what << " at row " << row;
  return os.str();
}

std::string_view strip_bom(std::string_view s) {
  if (s.size() >= 3 && s.substr(0, 3) == "\xEF\xBB\xBF") s.remove_prefix(3);
  return s;
}

}  // namespace

std::vector<ImageRecord> parse_dataset(std::istream& in, const std::string& dataset_tag) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header row", 1);
  const auto header = text::trim(strip_bom(text::strip_cr(line)));
  if (header != kHeader) {
    throw ParseError("header must be '" + std::string(kHeader) + "', got '" + std::string(header) + "'",
                     1);
  }

  std::vector<ImageRecord> records;
  std::unordered_set<std::string> seen;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    const auto content = text::strip_cr(line);
    if (text::trim(content).empty()) continue;
    const auto fields = text::split(content, ',');
    if (fields.size() < 4) throw ParseError(row_error("missing column", row), row);
    if (fields.size() > 4) throw ParseError(row_error("too many columns", row), row);

    ImageRecord rec;
    rec.image_id = std::string(text::trim(fields[0]));
    if (rec.image_id.empty()) throw ParseError(row_error("empty image_id", row), row);
    const auto mos = text::parse_real(fields[1]);
    if (!mos || !std::isfinite(*mos)) throw ParseError(row_error("non-numeric mos", row), row);
    const auto sd = text::parse_real(fields[2]);
    if (!sd || !std::isfinite(*sd)) throw ParseError(row_error("non-numeric std", row), row);
    if (*sd < 0.0) throw ParseError(row_error("negative std", row), row);
    rec.mos = *mos;
    rec.std = *sd;
    if (const auto group = text::trim(fields[3]); !group.empty()) rec.ref_group = std::string(group);
    rec.dataset = dataset_tag;
    if (!seen.insert(rec.image_id).second) {
      throw ParseError(row_error("duplicate image_id '" + rec.image_id + "'", row), row);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<ImageRecord> load_dataset(const std::filesystem::path& path,
                                      const std::string& dataset_tag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file " + path.string());
  try {
    return parse_dataset(in, dataset_tag);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.row());
  }
}

void write_dataset(std::span<const ImageRecord> records, std::ostream& out) {
  out << kHeader << '\n';
  for (const auto& r : records) {
    out << r.image_id << ',' << text::format_real(r.mos) << ',' << text::format_real(r.std) << ','
        << r.ref_group.value_or("") << '\n';
  }
}

void save_dataset(std::span<const ImageRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset file " + path.string());
  write_dataset(records, out);
  if (!out) throw IoError("write failed for " + path.string());
}

std::string dataset_tag_from_path(const std::filesystem::path& path) {
  return path.stem().string();
}

std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const double> weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(weights.size(), 0);
  if (weights.empty() || sum <= 0.0) return counts;

  std::vector<double> remainders(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double quota = static_cast<double>(total) * weights[i] / sum;
    counts[i] = static_cast<std::size_t>(std::floor(quota));
    remainders[i] = quota - std::floor(quota);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[order[k % order.size()]];
  return counts;
}

SplitAssignment split_dataset(std::span<const ImageRecord> records, const SplitRatios& ratios,
                              std::uint64_t seed, bool group_by_ref) {
  const std::array<double, 3> weights{ratios.train, ratios.val, ratios.test};
  for (double w : weights) {
    if (!(w >= 0.0)) throw ValidationError("split ratios must be non-negative");
  }
  if (std::abs(weights[0] + weights[1] + weights[2] - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }

  auto group_of = [&](const ImageRecord& r) -> const std::string& {
    if (!group_by_ref) return r.image_id;
    if (!r.ref_group) throw ValidationError("record '" + r.image_id + "' has no ref_group");
    return *r.ref_group;
  };

  std::set<std::string> group_set;
  for (const auto& r : records) group_set.insert(group_of(r));
  if (group_set.size() < 3) throw ValidationError("insufficient groups");

  std::vector<std::string> groups(group_set.begin(), group_set.end());
  std::mt19937_64 rng(seed);
  std::shuffle(groups.begin(), groups.end(), rng);

  const auto counts = largest_remainder(groups.size(), weights);
  std::unordered_map<std::string, int> part;
  std::size_t g = 0;
  for (int p = 0; p < 3; ++p) {
    for (std::size_t k = 0; k < counts[static_cast<std::size_t>(p)]; ++k) part[groups[g++]] = p;
  }

  SplitAssignment out;
  out.seed = seed;
  for (const auto& r : records) {
    switch (part.at(group_of(r))) {
      case 0: out.train.push_back(r.image_id); break;
      case 1: out.val.push_back(r.image_id); break;
      default: out.test.push_back(r.image_id); break;
    }
  }
  return out;
}

SplitAssignment load_split_file(const std::filesystem::path& path,
                                std::span<const ImageRecord> records) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open split file " + path.string());
  std::string line;
  if (!std::getline(in, line) || text::trim(strip_bom(text::strip_cr(line))) != "image_id,split") {
    throw ParseError(path.string() + ": header must be 'image_id,split'", 1);
  }
  std::unordered_set<std::string> known;
  for (const auto& r : records) known.insert(r.image_id);

  std::unordered_map<std::string, int> part;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    const auto content = text::strip_cr(line);
    if (text::trim(content).empty()) continue;
    const auto fields = text::split(content, ',');
    if (fields.size() != 2) throw ParseError(row_error(path.string() + ": expected 2 columns", row), row);
    const std::string id(text::trim(fields[0]));
    const auto name = text::trim(fields[1]);
    int p = -1;
    if (name == "train") p = 0;
    else if (name == "val") p = 1;
    else if (name == "test") p = 2;
    else throw ParseError(row_error(path.string() + ": unknown split '" + std::string(name) + "'", row), row);
    if (!known.contains(id)) throw ParseError(row_error(path.string() + ": unknown image_id '" + id + "'", row), row);
    if (!part.emplace(id, p).second) throw ParseError(row_error(path.string() + ": duplicate image_id '" + id + "'", row), row);
  }

  SplitAssignment out;
  for (const auto& r : records) {
    const auto it = part.find(r.image_id);
    if (it == part.end()) throw ValidationError(path.string() + ": image '" + r.image_id + "' not assigned");
    (it->second == 0 ? out.train : it->second == 1 ? out.val : out.test).push_back(r.image_id);
  }
  return out;
}

std::vector<ImageRecord> select_records(std::span<const ImageRecord> records,
                                        std::span<const std::string> ids) {
  std::unordered_map<std::string_view, const ImageRecord*> index;
  for (const auto& r : records) index.emplace(r.image_id, &r);
  std::vector<ImageRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw ValidationError("unknown image_id '" + id + "'");
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace pairscale
