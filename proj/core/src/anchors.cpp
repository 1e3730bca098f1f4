#include "pairscale/anchors.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include "pairscale/error.hpp"
#include "text.hpp"

namespace pairscale {
namespace {

void check_alpha_beta(int alpha, int beta) {
  if (alpha < 1) throw ValidationError("alpha must be at least 1");
  if (beta < 1) throw ValidationError("beta must be at least 1");
}

// Record indices per interval, each list sorted by image_id.
std::vector<std::vector<std::size_t>> members_by_interval(std::span<const ImageRecord> records,
                                                          int alpha, int beta) {
  const auto interval = partition_intervals(records, alpha);
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(alpha));
  for (std::size_t i = 0; i < records.size(); ++i) members[static_cast<std::size_t>(interval[i])].push_back(i);
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (members[k].size() < static_cast<std::size_t>(beta)) {
      throw ValidationError("interval " + std::to_string(k) + " has " + std::to_string(members[k].size()) +
                            " records but beta = " + std::to_string(beta));
    }
    std::sort(members[k].begin(), members[k].end(),
              [&](std::size_t a, std::size_t b) { return records[a].image_id < records[b].image_id; });
  }
  return members;
}

AnchorSet make_set(std::span<const ImageRecord> records, int alpha, int beta) {
  AnchorSet set;
  set.alpha = alpha;
  set.beta = beta;
  if (!records.empty()) set.dataset = records.front().dataset;
  return set;
}

void sort_anchors(AnchorSet& set) {
  std::sort(set.anchors.begin(), set.anchors.end(), [](const Anchor& a, const Anchor& b) {
    return std::tie(a.interval, a.image_id) < std::tie(b.interval, b.image_id);
  });
}

}  // namespace

std::vector<std::string> AnchorSet::ids() const {
  std::vector<std::string> out;
  out.reserve(anchors.size());
  for (const auto& a : anchors) out.push_back(a.image_id);
  return out;
}

std::vector<int> partition_intervals(std::span<const ImageRecord> records, int alpha) {
  if (alpha < 1) throw ValidationError("alpha must be at least 1");
  if (records.empty()) throw ValidationError("cannot partition an empty dataset");
  const auto [lo_it, hi_it] = std::minmax_element(
      records.begin(), records.end(), [](const ImageRecord& a, const ImageRecord& b) { return a.mos < b.mos; });
  const double lo = lo_it->mos;
  const double hi = hi_it->mos;
  if (alpha > 1 && hi == lo) throw ValidationError("degenerate MOS range");

  // Inner boundaries lo + k (hi - lo) / alpha, k = 1..alpha-1.
  std::vector<double> bounds;
  for (int k = 1; k < alpha; ++k) bounds.push_back(lo + (hi - lo) * k / alpha);

  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto idx = std::upper_bound(bounds.begin(), bounds.end(), r.mos) - bounds.begin();
    out.push_back(static_cast<int>(idx));
  }
  return out;
}

AnchorSet select_anchors(std::span<const ImageRecord> records, int alpha, int beta) {
  check_alpha_beta(alpha, beta);
  auto members = members_by_interval(records, alpha, beta);
  AnchorSet set = make_set(records, alpha, beta);
  for (std::size_t k = 0; k < members.size(); ++k) {
    auto& m = members[k];
    // Already sorted by id; a stable sort on std keeps id order among ties.
    std::stable_sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) { return records[a].std < records[b].std; });
    for (int b = 0; b < beta; ++b) set.anchors.push_back({records[m[static_cast<std::size_t>(b)]].image_id, static_cast<int>(k)});
  }
  sort_anchors(set);
  return set;
}

AnchorSet select_anchors_random(std::span<const ImageRecord> records, int alpha, int beta,
                                std::uint64_t seed) {
  check_alpha_beta(alpha, beta);
  auto members = members_by_interval(records, alpha, beta);
  AnchorSet set = make_set(records, alpha, beta);
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < members.size(); ++k) {
    auto& m = members[k];
    std::shuffle(m.begin(), m.end(), rng);
    for (int b = 0; b < beta; ++b) set.anchors.push_back({records[m[static_cast<std::size_t>(b)]].image_id, static_cast<int>(k)});
  }
  sort_anchors(set);
  return set;
}

void write_anchors(const AnchorSet& anchors, std::ostream& out) {
  out << "# alpha=" << anchors.alpha << " beta=" << anchors.beta << " dataset=" << anchors.dataset << '\n';
  out << "image_id,interval_index\n";
  for (const auto& a : anchors.anchors) out << a.image_id << ',' << a.interval << '\n';
}

void save_anchors(const AnchorSet& anchors, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write anchor file " + path.string());
  write_anchors(anchors, out);
}

AnchorSet parse_anchors(std::istream& in) {
  AnchorSet set;
  bool header_seen = false;
  std::string line;
  std::size_t row = 0;
  std::unordered_set<std::string> seen;
  while (std::getline(in, line)) {
    ++row;
    const auto content = text::trim(line);
    if (content.empty()) continue;
    if (content.front() == '#') {
      std::istringstream fields{std::string(content.substr(1))};
      std::string kv;
      while (fields >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const auto key = kv.substr(0, eq);
        const auto value = kv.substr(eq + 1);
        if (key == "alpha" || key == "beta") {
          const auto v = text::parse_int(value);
          if (!v || *v < 1) throw ParseError("anchor file: invalid " + key + " at row " + std::to_string(row), row);
          (key == "alpha" ? set.alpha : set.beta) = static_cast<int>(*v);
        } else if (key == "dataset") {
          set.dataset = value;
        }
      }
      continue;
    }
    if (!header_seen) {
      if (content != "image_id,interval_index") {
        throw ParseError("anchor file: header must be 'image_id,interval_index'", row);
      }
      header_seen = true;
      continue;
    }
    const auto fields = text::split(content, ',');
    const auto interval = fields.size() == 2 ? text::parse_int(fields[1]) : std::nullopt;
    if (!interval || *interval < 0) {
      throw ParseError("anchor file: malformed row " + std::to_string(row), row);
    }
    std::string id(text::trim(fields[0]));
    if (!seen.insert(id).second) throw ParseError("anchor file: duplicate anchor '" + id + "'", row);
    set.anchors.push_back({std::move(id), static_cast<int>(*interval)});
  }
  if (!header_seen) throw ParseError("anchor file: missing header", row);
  sort_anchors(set);
  return set;
}

AnchorSet load_anchors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open anchor file " + path.string());
  return parse_anchors(in);
}

}  // namespace pairscale
