#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pairscale/dataset.hpp"

namespace pairscale {

struct Anchor {
  std::string image_id;
  int interval = 0;

  friend bool operator==(const Anchor&, const Anchor&) = default;
};

// Anchors sorted by (interval, image_id).
struct AnchorSet {
  std::vector<Anchor> anchors;
  int alpha = 1;
  int beta = 1;
  std::string dataset;

  std::vector<std::string> ids() const;
  std::size_t size() const { return anchors.size(); }
};

// Equal-width intervals over [min mos, max mos]; each interval is left-closed
// and right-open except the last, which also takes mos == max.
std::vector<int> partition_intervals(std::span<const ImageRecord> records, int alpha);

// Per interval, the beta records with the smallest rating variance (ties by
// image_id). Throws ValidationError naming an interval with fewer than beta
// records.
AnchorSet select_anchors(std::span<const ImageRecord> records, int alpha, int beta);

// Uniform random choice of beta records per interval.
AnchorSet select_anchors_random(std::span<const ImageRecord> records, int alpha, int beta,
                                std::uint64_t seed);

// CSV `image_id,interval_index` preceded by `# alpha=.. beta=.. dataset=..`.
void write_anchors(const AnchorSet& anchors, std::ostream& out);
void save_anchors(const AnchorSet& anchors, const std::filesystem::path& path);
AnchorSet parse_anchors(std::istream& in);
AnchorSet load_anchors(const std::filesystem::path& path);

}  // namespace pairscale
