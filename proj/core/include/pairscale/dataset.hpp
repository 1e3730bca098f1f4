#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pairscale {

// One annotated image of an IQA dataset. `mos` is on the dataset's native
// scale and `std` is the standard deviation of the individual ratings.
struct ImageRecord {
  std::string image_id;
  double mos = 0.0;
  double std = 0.0;
  std::optional<std::string> ref_group;
  std::string dataset;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

// Reads `image_id,mos,std,ref_group`. Throws ParseError naming the row for
// missing columns, non-numeric or negative values and duplicate ids.
std::vector<ImageRecord> load_dataset(const std::filesystem::path& path,
                                      const std::string& dataset_tag);
std::vector<ImageRecord> parse_dataset(std::istream& in,
                                       const std::string& dataset_tag);

// Writes the canonical form read by load_dataset (shortest round-trip reals).
void save_dataset(std::span<const ImageRecord> records,
                  const std::filesystem::path& path);
void write_dataset(std::span<const ImageRecord> records, std::ostream& out);

// Dataset tag derived from a file name: the stem of the path.
std::string dataset_tag_from_path(const std::filesystem::path& path);

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct SplitAssignment {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
};

// Random split at group granularity. With `group_by_ref` every ref_group lands
// in exactly one part; otherwise each record is its own group. Group counts per
// part follow the ratios with largest-remainder rounding.
SplitAssignment split_dataset(std::span<const ImageRecord> records,
                              const SplitRatios& ratios, std::uint64_t seed,
                              bool group_by_ref);

// Explicit split file: CSV `image_id,split` with split in {train,val,test}.
// Every record must be listed exactly once.
SplitAssignment load_split_file(const std::filesystem::path& path,
                                std::span<const ImageRecord> records);

// Largest-remainder apportionment of `total` units over `weights`.
std::vector<std::size_t> largest_remainder(std::size_t total,
                                           std::span<const double> weights);

// Records whose ids appear in `ids`, in the order of `ids`.
std::vector<ImageRecord> select_records(std::span<const ImageRecord> records,
                                        std::span<const std::string> ids);

}  // namespace pairscale
