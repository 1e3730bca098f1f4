#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>

#include "pairscale/dataset.hpp"
#include "pairscale/error.hpp"
#include "pairscale/levels.hpp"

namespace pairscale {

// Five level logits ordered inferior..superior. They describe the second
// image relative to the first: a large `superior` logit means the second
// image is much better.
struct ComparisonLogits {
  std::array<double, kLevelCount> values{};

  double operator[](Level level) const { return values[static_cast<std::size_t>(level)]; }
  friend bool operator==(const ComparisonLogits&, const ComparisonLogits&) = default;
};

// Softmax of the logits.
std::array<double, kLevelCount> level_probabilities(const ComparisonLogits& logits);

// Hard decision: the arg-max level, ties resolved to the lower ordinal.
Level top_level(const ComparisonLogits& logits);

// Logits reordered so that level k takes the value of mirror(k).
ComparisonLogits mirrored(const ComparisonLogits& logits);

enum class ComparatorErrorKind { unresolvable, cache_miss, transport, timeout, status, protocol };

std::string_view error_kind_name(ComparatorErrorKind kind);

class ComparatorError : public Error {
 public:
  ComparatorError(ComparatorErrorKind kind, const std::string& what)
      : Error(what), kind_(kind) {}
  ComparatorErrorKind kind() const noexcept { return kind_; }

 private:
  ComparatorErrorKind kind_;
};

// Pairwise quality comparator. Implementations must be safe to call from
// several threads at once.
class Comparator {
 public:
  virtual ~Comparator() = default;
  virtual ComparisonLogits compare(std::string_view first_id, std::string_view second_id) const = 0;
};

// --- Thurstone oracle ------------------------------------------------------

enum class OracleMode { deterministic, stochastic };

struct OracleOptions {
  OracleMode mode = OracleMode::deterministic;
  double noise_scale = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr double kOracleMassFloor = 1e-12;
inline constexpr double kOracleOffLogit = -20.0;

// Analytic comparator driven by the ground-truth MOS and rating spread.
// Deterministic: log band masses of N(z, 1) with z = mean_diff / std_diff,
// using bands at +-1 and +-2. Stochastic: one draw of the quality difference
// classified into a one-hot level (0 vs -20) plus N(0, noise^2) perturbation.
// The stochastic draw depends only on (seed, first id, second id).
ComparisonLogits oracle_logits(const ImageRecord& first, const ImageRecord& second,
                               const OracleOptions& options);

class OracleComparator final : public Comparator {
 public:
  OracleComparator(std::span<const ImageRecord> records, OracleOptions options);
  ComparisonLogits compare(std::string_view first_id, std::string_view second_id) const override;

 private:
  const ImageRecord& resolve(std::string_view id) const;

  std::unordered_map<std::string, ImageRecord> records_;
  OracleOptions options_;
};

// --- precomputed logits ----------------------------------------------------

// Ordered-pair logits table loaded from JSON Lines
// `{"first": id, "second": id, "logits": [5 reals]}`. No implicit mirroring.
class LogitsCache {
 public:
  static LogitsCache load(const std::filesystem::path& path);
  static LogitsCache parse(std::istream& in);

  void insert(std::string first, std::string second, const ComparisonLogits& logits);
  // Throws ComparatorError(cache_miss) naming the pair.
  const ComparisonLogits& at(std::string_view first, std::string_view second) const;
  bool contains(std::string_view first, std::string_view second) const;
  std::size_t size() const { return table_.size(); }

  void write(std::ostream& out) const;

 private:
  std::map<std::pair<std::string, std::string>, ComparisonLogits, std::less<>> table_;
};

class CacheComparator final : public Comparator {
 public:
  explicit CacheComparator(LogitsCache cache) : cache_(std::move(cache)) {}
  ComparisonLogits compare(std::string_view first_id, std::string_view second_id) const override;

 private:
  LogitsCache cache_;
};

// --- remote bridge client --------------------------------------------------

struct RemoteOptions {
  std::string endpoint;                    // e.g. http://127.0.0.1:8000
  std::filesystem::path image_root;        // image path = image_root / image id
  int max_attempts = 3;                    // transport errors only
  std::chrono::milliseconds backoff{200};  // doubled after each failed attempt
  std::chrono::milliseconds timeout{60000};
  int max_in_flight = 4;
};

// Request body for POST /v1/compare.
std::string compare_request_body(std::string_view first_image, std::string_view second_image);

// Parses `{"logits": {level: value, ...}, "model_id": s}`. Every level key must
// be present and finite; otherwise throws ComparatorError(protocol).
ComparisonLogits parse_compare_response(std::string_view body);

class RemoteComparator final : public Comparator {
 public:
  explicit RemoteComparator(RemoteOptions options);
  ~RemoteComparator() override;

  ComparisonLogits compare(std::string_view first_id, std::string_view second_id) const override;
  // Posts two image paths (or base64 payloads) as given.
  ComparisonLogits compare_paths(const std::string& first_image,
                                 const std::string& second_image) const;

 private:
  struct Impl;
  RemoteOptions options_;
  std::unique_ptr<Impl> impl_;
};

// --- configuration ---------------------------------------------------------

enum class Backend { oracle, cache, remote };

struct ComparatorConfig {
  Backend backend = Backend::oracle;
  OracleMode oracle_mode = OracleMode::deterministic;
  double noise_scale = 0.0;
  std::uint64_t seed = 0;
  std::optional<std::string> endpoint;
  std::optional<std::filesystem::path> cache_path;
  std::filesystem::path image_root;
  int max_in_flight = 4;

  // endpoint is required iff backend is remote, cache_path iff cache.
  void validate() const;
};

std::optional<Backend> parse_backend(std::string_view name);
std::optional<OracleMode> parse_oracle_mode(std::string_view name);

// `records` feeds the oracle backend; other backends ignore it.
std::unique_ptr<Comparator> make_comparator(const ComparatorConfig& config,
                                            std::span<const ImageRecord> records);

}  // namespace pairscale
