#include "pairscale/comparator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <semaphore>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "pairscale/corpus.hpp"
#include "pairscale/normal.hpp"
#include "text.hpp"

namespace pairscale {

std::array<double, kLevelCount> level_probabilities(const ComparisonLogits& logits) {
  const double peak = *std::max_element(logits.values.begin(), logits.values.end());
  std::array<double, kLevelCount> p{};
  double sum = 0.0;
  for (std::size_t i = 0; i < kLevelCount; ++i) {
    p[i] = std::exp(logits.values[i] - peak);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

Level top_level(const ComparisonLogits& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kLevelCount; ++i) {
    if (logits.values[i] > logits.values[best]) best = i;
  }
  return static_cast<Level>(best);
}

ComparisonLogits mirrored(const ComparisonLogits& logits) {
  ComparisonLogits out;
  for (std::size_t i = 0; i < kLevelCount; ++i) out.values[i] = logits.values[kLevelCount - 1 - i];
  return out;
}

std::string_view error_kind_name(ComparatorErrorKind kind) {
  switch (kind) {
    case ComparatorErrorKind::unresolvable: return "unresolvable";
    case ComparatorErrorKind::cache_miss: return "cache_miss";
    case ComparatorErrorKind::transport: return "transport";
    case ComparatorErrorKind::timeout: return "timeout";
    case ComparatorErrorKind::status: return "status";
    case ComparatorErrorKind::protocol: return "protocol";
  }
  return "unknown";
}

// --- oracle ----------------------------------------------------------------

namespace {

std::uint64_t pair_stream(std::uint64_t seed, std::string_view first, std::string_view second) {
  const auto h = text::fnv1a(second, text::fnv1a("\x1f", text::fnv1a(first)));
  return text::splitmix64(text::splitmix64(seed) ^ h);
}

}  // namespace

ComparisonLogits oracle_logits(const ImageRecord& first, const ImageRecord& second,
                               const OracleOptions& options) {
  const auto d = quality_difference(first, second);
  ComparisonLogits out;

  if (options.mode == OracleMode::deterministic) {
    const double z = d.mean_diff / d.std_diff;
    const std::array<double, kLevelCount> mass = {
        normal_sf(2.0 - z),
        normal_interval(1.0 - z, 2.0 - z),
        normal_interval(-1.0 - z, 1.0 - z),
        normal_interval(-2.0 - z, -1.0 - z),
        normal_cdf(-2.0 - z),
    };
    for (std::size_t i = 0; i < kLevelCount; ++i) {
      out.values[i] = std::log(std::max(mass[i], kOracleMassFloor));
    }
    return out;
  }

  std::mt19937_64 rng(pair_stream(options.seed, first.image_id, second.image_id));
  std::normal_distribution<double> difference(d.mean_diff, d.std_diff);
  const auto level = classify_level(QualityDifference{difference(rng), d.std_diff});
  out.values.fill(kOracleOffLogit);
  out.values[static_cast<std::size_t>(level)] = 0.0;
  if (options.noise_scale > 0.0) {
    std::normal_distribution<double> noise(0.0, options.noise_scale);
    for (auto& v : out.values) v += noise(rng);
  }
  return out;
}

OracleComparator::OracleComparator(std::span<const ImageRecord> records, OracleOptions options)
    : options_(options) {
  if (!(options_.noise_scale >= 0.0)) throw ValidationError("noise scale must be non-negative");
  for (const auto& r : records) records_.emplace(r.image_id, r);
}

const ImageRecord& OracleComparator::resolve(std::string_view id) const {
  const auto it = records_.find(std::string(id));
  if (it == records_.end()) {
    throw ComparatorError(ComparatorErrorKind::unresolvable,
                          "oracle has no record for image '" + std::string(id) + "'");
  }
  return it->second;
}

ComparisonLogits OracleComparator::compare(std::string_view first_id, std::string_view second_id) const {
  return oracle_logits(resolve(first_id), resolve(second_id), options_);
}

// --- cache -----------------------------------------------------------------

LogitsCache LogitsCache::parse(std::istream& in) {
  LogitsCache cache;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("logits cache: invalid JSON at row " + std::to_string(row), row);
    }
    if (!j.is_object() || !j.contains("first") || !j.contains("second") || !j.contains("logits") ||
        !j["first"].is_string() || !j["second"].is_string() || !j["logits"].is_array() ||
        j["logits"].size() != kLevelCount) {
      throw ParseError("logits cache: expected first, second and 5 logits at row " + std::to_string(row),
                       row);
    }
    ComparisonLogits logits;
    for (std::size_t i = 0; i < kLevelCount; ++i) {
      const auto& v = j["logits"][i];
      if (!v.is_number() || !std::isfinite(v.get<double>())) {
        throw ParseError("logits cache: non-finite logit at row " + std::to_string(row), row);
      }
      logits.values[i] = v.get<double>();
    }
    auto first = j["first"].get<std::string>();
    auto second = j["second"].get<std::string>();
    if (cache.contains(first, second)) {
      throw ParseError("logits cache: duplicate pair (" + first + ", " + second + ") at row " +
                           std::to_string(row),
                       row);
    }
    cache.insert(std::move(first), std::move(second), logits);
  }
  return cache;
}

LogitsCache LogitsCache::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open logits cache " + path.string());
  return parse(in);
}

void LogitsCache::insert(std::string first, std::string second, const ComparisonLogits& logits) {
  table_.insert_or_assign({std::move(first), std::move(second)}, logits);
}

bool LogitsCache::contains(std::string_view first, std::string_view second) const {
  return table_.find(std::pair{std::string(first), std::string(second)}) != table_.end();
}

const ComparisonLogits& LogitsCache::at(std::string_view first, std::string_view second) const {
  const auto it = table_.find(std::pair{std::string(first), std::string(second)});
  if (it == table_.end()) {
    throw ComparatorError(ComparatorErrorKind::cache_miss, "logits cache has no entry for pair (" +
                                                               std::string(first) + ", " +
                                                               std::string(second) + ")");
  }
  return it->second;
}

void LogitsCache::write(std::ostream& out) const {
  for (const auto& [key, logits] : table_) {
    nlohmann::ordered_json j;
    j["first"] = key.first;
    j["second"] = key.second;
    j["logits"] = logits.values;
    out << j.dump() << '\n';
  }
}

ComparisonLogits CacheComparator::compare(std::string_view first_id, std::string_view second_id) const {
  return cache_.at(first_id, second_id);
}

// --- remote ----------------------------------------------------------------

std::string compare_request_body(std::string_view first_image, std::string_view second_image) {
  nlohmann::ordered_json j;
  j["first_image"] = first_image;
  j["second_image"] = second_image;
  return j.dump();
}

ComparisonLogits parse_compare_response(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    throw ComparatorError(ComparatorErrorKind::protocol, "bridge response is not valid JSON");
  }
  if (!j.is_object() || !j.contains("logits") || !j["logits"].is_object()) {
    throw ComparatorError(ComparatorErrorKind::protocol, "bridge response has no 'logits' object");
  }
  const auto& logits = j["logits"];
  ComparisonLogits out;
  for (auto level : kAllLevels) {
    const std::string name(level_name(level));
    if (!logits.contains(name)) {
      throw ComparatorError(ComparatorErrorKind::protocol, "bridge response lacks level '" + name + "'");
    }
    const auto& v = logits[name];
    if (!v.is_number() || !std::isfinite(v.get<double>())) {
      throw ComparatorError(ComparatorErrorKind::protocol,
                            "bridge response has non-finite logit for '" + name + "'");
    }
    out.values[static_cast<std::size_t>(level)] = v.get<double>();
  }
  if (logits.size() != kLevelCount) {
    throw ComparatorError(ComparatorErrorKind::protocol, "bridge response has unexpected level keys");
  }
  return out;
}

struct RemoteComparator::Impl {
  std::string scheme_host_port;
  std::string base_path;
  std::counting_semaphore<1024> in_flight;

  explicit Impl(int limit) : in_flight(limit) {}
};

RemoteComparator::RemoteComparator(RemoteOptions options) : options_(std::move(options)) {
  if (options_.endpoint.empty()) throw ValidationError("remote comparator needs an endpoint");
  if (options_.max_attempts < 1) throw ValidationError("max_attempts must be at least 1");
  if (options_.max_in_flight < 1 || options_.max_in_flight > 1024) {
    throw ValidationError("max_in_flight must be in [1, 1024]");
  }
  impl_ = std::make_unique<Impl>(options_.max_in_flight);
  std::string endpoint = options_.endpoint;
  while (!endpoint.empty() && endpoint.back() == '/') endpoint.pop_back();
  const auto scheme = endpoint.find("://");
  const auto path_start = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  impl_->scheme_host_port = endpoint.substr(0, path_start);
  if (path_start != std::string::npos) impl_->base_path = endpoint.substr(path_start);
}

RemoteComparator::~RemoteComparator() = default;

ComparisonLogits RemoteComparator::compare(std::string_view first_id, std::string_view second_id) const {
  auto resolve = [&](std::string_view id) {
    return options_.image_root.empty() ? std::string(id) : (options_.image_root / std::string(id)).string();
  };
  return compare_paths(resolve(first_id), resolve(second_id));
}

ComparisonLogits RemoteComparator::compare_paths(const std::string& first_image,
                                                 const std::string& second_image) const {
  impl_->in_flight.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{impl_->in_flight};

  const auto body = compare_request_body(first_image, second_image);
  const auto path = impl_->base_path + "/v1/compare";
  auto backoff = options_.backoff;
  std::string last_error;
  ComparatorErrorKind last_kind = ComparatorErrorKind::transport;

  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    httplib::Client client(impl_->scheme_host_port);
    if (!client.is_valid()) {
      throw ComparatorError(ComparatorErrorKind::transport, "invalid endpoint '" + options_.endpoint + "'");
    }
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    const auto result = client.Post(path, body, "application/json");
    if (result) {
      if (result->status < 200 || result->status >= 300) {
        std::string detail;
        try {
          const auto j = nlohmann::json::parse(result->body);
          if (j.is_object() && j.contains("error") && j["error"].is_string()) detail = j["error"].get<std::string>();
        } catch (const nlohmann::json::parse_error&) {
        }
        throw ComparatorError(ComparatorErrorKind::status,
                              "bridge returned HTTP " + std::to_string(result->status) +
                                  (detail.empty() ? "" : ": " + detail));
      }
      return parse_compare_response(result->body);
    }

    const auto err = result.error();
    last_kind = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                    ? ComparatorErrorKind::timeout
                    : ComparatorErrorKind::transport;
    last_error = httplib::to_string(err);
    if (attempt < options_.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw ComparatorError(last_kind, "bridge at " + options_.endpoint + " failed after " +
                                       std::to_string(options_.max_attempts) + " attempts: " + last_error);
}

// --- configuration ---------------------------------------------------------

void ComparatorConfig::validate() const {
  if ((backend == Backend::remote) != endpoint.has_value()) {
    throw ValidationError(backend == Backend::remote ? "remote comparator requires an endpoint"
                                                     : "endpoint is only valid with the remote comparator");
  }
  if ((backend == Backend::cache) != cache_path.has_value()) {
    throw ValidationError(backend == Backend::cache ? "cache comparator requires a cache path"
                                                    : "cache path is only valid with the cache comparator");
  }
  if (!(noise_scale >= 0.0)) throw ValidationError("noise scale must be non-negative");
}

std::optional<Backend> parse_backend(std::string_view name) {
  if (name == "oracle") return Backend::oracle;
  if (name == "cache") return Backend::cache;
  if (name == "remote") return Backend::remote;
  return std::nullopt;
}

std::optional<OracleMode> parse_oracle_mode(std::string_view name) {
  if (name == "deterministic") return OracleMode::deterministic;
  if (name == "stochastic") return OracleMode::stochastic;
  return std::nullopt;
}

std::unique_ptr<Comparator> make_comparator(const ComparatorConfig& config,
                                            std::span<const ImageRecord> records) {
  config.validate();
  switch (config.backend) {
    case Backend::oracle:
      return std::make_unique<OracleComparator>(
          records, OracleOptions{config.oracle_mode, config.noise_scale, config.seed});
    case Backend::cache:
      return std::make_unique<CacheComparator>(LogitsCache::load(*config.cache_path));
    case Backend::remote: {
      RemoteOptions options;
      options.endpoint = *config.endpoint;
      options.image_root = config.image_root;
      options.max_in_flight = config.max_in_flight;
      return std::make_unique<RemoteComparator>(std::move(options));
    }
  }
  throw ValidationError("unknown comparator backend");
}

}  // namespace pairscale
