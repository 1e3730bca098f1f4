#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "pairscale/comparator.hpp"
#include "pairscale/scaling.hpp"
#include "support/oracles.hpp"

using namespace pairscale;
using namespace std::chrono_literals;

namespace {

ImageRecord rec(std::string id, double mos, double sd) { return {std::move(id), mos, sd, std::nullopt, "d"}; }

// Builds oracle records whose quality difference has z = mean/std exactly.
std::pair<ImageRecord, ImageRecord> pair_with_z(double z) {
  // std_diff = hypot(0.6, 0.8) = 1
  return {rec("first", z, 0.6), rec("second", 0.0, 0.8)};
}

std::string healthy_body() {
  return R"({"logits":{"inferior":-3.0,"worse":-1.0,"similar":0.5,"better":-1.5,"superior":-4.0},"model_id":"fake"})";
}

// In-process stand-in for the bridge service.
class FakeBridge {
 public:
  explicit FakeBridge(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/compare", [this, handler](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      const int now = ++active_;
      int seen = max_active_.load();
      while (now > seen && !max_active_.compare_exchange_weak(seen, now)) {
      }
      handler(req, res);
      --active_;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeBridge() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int requests() const { return requests_; }
  int max_active() const { return max_active_; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> requests_{0};
  std::atomic<int> active_{0};
  std::atomic<int> max_active_{0};
};

RemoteOptions fast_options(std::string endpoint) {
  RemoteOptions o;
  o.endpoint = std::move(endpoint);
  o.backoff = 10ms;
  o.timeout = 2000ms;
  return o;
}

}  // namespace

TEST(ComparisonLogits, TopLevelTiesGoToLowerOrdinal) {
  EXPECT_EQ(top_level({{0, 0, 0, 0, 0}}), Level::inferior);
  EXPECT_EQ(top_level({{0, 1, 3, 3, 1}}), Level::similar);
  EXPECT_EQ(top_level({{0, 1, 2, 3, 4}}), Level::superior);
}

TEST(OracleComparator, DeterministicZeroMatchesBandMasses) {
  const auto [a, b] = pair_with_z(0.0);
  const auto p = level_probabilities(oracle_logits(a, b, {}));
  // Standard-normal band masses, 40-digit reference.
  const std::array<double, 5> expected{0.022750131948179207, 0.13590512198327784, 0.6826894921370859,
                                       0.13590512198327784, 0.022750131948179207};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(p[i], expected[i], 1e-14);
}

TEST(OracleComparator, DeterministicZThree) {
  const auto [a, b] = pair_with_z(3.0);
  const auto p = level_probabilities(oracle_logits(a, b, {}));
  EXPECT_NEAR(p[0], 0.84134474606854295, 1e-14);
  const auto masses = oracle::band_masses(3.0);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(p[i], masses[i], 1e-13);
}

TEST(OracleComparator, MassFloorKeepsLogitsFinite) {
  const auto [a, b] = pair_with_z(60.0);
  const auto l = oracle_logits(a, b, {});
  for (double v : l.values) EXPECT_TRUE(std::isfinite(v));
  EXPECT_DOUBLE_EQ(l.values[4], std::log(1e-12));
}

TEST(OracleComparator, AntisymmetryProperty) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> mos(0, 5), sd(0.05, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const auto a = rec("a", mos(rng), sd(rng));
    const auto b = rec("b", mos(rng), sd(rng));
    const auto forward = level_probabilities(oracle_logits(a, b, {}));
    const auto backward = level_probabilities(mirrored(oracle_logits(b, a, {})));
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(forward[k], backward[k], 1e-12);
  }
}

TEST(OracleComparator, SoftPreferenceStrictlyDecreasingInZ) {
  double prev = 2.0;
  for (double z = -8.0; z <= 8.0; z += 0.01) {
    const auto [a, b] = pair_with_z(z);
    const double p = soft_preference(oracle_logits(a, b, {}));
    ASSERT_LT(p, prev) << "z = " << z;
    prev = p;
  }
}

TEST(OracleComparator, StochasticDeterministicUnderSeed) {
  const auto [a, b] = pair_with_z(0.0);
  const OracleOptions opts{OracleMode::stochastic, 0.0, 99};
  const auto first = oracle_logits(a, b, opts);
  EXPECT_EQ(first, oracle_logits(a, b, opts));
  int zeros = 0;
  for (double v : first.values) {
    if (v == 0.0) ++zeros;
    else EXPECT_EQ(v, -20.0);
  }
  EXPECT_EQ(zeros, 1);

  const OracleOptions noisy{OracleMode::stochastic, 1.0, 99};
  EXPECT_EQ(oracle_logits(a, b, noisy), oracle_logits(a, b, noisy));
  EXPECT_NE(oracle_logits(a, b, noisy), first);
}

TEST(OracleComparator, StochasticLevelFrequenciesFollowBandMasses) {
  // Over many seeds the one-hot level is a draw from the band masses.
  const auto [a, b] = pair_with_z(0.7);
  std::array<int, 5> hist{};
  const int draws = 40000;
  for (int s = 0; s < draws; ++s) ++hist[ordinal(top_level(oracle_logits(a, b, {OracleMode::stochastic, 0.0, std::uint64_t(s)})))];
  const auto masses = oracle::band_masses(0.7);
  for (std::size_t k = 0; k < 5; ++k) {
    const double se = std::sqrt(masses[k] * (1 - masses[k]) / draws);
    EXPECT_NEAR(hist[k] / double(draws), masses[k], 5 * se + 1e-4) << k;
  }
}

TEST(OracleComparator, UnresolvableReference) {
  const std::vector<ImageRecord> records{rec("a", 1, 0.1)};
  const OracleComparator cmp(records, {});
  try {
    cmp.compare("a", "zzz");
    FAIL();
  } catch (const ComparatorError& e) {
    EXPECT_EQ(e.kind(), ComparatorErrorKind::unresolvable);
  }
}

TEST(LogitsCache, LookupIsVerbatimAndOrdered) {
  std::istringstream in(R"({"first":"a","second":"b","logits":[0.1,-2.5,3,4e-3,-7]})"
                        "\n\n"
                        R"({"first":"c","second":"a","logits":[1,1,1,1,1]})"
                        "\n");
  const auto cache = LogitsCache::parse(in);
  EXPECT_EQ(cache.size(), 2u);
  const CacheComparator cmp(cache);
  EXPECT_EQ(cmp.compare("a", "b"), (ComparisonLogits{{0.1, -2.5, 3, 4e-3, -7}}));
  try {
    cmp.compare("b", "a");
    FAIL();
  } catch (const ComparatorError& e) {
    EXPECT_EQ(e.kind(), ComparatorErrorKind::cache_miss);
    EXPECT_NE(std::string(e.what()).find("(b, a)"), std::string::npos);
  }
}

TEST(LogitsCache, RejectsDuplicatesAndMalformedLines) {
  std::istringstream dup(R"({"first":"a","second":"b","logits":[0,0,0,0,0]})"
                         "\n"
                         R"({"first":"a","second":"b","logits":[1,0,0,0,0]})"
                         "\n");
  EXPECT_THROW(LogitsCache::parse(dup), ParseError);
  std::istringstream short_logits(R"({"first":"a","second":"b","logits":[0,0,0,0]})");
  EXPECT_THROW(LogitsCache::parse(short_logits), ParseError);
  std::istringstream bad_json("{not json}\n");
  EXPECT_THROW(LogitsCache::parse(bad_json), ParseError);
}

TEST(LogitsCache, WriteThenParseRoundTrip) {
  LogitsCache cache;
  cache.insert("x", "y", {{1.5, -2, 0.25, 1e-9, -20}});
  cache.insert("y", "x", {{-20, 1e-9, 0.25, -2, 1.5}});
  std::stringstream io;
  cache.write(io);
  const auto loaded = LogitsCache::parse(io);
  EXPECT_EQ(loaded.at("x", "y"), cache.at("x", "y"));
  EXPECT_EQ(loaded.at("y", "x"), cache.at("y", "x"));
}

TEST(RemoteProtocol, ParsesAndValidatesResponse) {
  const auto l = parse_compare_response(healthy_body());
  EXPECT_EQ(l, (ComparisonLogits{{-3.0, -1.0, 0.5, -1.5, -4.0}}));
  const auto missing = R"({"logits":{"inferior":0,"worse":0,"similar":0,"better":0},"model_id":"m"})";
  try {
    parse_compare_response(missing);
    FAIL();
  } catch (const ComparatorError& e) {
    EXPECT_EQ(e.kind(), ComparatorErrorKind::protocol);
  }
  EXPECT_THROW(parse_compare_response("[]"), ComparatorError);
  EXPECT_THROW(parse_compare_response("nope"), ComparatorError);
  EXPECT_THROW(parse_compare_response(
                   R"({"logits":{"inferior":0,"worse":0,"similar":0,"better":0,"superior":0,"great":1}})"),
               ComparatorError);
  const auto body = nlohmann::json::parse(compare_request_body("a.png", "b.png"));
  EXPECT_EQ(body["first_image"], "a.png");
  EXPECT_EQ(body["second_image"], "b.png");
}

TEST(RemoteComparator, HealthyBridge) {
  FakeBridge bridge([](const httplib::Request& req, httplib::Response& res) {
    const auto j = nlohmann::json::parse(req.body);
    EXPECT_EQ(j["first_image"], "/imgs/a.png");
    EXPECT_EQ(j["second_image"], "/imgs/b.png");
    res.set_content(healthy_body(), "application/json");
  });
  auto opts = fast_options(bridge.endpoint());
  opts.image_root = "/imgs";
  const RemoteComparator cmp(opts);
  const auto l = cmp.compare("a.png", "b.png");
  for (double v : l.values) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(l, parse_compare_response(healthy_body()));
  EXPECT_EQ(bridge.requests(), 1);
}

TEST(RemoteComparator, MissingLevelKeyIsProtocolError) {
  FakeBridge bridge([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"logits":{"inferior":0,"worse":0,"similar":0,"better":0},"model_id":"m"})",
                    "application/json");
  });
  const RemoteComparator cmp(fast_options(bridge.endpoint()));
  try {
    cmp.compare("a", "b");
    FAIL();
  } catch (const ComparatorError& e) {
    EXPECT_EQ(e.kind(), ComparatorErrorKind::protocol);
  }
}

TEST(RemoteComparator, ErrorStatusIsNotRetried) {
  FakeBridge bridge([](const httplib::Request&, httplib::Response& res) {
    res.status = 503;
    res.set_content(R"({"error":"queue full"})", "application/json");
  });
  const RemoteComparator cmp(fast_options(bridge.endpoint()));
  try {
    cmp.compare("a", "b");
    FAIL();
  } catch (const ComparatorError& e) {
    EXPECT_EQ(e.kind(), ComparatorErrorKind::status);
    EXPECT_NE(std::string(e.what()).find("queue full"), std::string::npos);
  }
  EXPECT_EQ(bridge.requests(), 1);
}

TEST(RemoteComparator, TimeoutRetriedThreeTimes) {
  FakeBridge bridge([](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(400ms);
    res.set_content(healthy_body(), "application/json");
  });
  auto opts = fast_options(bridge.endpoint());
  opts.timeout = 100ms;
  const RemoteComparator cmp(opts);
  try {
    cmp.compare("a", "b");
    FAIL();
  } catch (const ComparatorError& e) {
    EXPECT_EQ(e.kind(), ComparatorErrorKind::timeout);
    EXPECT_NE(std::string(e.what()).find("3 attempts"), std::string::npos);
  }
  EXPECT_EQ(bridge.requests(), 3);
}

TEST(RemoteComparator, UnreachableEndpointIsTransportError) {
  // Nothing listens on port 1; the connection is refused at once.
  auto opts = fast_options("http://127.0.0.1:1");
  const RemoteComparator cmp(opts);
  const auto start = std::chrono::steady_clock::now();
  try {
    cmp.compare("a", "b");
    FAIL();
  } catch (const ComparatorError& e) {
    EXPECT_EQ(e.kind(), ComparatorErrorKind::transport);
    EXPECT_NE(std::string(e.what()).find("after 3 attempts"), std::string::npos);
  }
  // Two backoff sleeps: 10 ms + 20 ms.
  EXPECT_GE(std::chrono::steady_clock::now() - start, 30ms);
}

TEST(RemoteComparator, InFlightLimit) {
  FakeBridge bridge([](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(30ms);
    res.set_content(healthy_body(), "application/json");
  });
  auto opts = fast_options(bridge.endpoint());
  opts.max_in_flight = 2;
  const RemoteComparator cmp(opts);
  std::vector<std::jthread> workers;
  for (int i = 0; i < 8; ++i) workers.emplace_back([&] { cmp.compare("a", "b"); });
  workers.clear();
  EXPECT_EQ(bridge.requests(), 8);
  EXPECT_LE(bridge.max_active(), 2);
}

TEST(ComparatorConfig, BackendRequirements) {
  ComparatorConfig c;
  EXPECT_NO_THROW(c.validate());
  c.backend = Backend::remote;
  EXPECT_THROW(c.validate(), ValidationError);
  c.endpoint = "http://localhost:1";
  EXPECT_NO_THROW(c.validate());
  c.cache_path = "x.jsonl";
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.backend = Backend::cache;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_EQ(parse_backend("oracle"), Backend::oracle);
  EXPECT_FALSE(parse_backend("gpt").has_value());
  EXPECT_EQ(parse_oracle_mode("stochastic"), OracleMode::stochastic);
}
