#include <doctest.h>

#include <atomic>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "geosent/error.hpp"
#include "geosent/geo.hpp"
#include "support.hpp"

// after Eigen: <resolv.h> defines a _res macro that collides with Eigen internals
#include <httplib.h>

using namespace geosent;
using testing_support::TempDir;

namespace {

/// Scripted transport: replays queued responses and records every request.
class FakeTransport : public HttpTransport {
 public:
  std::vector<HttpResponse> script;
  std::vector<std::pair<std::string, std::string>> requests;

  HttpResponse get(const std::string& base, const std::string& target) override {
    requests.emplace_back(base, target);
    if (script.empty()) return {200, R"({"geonames": []})"};
    auto r = script.front();
    script.erase(script.begin());
    return r;
  }
};

struct Harness {
  GeoCache cache;
  std::shared_ptr<FakeTransport> transport = std::make_shared<FakeTransport>();
  std::vector<double> sleeps;
  FetcherOptions options;

  Harness() {
    options.sleeper = [this](std::chrono::duration<double> d) { sleeps.push_back(d.count()); };
    options.now = [] { return std::string("2024-01-02T03:04:05Z"); };
    options.env = [](const std::string& name) -> std::optional<std::string> {
      if (name == "GEONAMES_USER") return "demo user";
      if (name == "PLACES_API_KEY") return "k3y";
      return std::nullopt;
    };
    // generous limits so limiter waits do not mix with backoff sleeps
    options.geonames.requests_per_second = 1e9;
    options.places.requests_per_second = 1e9;
  }
  NearbyFetcher fetcher() { return NearbyFetcher(cache, transport, options); }
};

CategoryTaxonomy tiny_taxonomy() { return CategoryTaxonomy(Provider::places, {"cafe", "park", "school"}, false); }

NearbyResult result_with(std::vector<std::string> categories) {
  NearbyResult r;
  r.point = {40.7, -74.0};
  r.provider = Provider::places;
  r.categories = std::move(categories);
  r.fetched_at = "2019-05-01T00:00:00Z";
  return r;
}

}  // namespace

TEST_CASE("shipped taxonomies have the standard sizes") {
  const auto t = testing_support::shipped_taxonomies();
  CHECK(t.geonames->size() == 51);
  CHECK(t.places->size() == 100);
  CHECK(t.geonames->slot("PRK") == 0u);
  CHECK(t.places->slot("park").has_value());
  CHECK(t.geonames->digest().size() == 64);
}

TEST_CASE("taxonomy validation") {
  std::istringstream dup("a\nb\na\n");
  CHECK_THROWS_AS(CategoryTaxonomy::parse(dup, Provider::places, false), TaxonomyError);
  std::istringstream small("# comment\na\nb\n");
  CHECK_THROWS_AS(CategoryTaxonomy::parse(small, Provider::geonames), TaxonomyError);
  std::istringstream ok("# comment\na  # trailing\n\nb\n");
  const auto t = CategoryTaxonomy::parse(ok, Provider::places, false);
  CHECK(t.categories() == std::vector<std::string>{"a", "b"});
}

TEST_CASE("vectorize matches the definitional examples") {
  const auto tax = tiny_taxonomy();
  const auto r = result_with({"park", "park", "cafe"});
  CHECK(vectorize(r, tax, VectorMode::count).vector.values == std::vector<int>{1, 2, 0});
  CHECK(vectorize(r, tax, VectorMode::onehot).vector.values == std::vector<int>{1, 1, 0});
  for (auto mode : {VectorMode::count, VectorMode::onehot}) {
    const auto empty = vectorize(result_with({}), tax, mode);
    CHECK(empty.vector.values == std::vector<int>{0, 0, 0});
    CHECK(empty.unknown == 0);
  }
}

TEST_CASE("unknown categories are tallied") {
  const auto v = vectorize(result_with({"park", "zoo", "zoo", "cafe"}), tiny_taxonomy(), VectorMode::count);
  CHECK(v.vector.values == std::vector<int>{1, 1, 0});
  CHECK(v.unknown == 2);
}

TEST_CASE("provider mismatch is a taxonomy error") {
  auto r = result_with({"park"});
  r.provider = Provider::geonames;
  CHECK_THROWS_AS(vectorize(r, tiny_taxonomy(), VectorMode::count), TaxonomyError);
}

TEST_CASE("count and onehot agree with a brute-force oracle on random multisets") {
  const auto tax = testing_support::shipped_taxonomies().places.value();
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> size(0, 30);
  std::uniform_int_distribution<std::size_t> pick(0, tax.size() + 9);  // last 10 are unknown
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> cats(static_cast<std::size_t>(size(rng)));
    for (auto& c : cats) {
      const auto k = pick(rng);
      c = k < tax.size() ? tax.categories()[k] : "unknown_" + std::to_string(k);
    }
    const auto r = result_with(cats);
    const auto count = vectorize(r, tax, VectorMode::count);
    const auto onehot = vectorize(r, tax, VectorMode::onehot);
    REQUIRE(count.vector.values.size() == 100);
    int total = 0;
    for (std::size_t i = 0; i < tax.size(); ++i) {
      const int oracle = static_cast<int>(std::count(cats.begin(), cats.end(), tax.categories()[i]));
      CHECK(count.vector.values[i] == oracle);
      CHECK(onehot.vector.values[i] == std::min(oracle, 1));
      total += count.vector.values[i];
    }
    CHECK(total + static_cast<int>(count.unknown) == static_cast<int>(cats.size()));
  }
}

TEST_CASE("cache key rounds to five decimals") {
  const auto a = CacheKey::make(Provider::geonames, {40.712776, -74.005974}, 300);
  const auto b = CacheKey::make(Provider::geonames, {40.7127801, -74.0059699}, 300);
  CHECK(a == b);
  CHECK(a.str() == "geonames:40.71278,-74.00597:300m");
  CHECK_FALSE(a == CacheKey::make(Provider::places, {40.712776, -74.005974}, 300));
  CHECK_FALSE(a == CacheKey::make(Provider::geonames, {40.712776, -74.005974}, 500));
}

TEST_CASE("cache round-trip is byte identical") {
  TempDir dir("cache");
  auto r = result_with({"park", "cafe", "park"});
  r.point = {40.12345, -73.54321};
  {
    GeoCache cache(dir / "c.jsonl");
    CHECK(cache.put(r));
    CHECK_FALSE(cache.put(r));
  }
  const auto text = testing_support::read_file(dir / "c.jsonl");
  CHECK(text == r.to_json_line() + "\n");
  GeoCache reopened(dir / "c.jsonl");
  const auto got = reopened.get(CacheKey::make(Provider::places, r.point, 300));
  REQUIRE(got.has_value());
  CHECK(got->to_json_line() == r.to_json_line());
  CHECK(reopened.size() == 1);
}

TEST_CASE("cache line has exactly the documented fields") {
  const auto j = nlohmann::json::parse(result_with({"a"}).to_json_line());
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"categories", "fetched_at", "lat5", "lon5", "provider", "radius_m"});
}

TEST_CASE("cache tolerates concurrent readers and writers") {
  TempDir dir("cc");
  GeoCache cache(dir / "c.jsonl");
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 50; ++i) {
        auto r = result_with({"park"});
        r.point = {10.0 + t, 20.0 + i * 0.001};
        cache.put(r);
        cache.get(CacheKey::make(Provider::places, r.point, 300));
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(cache.size() == 200);
  CHECK(GeoCache(dir / "c.jsonl").size() == 200);
}

TEST_CASE("offline hit returns the stored record; offline miss lists the key") {
  Harness h;
  auto stored = result_with({"park"});
  stored.point = {40.5, -73.9};
  h.cache.put(stored);
  auto fetcher = h.fetcher();
  const auto got = fetcher.fetch({40.5, -73.9}, Provider::places, 300, FetchMode::offline);
  CHECK(got.to_json_line() == stored.to_json_line());
  try {
    fetcher.fetch({1.0, 2.0}, Provider::places, 300, FetchMode::offline);
    FAIL("expected a cache miss");
  } catch (const CacheMissError& e) {
    CHECK(e.key() == "places:1.00000,2.00000:300m");
    CHECK(e.exit_code() == 4);
  }
  CHECK(h.transport->requests.empty());
}

TEST_CASE("second online query hits the cache") {
  Harness h;
  h.transport->script = {{200, R"({"geonames":[{"fcode":"PRK"},{"fcode":"SCH"},{"name":"no code"}]})"}};
  auto fetcher = h.fetcher();
  const auto a = fetcher.fetch({40.71278, -74.00597}, Provider::geonames, 300, FetchMode::online);
  const auto b = fetcher.fetch({40.71278, -74.00597}, Provider::geonames, 300, FetchMode::online);
  CHECK(fetcher.requests_issued() == 1);
  CHECK(h.transport->requests.size() == 1);
  CHECK(a.categories == std::vector<std::string>{"PRK", "SCH"});
  CHECK(a.to_json_line() == b.to_json_line());
  CHECK(a.fetched_at == "2024-01-02T03:04:05Z");
  CHECK(h.transport->requests[0].first == "http://api.geonames.org");
  CHECK(h.transport->requests[0].second ==
        "/findNearbyJSON?lat=40.71278&lng=-74.00597&radius=0.3&maxRows=100&username=demo%20user");
}

TEST_CASE("empty provider result gives an empty multiset") {
  Harness h;
  h.transport->script = {{200, R"({"status":"ZERO_RESULTS","results":[]})"}};
  auto fetcher = h.fetcher();
  const auto r = fetcher.fetch({1, 2}, Provider::places, 300, FetchMode::online);
  CHECK(r.categories.empty());
  CHECK(h.transport->requests[0].second == "/maps/api/place/nearbysearch/json?location=1.00000,2.00000&radius=300&key=k3y");
}

TEST_CASE("places collects every type of every venue") {
  const auto cats = parse_provider_response(
      Provider::places, 200, R"({"status":"OK","results":[{"types":["cafe","food"]},{"types":["park"]},{}]})");
  CHECK(cats == std::vector<std::string>{"cafe", "food", "park"});
  CHECK_THROWS_AS(parse_provider_response(Provider::places, 200, R"({"status":"OVER_QUERY_LIMIT"})"), ProviderError);
  CHECK_THROWS_AS(parse_provider_response(Provider::geonames, 200,
                                          R"({"status":{"message":"limit exceeded","value":18}})"),
                  ProviderError);
  CHECK_THROWS_AS(parse_provider_response(Provider::geonames, 200, "<html>"), ProviderError);
}

TEST_CASE("transient failures retry with exponential backoff") {
  Harness h;
  h.transport->script = {{503, ""}, {429, ""}, {200, R"({"geonames":[{"fcode":"PRK"}]})"}};
  auto fetcher = h.fetcher();
  const auto r = fetcher.fetch({3, 4}, Provider::geonames, 300, FetchMode::online);
  CHECK(r.categories == std::vector<std::string>{"PRK"});
  CHECK(fetcher.requests_issued() == 3);
  REQUIRE(h.sleeps.size() == 2);
  CHECK(h.sleeps[0] == doctest::Approx(1.0));
  CHECK(h.sleeps[1] == doctest::Approx(2.0));
}

TEST_CASE("exhausted retries raise a provider error with the status") {
  Harness h;
  h.transport->script = {{500, ""}, {502, ""}, {503, ""}, {200, "{}"}};
  auto fetcher = h.fetcher();
  try {
    fetcher.fetch({3, 4}, Provider::places, 300, FetchMode::online);
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(e.status() == 503);
    CHECK(e.exit_code() == 4);
  }
  CHECK(fetcher.requests_issued() == 3);
  CHECK(h.cache.size() == 0);
}

TEST_CASE("client errors are not retried") {
  Harness h;
  h.transport->script = {{403, "denied"}};
  auto fetcher = h.fetcher();
  CHECK_THROWS_AS(fetcher.fetch({3, 4}, Provider::places, 300, FetchMode::online), ProviderError);
  CHECK(fetcher.requests_issued() == 1);
  CHECK(h.sleeps.empty());
}

TEST_CASE("missing credentials are a configuration error") {
  Harness h;
  h.options.env = [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
  auto fetcher = h.fetcher();
  try {
    fetcher.fetch({3, 4}, Provider::geonames, 300, FetchMode::online);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("GEONAMES_USER") != std::string::npos);
    CHECK(e.exit_code() == 3);
  }
  CHECK(h.transport->requests.empty());
}

TEST_CASE("rate limiter spaces requests") {
  std::vector<double> waits;
  RateLimiter limiter(2.0, [&](std::chrono::duration<double> d) { waits.push_back(d.count()); });
  limiter.acquire();
  limiter.acquire();
  limiter.acquire();
  REQUIRE(waits.size() == 2);
  CHECK(waits[0] == doctest::Approx(0.5).epsilon(0.05));
  CHECK(waits[1] == doctest::Approx(1.0).epsilon(0.05));
  CHECK_THROWS_AS(RateLimiter(0.0, real_sleep), ConfigError);
}

TEST_CASE("http transport talks to a local server") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Get("/findNearbyJSON", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    CHECK(req.get_param_value("username") == "demo user");
    CHECK(req.get_param_value("radius") == "0.3");
    res.set_content(R"({"geonames":[{"fcode":"PRK"},{"fcode":"PRK"}]})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  Harness h;
  h.options.geonames.base_url = "http://127.0.0.1:" + std::to_string(port);
  NearbyFetcher fetcher(h.cache, std::shared_ptr<HttpTransport>(make_http_transport()), h.options);
  const auto r = fetcher.fetch({40.0, -74.0}, Provider::geonames, 300, FetchMode::online);
  server.stop();
  t.join();
  CHECK(hits == 1);
  CHECK(r.categories == std::vector<std::string>{"PRK", "PRK"});
}

TEST_CASE("unreachable host reports status 0 and is retried") {
  Harness h;
  h.options.geonames.base_url = "http://127.0.0.1:1";
  NearbyFetcher fetcher(h.cache, std::shared_ptr<HttpTransport>(make_http_transport()), h.options);
  try {
    fetcher.fetch({1, 1}, Provider::geonames, 300, FetchMode::online);
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(e.status() == 0);
  }
  CHECK(fetcher.requests_issued() == 3);
}
