#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace geosent {

enum class Provider { geonames, places };

std::string to_string(Provider p);
Provider parse_provider(std::string_view name);

/// Slot count the pipeline expects for each provider taxonomy.
constexpr std::size_t taxonomy_size(Provider p) { return p == Provider::geonames ? 51 : 100; }

inline constexpr double kStandardRadiusM = 300.0;

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
};

/// Ordered category list. Slot order equals file order and defines vector
/// positions, so it is never re-sorted.
class CategoryTaxonomy {
 public:
  CategoryTaxonomy(Provider provider, std::vector<std::string> categories,
                   bool enforce_standard_size = true);

  /// One identifier per line; '#' starts a comment.
  static CategoryTaxonomy load(const std::filesystem::path& path, Provider provider);
  static CategoryTaxonomy parse(std::istream& in, Provider provider, bool enforce_standard_size = true);

  Provider provider() const { return provider_; }
  std::size_t size() const { return categories_.size(); }
  const std::vector<std::string>& categories() const { return categories_; }
  std::optional<std::size_t> slot(const std::string& category) const;
  /// SHA-256 of the category list as written back one per line.
  std::string digest() const;

 private:
  Provider provider_;
  std::vector<std::string> categories_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct NearbyResult {
  GeoPoint point;  // rounded to 5 decimals
  Provider provider = Provider::geonames;
  double radius_m = kStandardRadiusM;
  std::vector<std::string> categories;  // multiset, provider order
  std::string fetched_at;               // RFC 3339, UTC

  /// One cache line: provider, lat5, lon5, radius_m, categories, fetched_at.
  std::string to_json_line() const;
  static NearbyResult from_json_line(std::string_view line);
};

struct CacheKey {
  Provider provider;
  std::int64_t lat_e5;
  std::int64_t lon_e5;
  std::int64_t radius_m;

  static CacheKey make(Provider provider, GeoPoint point, double radius_m);
  std::string str() const;
  GeoPoint rounded_point() const;
  friend auto operator<=>(const CacheKey&, const CacheKey&) = default;
};

/// Append-only JSONL cache of nearby lookups. Readers share a lock; writers
/// are serialized and flush each record before returning.
class GeoCache {
 public:
  GeoCache() = default;  // in-memory only
  explicit GeoCache(std::filesystem::path path);

  std::optional<NearbyResult> get(const CacheKey& key) const;
  /// Records the result unless its key is already present; returns whether it was added.
  bool put(const NearbyResult& result);
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::shared_mutex mutex_;
  std::map<CacheKey, NearbyResult> entries_;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Minimal GET transport so provider clients can be exercised without a network.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  /// `base` is scheme://host[:port]; `target` is path plus query string.
  virtual HttpResponse get(const std::string& base, const std::string& target) = 0;
};

std::unique_ptr<HttpTransport> make_http_transport();

using Sleeper = std::function<void(std::chrono::duration<double>)>;
void real_sleep(std::chrono::duration<double> d);

/// Single-slot token bucket shared by all requests to one provider.
class RateLimiter {
 public:
  RateLimiter(double requests_per_second, Sleeper sleeper);
  void acquire();

 private:
  std::mutex mutex_;
  std::chrono::duration<double> interval_;
  Sleeper sleeper_;
  std::optional<std::chrono::steady_clock::time_point> next_;
};

enum class FetchMode { online, offline };

struct ProviderSettings {
  std::string base_url;
  double requests_per_second = 1.0;
};

struct FetcherOptions {
  ProviderSettings geonames{"http://api.geonames.org", 1.0};
  ProviderSettings places{"https://maps.googleapis.com", 5.0};
  int attempts = 3;
  std::chrono::duration<double> initial_backoff{1.0};
  Sleeper sleeper = real_sleep;
  std::function<std::string()> now;  // RFC 3339 timestamp source; UTC wall clock when empty
  /// Credential lookup; reads the process environment when empty.
  std::function<std::optional<std::string>(const std::string&)> env;
};

/// Cache-first nearby lookup with bounded retry and per-provider rate limits.
class NearbyFetcher {
 public:
  NearbyFetcher(GeoCache& cache, std::shared_ptr<HttpTransport> transport,
                FetcherOptions options = {});

  NearbyResult fetch(GeoPoint point, Provider provider, double radius_m, FetchMode mode);
  std::size_t requests_issued() const { return requests_; }

 private:
  NearbyResult request(const CacheKey& key);
  std::string credential(Provider provider) const;

  GeoCache& cache_;
  std::shared_ptr<HttpTransport> transport_;
  FetcherOptions options_;
  RateLimiter geonames_limiter_;
  RateLimiter places_limiter_;
  std::size_t requests_ = 0;
};

/// One-shot lookup over the default HTTP transport.
NearbyResult fetch_nearby(GeoPoint point, Provider provider, double radius_m, GeoCache& cache,
                          FetchMode mode);

/// Parses the category fields out of a provider response body.
std::vector<std::string> parse_provider_response(Provider provider, int status,
                                                 std::string_view body);

std::string build_request_target(Provider provider, GeoPoint point, double radius_m,
                                 const std::string& credential);

enum class VectorMode { onehot, count };

std::string to_string(VectorMode m);
VectorMode parse_vector_mode(std::string_view name);

struct CategoryVector {
  VectorMode mode = VectorMode::count;
  std::vector<int> values;
};

struct Vectorized {
  CategoryVector vector;
  std::size_t unknown = 0;  // categories absent from the taxonomy
};

Vectorized vectorize(const NearbyResult& result, const CategoryTaxonomy& taxonomy, VectorMode mode);

std::string utc_timestamp_now();

}  // namespace geosent
