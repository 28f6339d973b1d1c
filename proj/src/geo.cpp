#include "geosent/geo.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "geosent/digest.hpp"
#include "geosent/error.hpp"

namespace geosent {

using nlohmann::json;

std::string to_string(Provider p) { return p == Provider::geonames ? "geonames" : "places"; }

Provider parse_provider(std::string_view name) {
  if (name == "geonames") return Provider::geonames;
  if (name == "places") return Provider::places;
  throw ConfigError("unknown provider '" + std::string(name) + "'");
}

std::string to_string(VectorMode m) { return m == VectorMode::onehot ? "onehot" : "count"; }

VectorMode parse_vector_mode(std::string_view name) {
  if (name == "onehot") return VectorMode::onehot;
  if (name == "count") return VectorMode::count;
  throw ConfigError("unknown vector mode '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Taxonomy

CategoryTaxonomy::CategoryTaxonomy(Provider provider, std::vector<std::string> categories,
                                   bool enforce_standard_size)
    : provider_(provider), categories_(std::move(categories)) {
  if (enforce_standard_size && categories_.size() != taxonomy_size(provider)) {
    throw TaxonomyError(to_string(provider) + " taxonomy must list " +
                        std::to_string(taxonomy_size(provider)) + " categories, got " +
                        std::to_string(categories_.size()));
  }
  for (std::size_t i = 0; i < categories_.size(); ++i) {
    if (!index_.emplace(categories_[i], i).second) {
      throw TaxonomyError("duplicate category '" + categories_[i] + "'");
    }
  }
}

CategoryTaxonomy CategoryTaxonomy::parse(std::istream& in, Provider provider,
                                         bool enforce_standard_size) {
  std::vector<std::string> categories;
  for (std::string line; std::getline(in, line);) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream words(line);
    std::string id, extra;
    if (!(words >> id)) continue;
    if (words >> extra) throw TaxonomyError("category identifiers must not contain spaces: " + line);
    categories.push_back(id);
  }
  return CategoryTaxonomy(provider, std::move(categories), enforce_standard_size);
}

CategoryTaxonomy CategoryTaxonomy::load(const std::filesystem::path& path, Provider provider) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read taxonomy " + path.string());
  return parse(in, provider);
}

std::optional<std::size_t> CategoryTaxonomy::slot(const std::string& category) const {
  const auto it = index_.find(category);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string CategoryTaxonomy::digest() const {
  std::string joined;
  for (const auto& c : categories_) joined += c + '\n';
  return sha256_hex(joined);
}

// ---------------------------------------------------------------------------
// Results and cache

CacheKey CacheKey::make(Provider provider, GeoPoint point, double radius_m) {
  return {provider, std::llround(point.lat * 1e5), std::llround(point.lon * 1e5),
          std::llround(radius_m)};
}

std::string CacheKey::str() const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s:%.5f,%.5f:%lldm", to_string(provider).c_str(),
                static_cast<double>(lat_e5) / 1e5, static_cast<double>(lon_e5) / 1e5,
                static_cast<long long>(radius_m));
  return buf;
}

GeoPoint CacheKey::rounded_point() const {
  return {static_cast<double>(lat_e5) / 1e5, static_cast<double>(lon_e5) / 1e5};
}

std::string NearbyResult::to_json_line() const {
  json j;
  j["provider"] = to_string(provider);
  j["lat5"] = point.lat;
  j["lon5"] = point.lon;
  j["radius_m"] = radius_m;
  j["categories"] = categories;
  j["fetched_at"] = fetched_at;
  return j.dump();
}

NearbyResult NearbyResult::from_json_line(std::string_view line) {
  try {
    const json j = json::parse(line);
    NearbyResult r;
    r.provider = parse_provider(j.at("provider").get<std::string>());
    r.point = {j.at("lat5").get<double>(), j.at("lon5").get<double>()};
    r.radius_m = j.at("radius_m").get<double>();
    r.categories = j.at("categories").get<std::vector<std::string>>();
    r.fetched_at = j.at("fetched_at").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad cache record: ") + e.what());
  }
}

GeoCache::GeoCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(*path_);
  if (!in) return;  // created on first put
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    NearbyResult r;
    try {
      r = NearbyResult::from_json_line(line);
    } catch (const FormatError& e) {
      throw FormatError(path_->string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    entries_.emplace(CacheKey::make(r.provider, r.point, r.radius_m), std::move(r));
  }
}

std::optional<NearbyResult> GeoCache::get(const CacheKey& key) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

bool GeoCache::put(const NearbyResult& result) {
  const auto key = CacheKey::make(result.provider, result.point, result.radius_m);
  NearbyResult stored = result;
  stored.point = key.rounded_point();
  std::unique_lock lock(mutex_);
  if (entries_.count(key)) return false;
  if (path_) {
    std::ofstream out(*path_, std::ios::app);
    if (!out) throw IoError("cannot append to cache " + path_->string());
    out << stored.to_json_line() << '\n';
    out.flush();
    if (!out) throw IoError("write failed on cache " + path_->string());
  }
  entries_.emplace(key, std::move(stored));
  return true;
}

std::size_t GeoCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// Rate limiting

void real_sleep(std::chrono::duration<double> d) {
  if (d.count() > 0) std::this_thread::sleep_for(d);
}

RateLimiter::RateLimiter(double requests_per_second, Sleeper sleeper)
    : interval_(requests_per_second > 0 ? 1.0 / requests_per_second : 0.0),
      sleeper_(std::move(sleeper)) {
  if (!(requests_per_second > 0)) throw ConfigError("rate limit must be positive");
}

void RateLimiter::acquire() {
  std::lock_guard lock(mutex_);
  const auto now = std::chrono::steady_clock::now();
  if (!next_ || *next_ <= now) {
    next_ = now + std::chrono::duration_cast<std::chrono::steady_clock::duration>(interval_);
    return;
  }
  const std::chrono::duration<double> wait = *next_ - now;
  sleeper_(wait);
  *next_ += std::chrono::duration_cast<std::chrono::steady_clock::duration>(interval_);
}

// ---------------------------------------------------------------------------
// Provider protocol

namespace {

std::string url_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 0xf];
    }
  }
  return out;
}

std::string fixed5(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.5f", v);
  return buf;
}

}  // namespace

std::string build_request_target(Provider provider, GeoPoint point, double radius_m,
                                 const std::string& credential) {
  if (provider == Provider::geonames) {
    // Geonames takes the radius in kilometres.
    char radius_km[32];
    std::snprintf(radius_km, sizeof radius_km, "%g", radius_m / 1000.0);
    return "/findNearbyJSON?lat=" + fixed5(point.lat) + "&lng=" + fixed5(point.lon) +
           "&radius=" + radius_km + "&maxRows=100&username=" + url_encode(credential);
  }
  char radius[32];
  std::snprintf(radius, sizeof radius, "%g", radius_m);
  return "/maps/api/place/nearbysearch/json?location=" + fixed5(point.lat) + "," +
         fixed5(point.lon) + "&radius=" + radius + "&key=" + url_encode(credential);
}

std::vector<std::string> parse_provider_response(Provider provider, int status,
                                                 std::string_view body) {
  const json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ProviderError(to_string(provider) + ": unparseable response", status);
  }
  std::vector<std::string> categories;
  if (provider == Provider::geonames) {
    if (j.contains("status")) {
      const auto& s = j["status"];
      throw ProviderError("geonames: " + s.value("message", std::string("error")) + " (code " +
                              std::to_string(s.value("value", 0)) + ")",
                          status);
    }
    if (!j.contains("geonames")) return categories;
    for (const auto& feature : j["geonames"]) {
      if (feature.contains("fcode") && feature["fcode"].is_string()) {
        categories.push_back(feature["fcode"].get<std::string>());
      }
    }
    return categories;
  }
  const auto api_status = j.value("status", std::string("OK"));
  if (api_status != "OK" && api_status != "ZERO_RESULTS") {
    throw ProviderError("places: " + api_status + " " + j.value("error_message", std::string()),
                        status);
  }
  if (!j.contains("results")) return categories;
  for (const auto& place : j["results"]) {
    if (!place.contains("types")) continue;
    for (const auto& t : place["types"]) {
      if (t.is_string()) categories.push_back(t.get<std::string>());
    }
  }
  return categories;
}

std::string utc_timestamp_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Fetcher

NearbyFetcher::NearbyFetcher(GeoCache& cache, std::shared_ptr<HttpTransport> transport,
                             FetcherOptions options)
    : cache_(cache),
      transport_(std::move(transport)),
      options_(std::move(options)),
      geonames_limiter_(options_.geonames.requests_per_second, options_.sleeper),
      places_limiter_(options_.places.requests_per_second, options_.sleeper) {
  if (options_.attempts < 1) throw ConfigError("fetch attempts must be >= 1");
  if (!options_.now) options_.now = utc_timestamp_now;
  if (!options_.env) {
    options_.env = [](const std::string& name) -> std::optional<std::string> {
      const char* v = std::getenv(name.c_str());
      if (v == nullptr || *v == '\0') return std::nullopt;
      return std::string(v);
    };
  }
}

std::string NearbyFetcher::credential(Provider provider) const {
  const std::string var = provider == Provider::geonames ? "GEONAMES_USER" : "PLACES_API_KEY";
  auto value = options_.env(var);
  if (!value) throw ConfigError(var + " must be set for online " + to_string(provider) + " lookups");
  return *value;
}

NearbyResult NearbyFetcher::fetch(GeoPoint point, Provider provider, double radius_m,
                                  FetchMode mode) {
  const auto key = CacheKey::make(provider, point, radius_m);
  if (auto hit = cache_.get(key)) return *hit;
  if (mode == FetchMode::offline) throw CacheMissError(key.str());
  NearbyResult result = request(key);
  cache_.put(result);
  return *cache_.get(key);
}

NearbyResult NearbyFetcher::request(const CacheKey& key) {
  const auto& settings =
      key.provider == Provider::geonames ? options_.geonames : options_.places;
  auto& limiter = key.provider == Provider::geonames ? geonames_limiter_ : places_limiter_;
  const auto target = build_request_target(key.provider, key.rounded_point(),
                                           static_cast<double>(key.radius_m),
                                           credential(key.provider));
  auto backoff = options_.initial_backoff;
  HttpResponse last;
  for (int attempt = 0; attempt < options_.attempts; ++attempt) {
    if (attempt > 0) {
      options_.sleeper(backoff);
      backoff *= 2;
    }
    limiter.acquire();
    ++requests_;
    last = transport_->get(settings.base_url, target);
    if (last.status == 200) {
      NearbyResult r;
      r.point = key.rounded_point();
      r.provider = key.provider;
      r.radius_m = static_cast<double>(key.radius_m);
      r.categories = parse_provider_response(key.provider, last.status, last.body);
      r.fetched_at = options_.now();
      return r;
    }
    const bool transient = last.status == 0 || last.status == 429 || last.status >= 500;
    if (!transient) break;
  }
  throw ProviderError(to_string(key.provider) + " request for " + key.str() + " failed with status " +
                          std::to_string(last.status),
                      last.status);
}

NearbyResult fetch_nearby(GeoPoint point, Provider provider, double radius_m, GeoCache& cache,
                          FetchMode mode) {
  NearbyFetcher fetcher(cache, std::shared_ptr<HttpTransport>(make_http_transport()));
  return fetcher.fetch(point, provider, radius_m, mode);
}

// ---------------------------------------------------------------------------
// Vectorization

Vectorized vectorize(const NearbyResult& result, const CategoryTaxonomy& taxonomy, VectorMode mode) {
  if (result.provider != taxonomy.provider()) {
    throw TaxonomyError("result from " + to_string(result.provider) + " cannot use a " +
                        to_string(taxonomy.provider()) + " taxonomy");
  }
  Vectorized out;
  out.vector.mode = mode;
  out.vector.values.assign(taxonomy.size(), 0);
  for (const auto& c : result.categories) {
    if (const auto slot = taxonomy.slot(c)) {
      ++out.vector.values[*slot];
    } else {
      ++out.unknown;
    }
  }
  if (mode == VectorMode::onehot) {
    for (auto& v : out.vector.values) v = v > 0 ? 1 : 0;
  }
  return out;
}

}  // namespace geosent
