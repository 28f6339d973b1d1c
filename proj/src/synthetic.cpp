#include "geosent/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "geosent/error.hpp"

namespace geosent {

namespace {

constexpr const char* kFetchedAt = "2019-05-01T00:00:00Z";

/// Pronounceable nonsense words (consonant-vowel pairs) that never collide
/// with lexicon entries.
std::vector<std::string> nonsense_words(std::size_t n, std::size_t offset) {
  static constexpr char kConsonants[] = "bdfgklmnprstvz";
  static constexpr char kVowels[] = "aeiou";
  std::vector<std::string> out;
  for (std::size_t i = offset; out.size() < n; ++i) {
    std::string w;
    std::size_t v = i;
    for (int syllable = 0; syllable < 3; ++syllable) {
      w += kConsonants[v % 14];
      v /= 14;
      w += kVowels[v % 5];
      v /= 5;
    }
    out.push_back(w);
  }
  return out;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) {
    if (!s.empty()) s += ' ';
    s += t;
  }
  return s;
}

GeoPoint unique_point(std::mt19937_64& rng, std::set<std::pair<long long, long long>>& used) {
  std::uniform_real_distribution<double> lat(40.50, 40.90);
  std::uniform_real_distribution<double> lon(-74.20, -73.70);
  while (true) {
    GeoPoint p{std::round(lat(rng) * 1e5) / 1e5, std::round(lon(rng) * 1e5) / 1e5};
    if (used.insert({std::llround(p.lat * 1e5), std::llround(p.lon * 1e5)}).second) return p;
  }
}

}  // namespace

void SyntheticCorpus::fill_cache(GeoCache& cache) const {
  for (const auto& r : nearby) cache.put(r);
}

const std::vector<std::string>& positive_words() {
  static const std::vector<std::string> words{"good",  "great", "love", "happy", "awesome",
                                              "nice",  "excellent", "amazing", "best", "beautiful"};
  return words;
}

const std::vector<std::string>& negative_words() {
  static const std::vector<std::string> words{"bad",   "terrible", "hate", "sad",    "awful",
                                              "worst", "horrible", "angry", "boring", "ugly"};
  return words;
}

SyntheticCorpus make_separable_corpus(std::size_t n_per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto vocab0 = nonsense_words(20, 0);
  const auto vocab1 = nonsense_words(20, 500);
  std::uniform_int_distribution<std::size_t> length(6, 12);
  std::uniform_int_distribution<std::size_t> pick(0, 19);
  std::set<std::pair<long long, long long>> used;
  SyntheticCorpus out;
  for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    const auto& vocab = label == 1 ? vocab1 : vocab0;
    std::vector<std::string> tokens(length(rng));
    for (auto& t : tokens) t = vocab[pick(rng)];
    const auto p = unique_point(rng, used);
    const std::string id = "sep" + std::to_string(i);
    out.raw.push_back({id, join(tokens), p.lat, p.lon});
    out.labeled.push_back({id, tokens, p.lat, p.lon, label == 1 ? 1.0 : -1.0, label});
    for (auto provider : {Provider::geonames, Provider::places}) {
      NearbyResult r;
      r.point = p;
      r.provider = provider;
      r.fetched_at = kFetchedAt;
      out.nearby.push_back(std::move(r));
    }
  }
  return out;
}

SyntheticCorpus make_location_signal_corpus(const LocationSignalOptions& options, const Taxonomies& taxonomies) {
  if (!(options.flip_rate >= 0.0 && options.flip_rate <= 1.0)) throw ConfigError("flip_rate must be in [0, 1]");
  const auto& geonames = taxonomies.get(Provider::geonames);
  const auto& places = taxonomies.get(Provider::places);
  if (!geonames.slot(options.geonames_key) || !places.slot(options.places_key)) {
    throw ConfigError("key category missing from taxonomy");
  }
  std::mt19937_64 rng(options.seed);
  if (options.filler_vocabulary == 0 || options.filler_min > options.filler_max) {
    throw ConfigError("bad filler settings");
  }
  if (options.sentiment_vocabulary == 0 || options.sentiment_vocabulary > positive_words().size()) {
    throw ConfigError("sentiment_vocabulary must be in [1, 10]");
  }
  const auto filler = nonsense_words(options.filler_vocabulary, 1000);
  std::uniform_int_distribution<std::size_t> filler_pick(0, filler.size() - 1);
  std::uniform_int_distribution<std::size_t> sentiment_pick(0, options.sentiment_vocabulary - 1);
  std::uniform_int_distribution<std::size_t> filler_count(options.filler_min, options.filler_max);
  std::uniform_int_distribution<int> key_count(1, 3);
  std::bernoulli_distribution flip(options.flip_rate);
  std::bernoulli_distribution background(options.background_rate);
  std::set<std::pair<long long, long long>> used;

  auto background_category = [&](const CategoryTaxonomy& tax, const std::string& key) {
    std::uniform_int_distribution<std::size_t> slot(0, tax.size() - 1);
    while (true) {
      const auto& c = tax.categories()[slot(rng)];
      if (c != key) return c;
    }
  };

  SyntheticCorpus out;
  for (std::size_t i = 0; i < 2 * options.n_per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    const bool key_present = flip(rng);
    const int text_polarity = key_present ? 1 - label : label;

    std::vector<std::string> tokens(filler_count(rng));
    for (auto& t : tokens) t = filler[filler_pick(rng)];
    std::uniform_int_distribution<std::size_t> where(0, tokens.size());
    const auto& words = text_polarity == 1 ? positive_words() : negative_words();
    tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(where(rng)), words[sentiment_pick(rng)]);

    const auto p = unique_point(rng, used);
    const std::string id = "loc" + std::to_string(i);
    out.raw.push_back({id, join(tokens), p.lat, p.lon});
    out.labeled.push_back({id, tokens, p.lat, p.lon, label == 1 ? 1.0 : -1.0, label});

    const int n_key = key_present ? key_count(rng) : 0;
    for (const auto* tax : {&geonames, &places}) {
      const auto& key = tax == &geonames ? options.geonames_key : options.places_key;
      NearbyResult r;
      r.point = p;
      r.provider = tax->provider();
      r.radius_m = kStandardRadiusM;
      r.fetched_at = kFetchedAt;
      for (int k = 0; k < n_key; ++k) r.categories.push_back(key);
      if (background(rng)) r.categories.push_back(background_category(*tax, key));
      out.nearby.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace geosent
