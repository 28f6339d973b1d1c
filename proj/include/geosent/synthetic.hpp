#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geosent/corpus.hpp"
#include "geosent/experiment.hpp"
#include "geosent/geo.hpp"

namespace geosent {

/// Generated corpus with ground-truth labels and the nearby-category records
/// for every tweet (both providers, standard radius).
struct SyntheticCorpus {
  std::vector<RawTweet> raw;
  std::vector<LabeledTweet> labeled;
  std::vector<NearbyResult> nearby;

  void fill_cache(GeoCache& cache) const;
};

/// Sentiment words the generators plant in text; all are entries of the
/// default lexicon shipped in data/lexicon.tsv.
const std::vector<std::string>& positive_words();
const std::vector<std::string>& negative_words();

/// Two disjoint token vocabularies, one per class; every tweet draws only
/// from its class vocabulary. Every point has an empty nearby result for
/// both providers.
SyntheticCorpus make_separable_corpus(std::size_t n_per_class, std::uint64_t seed);

/// Location-signal generator. Each tweet carries one sentiment word giving a
/// text polarity s, surrounded by neutral filler. A key category (one per
/// provider) is present nearby with probability `flip_rate`; when present the
/// label is the opposite of s. Text alone therefore caps accuracy at
/// 1 - flip_rate, while text plus the key category determines the label.
/// Other categories appear as label-independent background.
struct LocationSignalOptions {
  std::size_t n_per_class = 250;
  double flip_rate = 0.3;
  double background_rate = 0.1;  // chance of one extra unrelated category
  std::size_t sentiment_vocabulary = 2;  // words drawn per polarity, at most 10
  std::size_t filler_vocabulary = 20;
  std::size_t filler_min = 6;
  std::size_t filler_max = 12;
  std::string geonames_key = "PRK";
  std::string places_key = "park";
  std::uint64_t seed = 0;
};

SyntheticCorpus make_location_signal_corpus(const LocationSignalOptions& options, const Taxonomies& taxonomies);

}  // namespace geosent
