#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "geosent/corpus.hpp"
#include "geosent/encode.hpp"
#include "geosent/geo.hpp"
#include "geosent/nn/adam.hpp"
#include "geosent/nn/model.hpp"
#include "geosent/nn/model_spec.hpp"

namespace geosent {

enum class DatasetVariant { text_only, onehot_geonames, onehot_places, count_geonames, count_places };

inline constexpr std::array<DatasetVariant, 5> kAllVariants{
    DatasetVariant::text_only, DatasetVariant::onehot_geonames, DatasetVariant::onehot_places,
    DatasetVariant::count_geonames, DatasetVariant::count_places};

std::string to_string(DatasetVariant v);
DatasetVariant parse_variant(std::string_view name);
std::optional<Provider> provider_of(DatasetVariant v);
VectorMode vector_mode_of(DatasetVariant v);

/// Independent RNG streams derived from one repeat seed.
enum class SeedStream : std::uint64_t { split = 0, embedding = 1, model = 2, train = 3 };
std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream);

struct Example {
  FeatureVector features;
  int label = 0;
};

using Dataset = std::vector<Example>;

/// Both provider taxonomies; a variant only needs the one it reads.
struct Taxonomies {
  std::optional<CategoryTaxonomy> geonames;
  std::optional<CategoryTaxonomy> places;

  const CategoryTaxonomy& get(Provider p) const;
  std::size_t size_for(DatasetVariant v) const;
};

/// Encodes every tweet for `variant`, reading location categories from the
/// cache (offline). A cache miss raises CacheMissError.
Dataset build_dataset(std::span<const LabeledTweet> tweets, const Vocabulary& vocab, DatasetVariant variant,
                      ConcatStrategy strategy, const Taxonomies& taxonomies, const GeoCache& cache,
                      std::size_t* unknown_categories = nullptr);

/// Stratified seeded split: round(ratio * n) training examples, allocated
/// across classes by largest remainder so both sides keep the class ratio.
std::pair<Dataset, Dataset> split(const Dataset& data, double ratio, std::uint64_t seed);

struct TrainOptions {
  nn::ModelSpec spec;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  nn::AdamConfig adam;
};

struct EpochStats {
  double loss = 0.0;
  double train_accuracy = 0.0;  // running, train-mode forward passes
};

struct TrainedModel {
  nn::Model<float> model;
  std::vector<EpochStats> history;
};

/// Mini-batch Adam on binary cross-entropy, reshuffling each epoch.
TrainedModel train(const TrainOptions& options, const EmbeddingMatrix& embedding, const Dataset& train_set,
                   std::uint64_t seed);

/// Fraction of examples where (p > 0.5) matches the label.
double evaluate(const nn::Model<float>& model, const Dataset& test_set);

struct ExperimentConfig {
  nn::ModelKind model = nn::ModelKind::cnn;
  std::string embedding = "random";  // or a path to a text embedding file
  std::size_t dim = 200;
  DatasetVariant variant = DatasetVariant::text_only;
  std::size_t repeats = 10;
  std::size_t epochs = 20;
  double split_ratio = 0.7;
  std::uint64_t base_seed = 0;
  std::size_t batch_size = 32;
  ConcatStrategy strategy = ConcatStrategy::literal;
  nn::ModelSpec spec;  // kind and embed_dim are overwritten from model/dim
  nn::AdamConfig adam;

  void validate() const;
  nn::ModelSpec model_spec() const;
  TrainOptions train_options() const;
  nlohmann::json to_json() const;
};

/// Everything a run reads, with digests of the files it came from.
struct ExperimentData {
  std::vector<LabeledTweet> tweets;
  Vocabulary vocab;
  Taxonomies taxonomies;
  const GeoCache* cache = nullptr;
  const EmbeddingTable* embeddings = nullptr;  // required unless embedding == "random"
  nlohmann::json input_digests = nlohmann::json::object();
};

struct RunResult {
  std::string config_digest;
  nlohmann::json config;
  std::string model;
  std::string embedding;
  std::size_t dim = 0;
  DatasetVariant variant = DatasetVariant::text_only;
  std::vector<double> accuracies;
  double mean = 0.0;
  double stddev = 0.0;
  double wall_seconds = 0.0;
  bool partial = false;
  std::optional<std::size_t> failed_repeat;
  std::string error;

  nlohmann::json to_json() const;
  static RunResult from_json(const nlohmann::json& j);
};

struct SplitSummary {
  std::size_t train = 0;
  std::size_t train_positive = 0;
  std::size_t test = 0;
  std::size_t test_positive = 0;
};

struct RunOptions {
  unsigned threads = 1;
  std::function<void(std::size_t repeat, double accuracy)> on_repeat;
  std::function<void(std::size_t repeat, const SplitSummary& split)> on_split;
};

/// Repeat r uses seed base_seed + r for its split, embedding init and model init.
RunResult run_experiment(const ExperimentConfig& config, const ExperimentData& data, const RunOptions& options = {});

}  // namespace geosent
