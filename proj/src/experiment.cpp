#include "geosent/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numeric>
#include <random>

#include "geosent/digest.hpp"
#include "geosent/error.hpp"

namespace geosent {

using nlohmann::json;

// splitmix64 finalizer.
std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(stream) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string to_string(DatasetVariant v) {
  switch (v) {
    case DatasetVariant::text_only: return "text_only";
    case DatasetVariant::onehot_geonames: return "onehot_geonames";
    case DatasetVariant::onehot_places: return "onehot_places";
    case DatasetVariant::count_geonames: return "count_geonames";
    case DatasetVariant::count_places: return "count_places";
  }
  return "?";
}

DatasetVariant parse_variant(std::string_view name) {
  for (auto v : kAllVariants) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown dataset variant '" + std::string(name) + "'");
}

std::optional<Provider> provider_of(DatasetVariant v) {
  switch (v) {
    case DatasetVariant::text_only: return std::nullopt;
    case DatasetVariant::onehot_geonames:
    case DatasetVariant::count_geonames: return Provider::geonames;
    case DatasetVariant::onehot_places:
    case DatasetVariant::count_places: return Provider::places;
  }
  return std::nullopt;
}

VectorMode vector_mode_of(DatasetVariant v) {
  return v == DatasetVariant::onehot_geonames || v == DatasetVariant::onehot_places ? VectorMode::onehot
                                                                                    : VectorMode::count;
}

const CategoryTaxonomy& Taxonomies::get(Provider p) const {
  const auto& t = p == Provider::geonames ? geonames : places;
  if (!t) throw ConfigError(to_string(p) + " taxonomy not configured");
  return *t;
}

std::size_t Taxonomies::size_for(DatasetVariant v) const {
  const auto p = provider_of(v);
  return p ? get(*p).size() : 0;
}

// ---------------------------------------------------------------------------

Dataset build_dataset(std::span<const LabeledTweet> tweets, const Vocabulary& vocab, DatasetVariant variant,
                      ConcatStrategy strategy, const Taxonomies& taxonomies, const GeoCache& cache,
                      std::size_t* unknown_categories) {
  const auto provider = provider_of(variant);
  if (!provider) strategy = ConcatStrategy::text_only;
  if (provider && strategy == ConcatStrategy::text_only) {
    throw ConfigError(to_string(variant) + " needs a literal or reserved strategy");
  }
  Dataset data;
  data.reserve(tweets.size());
  std::size_t unknown = 0;
  for (const auto& t : tweets) {
    const auto seq = encode_pad(std::span<const std::string>(t.tokens), vocab);
    Example ex;
    ex.label = t.label;
    if (provider) {
      const auto key = CacheKey::make(*provider, {t.lat, t.lon}, kStandardRadiusM);
      const auto hit = cache.get(key);
      if (!hit) throw CacheMissError(key.str());
      const auto vec = vectorize(*hit, taxonomies.get(*provider), vector_mode_of(variant));
      unknown += vec.unknown;
      ex.features = concat_features(seq, &vec.vector, strategy, vocab);
    } else {
      ex.features = concat_features(seq, nullptr, ConcatStrategy::text_only, vocab);
    }
    data.push_back(std::move(ex));
  }
  if (unknown_categories != nullptr) *unknown_categories = unknown;
  return data;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double ratio, std::uint64_t seed) {
  if (data.empty()) throw SplitError("cannot split an empty dataset");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must be in (0, 1)");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data[i].label == 1].push_back(i);

  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(data.size())));
  std::size_t quota[2];
  double remainder[2];
  std::size_t assigned = 0;
  for (int c = 0; c < 2; ++c) {
    const double exact = ratio * static_cast<double>(by_class[c].size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - std::floor(exact);
    assigned += quota[c];
  }
  // Largest remainder; class 0 wins ties.
  for (std::size_t left = n_train - std::min(n_train, assigned); left > 0; --left) {
    const int c = remainder[1] > remainder[0] ? 1 : 0;
    ++quota[c];
    remainder[c] = -1.0;
  }

  std::mt19937_64 rng(seed);
  Dataset train, test;
  for (int c = 0; c < 2; ++c) {
    auto& pool = by_class[c];
    std::shuffle(pool.begin(), pool.end(), rng);
    if (quota[c] == 0 || quota[c] == pool.size()) {
      throw SplitError("class " + std::to_string(c) + " would be absent from the " +
                       (quota[c] == 0 ? "training" : "test") + " side");
    }
    for (std::size_t k = 0; k < pool.size(); ++k) (k < quota[c] ? train : test).push_back(data[pool[k]]);
  }
  std::shuffle(train.begin(), train.end(), rng);
  std::shuffle(test.begin(), test.end(), rng);
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------

TrainedModel train(const TrainOptions& options, const EmbeddingMatrix& embedding, const Dataset& train_set,
                   std::uint64_t seed) {
  if (train_set.empty()) throw ConfigError("training set is empty");
  if (options.batch_size == 0) throw ConfigError("batch size must be positive");
  const std::size_t length = train_set.front().features.size();
  for (const auto& ex : train_set) {
    if (ex.features.size() != length) throw ShapeError("training examples differ in length");
  }
  TrainedModel out{nn::Model<float>(options.spec, length, embedding.rows, derive_seed(seed, SeedStream::model)), {}};
  auto& model = out.model;
  nn::AdamState<float> adam;
  adam.config = options.adam;
  std::mt19937_64 rng(derive_seed(seed, SeedStream::train));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      auto grads = model.zero_gradients();
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = train_set[order[k]];
        const auto step = model.accumulate(ex.features, ex.label, nn::Mode::train, rng, grads);
        if (!std::isfinite(step.loss)) throw NumericError("non-finite loss in epoch " + std::to_string(epoch));
        loss_sum += step.loss;
        correct += ((step.probability > 0.5f) ? 1 : 0) == ex.label;
      }
      const float scale = 1.0f / static_cast<float>(end - start);
      for (auto& [name, g] : grads) g *= scale;
      nn::adam_step(model.parameters(), grads, adam);
    }
    const auto n = static_cast<double>(order.size());
    out.history.push_back({loss_sum / n, static_cast<double>(correct) / n});
  }
  return out;
}

double evaluate(const nn::Model<float>& model, const Dataset& test_set) {
  if (test_set.empty()) throw EvaluationError("empty test set");
  std::size_t correct = 0;
  for (const auto& ex : test_set) correct += ((model.predict(ex.features) > 0.5f) ? 1 : 0) == ex.label;
  return static_cast<double>(correct) / static_cast<double>(test_set.size());
}

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("split_ratio must be in (0, 1)");
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (dim != 200 && dim != 300) throw ConfigError("embedding dimension must be 200 or 300");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

nn::ModelSpec ExperimentConfig::model_spec() const {
  nn::ModelSpec s = spec;
  s.kind = model;
  s.embed_dim = dim;
  return s;
}

TrainOptions ExperimentConfig::train_options() const { return {model_spec(), epochs, batch_size, adam}; }

json ExperimentConfig::to_json() const {
  return {{"model", nn::to_string(model)},
          {"embedding", embedding},
          {"dim", dim},
          {"variant", to_string(variant)},
          {"repeats", repeats},
          {"epochs", epochs},
          {"split_ratio", split_ratio},
          {"base_seed", base_seed},
          {"batch_size", batch_size},
          {"strategy", to_string(strategy)},
          {"spec", model_spec().to_json()},
          {"adam", {{"lr", adam.lr}, {"beta1", adam.beta1}, {"beta2", adam.beta2}, {"epsilon", adam.epsilon}}}};
}

json RunResult::to_json() const {
  json j = {{"config_digest", config_digest},
            {"config", config},
            {"model", model},
            {"embedding", embedding},
            {"dim", dim},
            {"variant", to_string(variant)},
            {"accuracies", accuracies},
            {"mean", mean},
            {"stddev", stddev},
            {"wall_seconds", wall_seconds},
            {"partial", partial}};
  if (failed_repeat) {
    j["failed_repeat"] = *failed_repeat;
    j["error"] = error;
  }
  return j;
}

RunResult RunResult::from_json(const json& j) {
  try {
    RunResult r;
    r.config_digest = j.at("config_digest").get<std::string>();
    r.config = j.value("config", json::object());
    r.model = j.at("model").get<std::string>();
    r.embedding = j.at("embedding").get<std::string>();
    r.dim = j.at("dim").get<std::size_t>();
    r.variant = parse_variant(j.at("variant").get<std::string>());
    r.accuracies = j.at("accuracies").get<std::vector<double>>();
    r.mean = j.at("mean").get<double>();
    r.stddev = j.value("stddev", 0.0);
    r.wall_seconds = j.value("wall_seconds", 0.0);
    r.partial = j.value("partial", false);
    if (j.contains("failed_repeat")) r.failed_repeat = j["failed_repeat"].get<std::size_t>();
    r.error = j.value("error", std::string());
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad result record: ") + e.what());
  }
}

namespace {

struct RepeatOutcome {
  double accuracy = 0.0;
  std::optional<std::string> error;
  SplitSummary split;
};

std::size_t count_positive(const Dataset& d) {
  return static_cast<std::size_t>(std::count_if(d.begin(), d.end(), [](const Example& e) { return e.label == 1; }));
}

RepeatOutcome run_repeat(const ExperimentConfig& config, const ExperimentData& data, const Dataset& dataset,
                         std::size_t repeat) {
  const std::uint64_t seed = config.base_seed + repeat;
  RepeatOutcome outcome;
  try {
    auto [train_set, test_set] = split(dataset, config.split_ratio, derive_seed(seed, SeedStream::split));
    outcome.split = {train_set.size(), count_positive(train_set), test_set.size(), count_positive(test_set)};
    const auto embedding =
        build_embedding_matrix(data.vocab, data.taxonomies.size_for(config.variant),
                               config.embedding == "random" ? nullptr : data.embeddings, config.dim,
                               derive_seed(seed, SeedStream::embedding));
    const auto trained = train(config.train_options(), embedding, train_set, seed);
    outcome.accuracy = evaluate(trained.model, test_set);
  } catch (const NumericError& e) {
    outcome.error = e.what();
  }
  return outcome;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const ExperimentData& data, const RunOptions& options) {
  config.validate();
  if (data.cache == nullptr && provider_of(config.variant)) throw ConfigError("location variants need a cache");
  if (config.embedding != "random" && data.embeddings == nullptr) {
    throw ConfigError("embedding file '" + config.embedding + "' not loaded");
  }
  const auto started = std::chrono::steady_clock::now();

  RunResult result;
  result.config = config.to_json();
  result.config["inputs"] = data.input_digests;
  result.config_digest = sha256_hex(result.config.dump());
  result.model = nn::to_string(config.model);
  result.embedding = config.embedding;
  result.dim = config.dim;
  result.variant = config.variant;

  const GeoCache empty_cache;
  const Dataset dataset = build_dataset(data.tweets, data.vocab, config.variant, config.strategy,
                                        data.taxonomies, data.cache ? *data.cache : empty_cache);

  std::vector<RepeatOutcome> outcomes(config.repeats);
  const unsigned threads = std::max(1u, options.threads);
  for (std::size_t first = 0; first < config.repeats; first += threads) {
    const std::size_t last = std::min<std::size_t>(config.repeats, first + threads);
    if (threads == 1) {
      outcomes[first] = run_repeat(config, data, dataset, first);
    } else {
      std::vector<std::future<RepeatOutcome>> batch;
      for (std::size_t r = first; r < last; ++r) {
        batch.push_back(std::async(std::launch::async, run_repeat, std::cref(config), std::cref(data),
                                   std::cref(dataset), r));
      }
      for (std::size_t r = first; r < last; ++r) outcomes[r] = batch[r - first].get();
    }
    for (std::size_t r = first; r < last; ++r) {
      if (options.on_split) options.on_split(r, outcomes[r].split);
      if (options.on_repeat && !outcomes[r].error) options.on_repeat(r, outcomes[r].accuracy);
    }
  }

  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    if (outcomes[r].error) {
      // Aborted repeats are reported, never averaged in.
      result.partial = true;
      if (!result.failed_repeat) {
        result.failed_repeat = r;
        result.error = *outcomes[r].error;
      }
      continue;
    }
    result.accuracies.push_back(outcomes[r].accuracy);
  }
  const auto n = static_cast<double>(result.accuracies.size());
  if (n > 0) {
    result.mean = std::accumulate(result.accuracies.begin(), result.accuracies.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : result.accuracies) ss += (a - result.mean) * (a - result.mean);
    result.stddev = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace geosent
