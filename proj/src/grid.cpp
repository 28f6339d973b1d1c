#include "geosent/grid.hpp"

#include <fstream>
#include <map>

#include "geosent/digest.hpp"
#include "geosent/error.hpp"
#include "geosent/table.hpp"

#ifndef GEOSENT_DATA_DIR
#define GEOSENT_DATA_DIR "data"
#endif

namespace geosent {

using nlohmann::json;
namespace fs = std::filesystem;

fs::path default_data_dir() {
  if (const char* env = std::getenv("GEOSENT_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return GEOSENT_DATA_DIR;
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

nn::ModelSpec spec_with(nn::ModelKind kind, const json& overrides) {
  json j = overrides.is_object() ? overrides : json::object();
  j["kind"] = nn::to_string(kind);
  return nn::ModelSpec::from_json(j);
}

}  // namespace

GridConfig GridConfig::from_json(const json& j, const fs::path& base_dir) {
  GridConfig c;
  try {
    c.base_dir = base_dir;
    c.corpus = resolve(base_dir, j.at("corpus").get<std::string>());
    if (j.contains("cache")) c.cache = resolve(base_dir, j["cache"].get<std::string>());
    const json tax = j.value("taxonomies", json::object());
    c.geonames_taxonomy = tax.contains("geonames") ? resolve(base_dir, tax["geonames"].get<std::string>())
                                                   : default_data_dir() / "taxonomy" / "geonames.txt";
    c.places_taxonomy = tax.contains("places") ? resolve(base_dir, tax["places"].get<std::string>())
                                               : default_data_dir() / "taxonomy" / "places.txt";
    c.output_dir = resolve(base_dir, j.value("output_dir", std::string("results")));
    c.strategy = parse_concat_strategy(j.value("strategy", std::string("literal")));
    c.min_count = j.value("min_count", c.min_count);
    c.repeats = j.value("repeats", c.repeats);
    c.epochs = j.value("epochs", c.epochs);
    c.split_ratio = j.value("split_ratio", c.split_ratio);
    c.base_seed = j.value("base_seed", c.base_seed);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.threads = j.value("threads", c.threads);
    c.cnn = spec_with(nn::ModelKind::cnn, j.value("cnn", json::object()));
    c.bilstm = spec_with(nn::ModelKind::bilstm, j.value("bilstm", json::object()));
    const json adam = j.value("adam", json::object());
    c.adam.lr = adam.value("lr", c.adam.lr);
    c.adam.beta1 = adam.value("beta1", c.adam.beta1);
    c.adam.beta2 = adam.value("beta2", c.adam.beta2);
    c.adam.epsilon = adam.value("epsilon", c.adam.epsilon);
    for (const auto& r : j.at("grid")) {
      GridRow row;
      row.model = nn::parse_model_kind(r.at("model").get<std::string>());
      row.embedding = r.value("embedding", row.embedding);
      row.dim = r.value("dim", row.dim);
      if (r.contains("variants")) {
        row.variants.clear();
        for (const auto& v : r["variants"]) row.variants.push_back(parse_variant(v.get<std::string>()));
      }
      c.rows.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad grid config: ") + e.what());
  }
  return c;
}

GridConfig GridConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  return from_json(j, path.parent_path());
}

ExperimentConfig GridConfig::cell(const GridRow& row, DatasetVariant variant) const {
  ExperimentConfig e;
  e.model = row.model;
  e.embedding = row.embedding;
  e.dim = row.dim;
  e.variant = variant;
  e.repeats = repeats;
  e.epochs = epochs;
  e.split_ratio = split_ratio;
  e.base_seed = base_seed;
  e.batch_size = batch_size;
  e.strategy = strategy;
  e.spec = row.model == nn::ModelKind::cnn ? cnn : bilstm;
  e.adam = adam;
  e.validate();
  return e;
}

GridOutcome run_grid(const GridConfig& config, const std::function<void(const RunResult&)>& on_result,
                     const std::function<void(std::size_t, const SplitSummary&)>& on_split) {
  ExperimentData data;
  data.tweets = load_labeled(config.corpus);
  data.vocab = Vocabulary::build(
      [&] {
        std::vector<std::vector<std::string>> lists;
        for (const auto& t : data.tweets) lists.push_back(t.tokens);
        return lists;
      }(),
      config.min_count);
  data.taxonomies.geonames = CategoryTaxonomy::load(config.geonames_taxonomy, Provider::geonames);
  data.taxonomies.places = CategoryTaxonomy::load(config.places_taxonomy, Provider::places);
  data.input_digests["corpus"] = sha256_file(config.corpus);
  data.input_digests["vocabulary"] = data.vocab.digest();
  data.input_digests["geonames_taxonomy"] = data.taxonomies.geonames->digest();
  data.input_digests["places_taxonomy"] = data.taxonomies.places->digest();

  std::optional<GeoCache> cache;
  if (!config.cache.empty()) {
    if (!fs::exists(config.cache)) throw IoError("cache " + config.cache.string() + " does not exist");
    cache.emplace(config.cache);
    data.cache = &*cache;
    data.input_digests["cache"] = sha256_file(config.cache);
  }

  fs::create_directories(config.output_dir);
  GridOutcome outcome;
  outcome.results_log = config.output_dir / "results.jsonl";
  outcome.csv_table = config.output_dir / "table.csv";
  outcome.markdown_table = config.output_dir / "table.md";
  data.vocab.save_jsonl(config.output_dir / "vocab.jsonl");
  std::ofstream(outcome.results_log, std::ios::trunc);

  std::map<std::string, EmbeddingTable> tables;
  const json base_digests = data.input_digests;
  for (const auto& row : config.rows) {
    data.embeddings = nullptr;
    data.input_digests = base_digests;
    if (row.embedding != "random") {
      auto it = tables.find(row.embedding);
      if (it == tables.end()) {
        it = tables.emplace(row.embedding, load_embeddings(resolve(config.base_dir, row.embedding))).first;
      }
      data.embeddings = &it->second;
      data.input_digests["embeddings"] = it->second.digest();
    }
    for (auto variant : row.variants) {
      RunOptions options;
      options.threads = config.threads;
      options.on_split = on_split;
      auto result = run_experiment(config.cell(row, variant), data, options);
      append_result(outcome.results_log, result);
      if (on_result) on_result(result);
      outcome.results.push_back(std::move(result));
    }
  }
  std::ofstream(outcome.csv_table) << emit_table(outcome.results, TableFormat::csv);
  std::ofstream(outcome.markdown_table) << emit_table(outcome.results, TableFormat::markdown);
  return outcome;
}

}  // namespace geosent
