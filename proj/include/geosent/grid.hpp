#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "geosent/experiment.hpp"

namespace geosent {

/// Declarative experiment grid, read from one JSON file. Relative paths are
/// resolved against the file's directory.
///
///   {
///     "corpus": "balanced.jsonl",          labeled JSONL (ingest/label output)
///     "cache": "cache.jsonl",
///     "taxonomies": {"geonames": "...", "places": "..."},
///     "strategy": "literal", "min_count": 1,
///     "repeats": 10, "epochs": 20, "split_ratio": 0.7, "base_seed": 0, "batch_size": 32,
///     "cnn": {...}, "bilstm": {...}, "adam": {...},   architecture / optimizer overrides
///     "grid": [{"model": "cnn", "embedding": "random", "dim": 200, "variants": [...]}],
///     "output_dir": "results", "threads": 1
///   }
struct GridRow {
  nn::ModelKind model = nn::ModelKind::cnn;
  std::string embedding = "random";
  std::size_t dim = 200;
  std::vector<DatasetVariant> variants{kAllVariants.begin(), kAllVariants.end()};
};

struct GridConfig {
  std::filesystem::path corpus;
  std::filesystem::path cache;
  std::filesystem::path geonames_taxonomy;
  std::filesystem::path places_taxonomy;
  std::filesystem::path output_dir;
  std::filesystem::path base_dir;  // for resolving embedding paths
  ConcatStrategy strategy = ConcatStrategy::literal;
  std::size_t min_count = 1;
  std::size_t repeats = 10;
  std::size_t epochs = 20;
  double split_ratio = 0.7;
  std::uint64_t base_seed = 0;
  std::size_t batch_size = 32;
  nn::ModelSpec cnn;
  nn::ModelSpec bilstm;
  nn::AdamConfig adam;
  unsigned threads = 1;
  std::vector<GridRow> rows;

  static GridConfig load(const std::filesystem::path& path);
  static GridConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

  ExperimentConfig cell(const GridRow& row, DatasetVariant variant) const;
};

/// Directory holding the shipped lexicon and taxonomies.
std::filesystem::path default_data_dir();

struct GridOutcome {
  std::vector<RunResult> results;
  std::filesystem::path results_log;
  std::filesystem::path csv_table;
  std::filesystem::path markdown_table;
};

/// Runs every grid cell, logging each RunResult to results.jsonl (started
/// fresh per invocation) and writing table.csv / table.md. `on_split` sees
/// the train/test sizes of every repeat.
GridOutcome run_grid(const GridConfig& config, const std::function<void(const RunResult&)>& on_result = {},
                     const std::function<void(std::size_t, const SplitSummary&)>& on_split = {});

}  // namespace geosent
