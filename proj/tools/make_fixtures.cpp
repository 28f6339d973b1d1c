// Regenerates the synthetic fixtures shipped under tests/fixtures.
//   make_fixtures <output-dir>

#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "geosent/corpus.hpp"
#include "geosent/grid.hpp"
#include "geosent/synthetic.hpp"

namespace fs = std::filesystem;
using namespace geosent;

namespace {

void write_raw(const fs::path& path, const std::vector<RawTweet>& raw) {
  std::ofstream out(path);
  for (const auto& t : raw) {
    out << nlohmann::json{{"id", t.id}, {"text", t.text}, {"lat", t.lat}, {"lon", t.lon}}.dump() << "\n";
  }
}

void write_corpus(const fs::path& dir, const std::string& stem, const SyntheticCorpus& corpus) {
  save_labeled(dir / (stem + ".jsonl"), corpus.labeled);
  write_raw(dir / (stem + "_raw.jsonl"), corpus.raw);
  const auto cache_path = dir / (stem + "_cache.jsonl");
  fs::remove(cache_path);
  GeoCache cache(cache_path);
  corpus.fill_cache(cache);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures <output-dir>\n";
    return 64;
  }
  const fs::path dir = argv[1];
  fs::create_directories(dir);
  Taxonomies taxonomies;
  taxonomies.geonames = CategoryTaxonomy::load(default_data_dir() / "taxonomy" / "geonames.txt", Provider::geonames);
  taxonomies.places = CategoryTaxonomy::load(default_data_dir() / "taxonomy" / "places.txt", Provider::places);

  LocationSignalOptions options;
  options.n_per_class = 250;
  options.seed = 2019;
  write_corpus(dir, "signal500", make_location_signal_corpus(options, taxonomies));

  options.n_per_class = 20;
  options.seed = 7;
  write_corpus(dir, "signal40", make_location_signal_corpus(options, taxonomies));
  std::cout << "wrote fixtures to " << dir << "\n";
  return 0;
}
