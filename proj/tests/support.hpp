#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "geosent/experiment.hpp"
#include "geosent/grid.hpp"

namespace testing_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("geosent_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream(path, std::ios::binary) << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(GEOSENT_FIXTURE_DIR) / name;
}

inline geosent::Taxonomies shipped_taxonomies() {
  using namespace geosent;
  Taxonomies t;
  t.geonames = CategoryTaxonomy::load(default_data_dir() / "taxonomy" / "geonames.txt", Provider::geonames);
  t.places = CategoryTaxonomy::load(default_data_dir() / "taxonomy" / "places.txt", Provider::places);
  return t;
}

}  // namespace testing_support
