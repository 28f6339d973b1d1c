#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geosent/experiment.hpp"

namespace geosent {

enum class TableFormat { csv, markdown };

TableFormat parse_table_format(std::string_view name);

struct TableCell {
  double mean = 0.0;
  std::string digest;
  bool partial = false;
};

struct TableRow {
  std::string model;
  std::string embedding;
  std::size_t dim = 0;
  std::array<std::optional<TableCell>, 5> cells;  // kAllVariants order

  /// Index of the highest populated location-feature column, if any.
  std::optional<std::size_t> best_concatenated() const;
};

/// Rows keyed by (model, embedding, dim), sorted by that key.
struct ResultsTable {
  std::vector<TableRow> rows;

  static ResultsTable build(std::span<const RunResult> results);
};

/// Cell text: mean accuracy x 100 with two decimals.
std::string format_cell(double mean);

std::string emit_table(std::span<const RunResult> results, TableFormat format);

std::vector<RunResult> load_results(const std::filesystem::path& path);
void append_result(const std::filesystem::path& path, const RunResult& result);

}  // namespace geosent
