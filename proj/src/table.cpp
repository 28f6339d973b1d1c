#include "geosent/table.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "geosent/error.hpp"

namespace geosent {

TableFormat parse_table_format(std::string_view name) {
  if (name == "csv") return TableFormat::csv;
  if (name == "markdown" || name == "md") return TableFormat::markdown;
  throw ConfigError("unknown table format '" + std::string(name) + "'");
}

std::string format_cell(double mean) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", mean * 100.0);
  return buf;
}

std::optional<std::size_t> TableRow::best_concatenated() const {
  std::optional<std::size_t> best;
  for (std::size_t c = 1; c < cells.size(); ++c) {
    if (!cells[c] || cells[c]->partial) continue;
    if (!best || cells[c]->mean > cells[*best]->mean) best = c;
  }
  return best;
}

ResultsTable ResultsTable::build(std::span<const RunResult> results) {
  std::map<std::tuple<std::string, std::string, std::size_t>, TableRow> rows;
  for (const auto& r : results) {
    auto& row = rows[{r.model, r.embedding, r.dim}];
    row.model = r.model;
    row.embedding = r.embedding;
    row.dim = r.dim;
    const auto col = static_cast<std::size_t>(
        std::find(kAllVariants.begin(), kAllVariants.end(), r.variant) - kAllVariants.begin());
    if (row.cells[col]) {
      throw ConflictError("duplicate result for " + r.model + "/" + r.embedding + "/" + std::to_string(r.dim) +
                          "/" + to_string(r.variant));
    }
    row.cells[col] = TableCell{r.mean, r.config_digest, r.partial};
  }
  ResultsTable table;
  for (auto& [key, row] : rows) table.rows.push_back(std::move(row));
  return table;
}

namespace {

const char* kColumnTitles[5] = {"Text only", "Text & One-hot Geonames", "Text & One-hot Places",
                                "Text & Count of Geonames", "Text & Count of Places"};

std::string cell_text(const std::optional<TableCell>& cell) {
  if (!cell) return "";
  return cell->partial ? "aborted" : format_cell(cell->mean);
}

std::string emit_csv(const ResultsTable& table) {
  std::ostringstream out;
  out << "model,embedding,dim";
  for (auto v : kAllVariants) out << ',' << to_string(v);
  out << ",best_concatenated";
  for (auto v : kAllVariants) out << ',' << to_string(v) << "_digest";
  out << '\n';
  for (const auto& row : table.rows) {
    out << row.model << ',' << row.embedding << ',' << row.dim;
    for (const auto& cell : row.cells) out << ',' << cell_text(cell);
    const auto best = row.best_concatenated();
    out << ',' << (best ? to_string(kAllVariants[*best]) : "");
    for (const auto& cell : row.cells) out << ',' << (cell ? cell->digest : "");
    out << '\n';
  }
  return out.str();
}

std::string emit_markdown(const ResultsTable& table) {
  // Best text-only cell per (model, embedding) group is underlined; the best
  // location-feature cell of each row is bold.
  std::map<std::pair<std::string, std::string>, std::size_t> best_text;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    if (!row.cells[0] || row.cells[0]->partial) continue;
    const auto key = std::make_pair(row.model, row.embedding);
    const auto it = best_text.find(key);
    if (it == best_text.end() || row.cells[0]->mean > table.rows[it->second].cells[0]->mean) best_text[key] = i;
  }
  std::ostringstream out;
  out << "| Model | Embedding | Dim |";
  for (const char* t : kColumnTitles) out << ' ' << t << " |";
  out << "\n|---|---|---:|";
  for (std::size_t c = 0; c < 5; ++c) out << "---:|";
  out << '\n';
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const auto best = row.best_concatenated();
    const auto bt = best_text.find({row.model, row.embedding});
    out << "| " << row.model << " | " << row.embedding << " | " << row.dim << " |";
    for (std::size_t c = 0; c < row.cells.size(); ++c) {
      std::string text = cell_text(row.cells[c]);
      if (c == 0 && bt != best_text.end() && bt->second == i) text = "<u>" + text + "</u>";
      if (best && *best == c) text = "**" + text + "**";
      out << ' ' << text << " |";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace

std::string emit_table(std::span<const RunResult> results, TableFormat format) {
  const auto table = ResultsTable::build(results);
  return format == TableFormat::csv ? emit_csv(table) : emit_markdown(table);
}

std::vector<RunResult> load_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read results " + path.string());
  std::vector<RunResult> out;
  for (std::string line; std::getline(in, line);) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw FormatError("bad JSON in " + path.string());
    out.push_back(RunResult::from_json(j));
  }
  return out;
}

void append_result(const std::filesystem::path& path, const RunResult& result) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out << result.to_json().dump() << '\n';
}

}  // namespace geosent
