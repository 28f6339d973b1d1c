#include "geosent/encode.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "geosent/digest.hpp"
#include "geosent/error.hpp"

namespace geosent {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  append("<pad>");
  append("<unk>");
}

void Vocabulary::append(const std::string& token) {
  token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> token_lists,
                             std::size_t min_count) {
  std::map<std::string, std::size_t> freq;
  for (const auto& tokens : token_lists) {
    for (const auto& t : tokens) ++freq[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : freq) {
    if (n >= min_count) ranked.emplace_back(tok, n);
  }
  // std::map iteration is already lexical; stable sort keeps it for ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (const auto& [tok, n] : ranked) vocab.append(tok);
  return vocab;
}

Vocabulary Vocabulary::build(std::span<const CleanTweet> corpus, std::size_t min_count) {
  std::vector<std::vector<std::string>> lists;
  lists.reserve(corpus.size());
  for (const auto& t : corpus) lists.push_back(t.tokens);
  return build(lists, min_count);
}

int Vocabulary::id(const std::string& token) const {
  const auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

void Vocabulary::save_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    out << json{{"token", id_to_token_[i]}, {"id", i}}.dump() << '\n';
  }
}

Vocabulary Vocabulary::load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary " + path.string());
  Vocabulary vocab;
  std::size_t expected = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const auto id = j.at("id").get<std::size_t>();
      if (id != expected) throw FormatError("vocabulary ids must be dense and ordered");
      if (id >= 2) vocab.append(j.at("token").get<std::string>());
      ++expected;
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  return vocab;
}

std::string Vocabulary::digest() const {
  std::string joined;
  for (const auto& t : id_to_token_) joined += t + '\n';
  return sha256_hex(joined);
}

// ---------------------------------------------------------------------------
// Sequences and concatenation

EncodedSequence encode_pad(std::span<const std::string> tokens, const Vocabulary& vocab) {
  EncodedSequence seq;
  seq.ids.fill(Vocabulary::kPad);
  const std::size_t kept = std::min(tokens.size(), kSequenceLength);
  const std::size_t offset = kSequenceLength - kept;
  for (std::size_t i = 0; i < kept; ++i) seq.ids[offset + i] = vocab.id(tokens[i]);
  return seq;
}

EncodedSequence encode_pad(const CleanTweet& tweet, const Vocabulary& vocab) {
  return encode_pad(std::span<const std::string>(tweet.tokens), vocab);
}

std::string to_string(ConcatStrategy s) {
  switch (s) {
    case ConcatStrategy::text_only: return "text_only";
    case ConcatStrategy::literal: return "literal";
    case ConcatStrategy::reserved: return "reserved";
  }
  return "?";
}

ConcatStrategy parse_concat_strategy(std::string_view name) {
  if (name == "text_only") return ConcatStrategy::text_only;
  if (name == "literal") return ConcatStrategy::literal;
  if (name == "reserved") return ConcatStrategy::reserved;
  throw ConfigError("unknown concatenation strategy '" + std::string(name) + "'");
}

FeatureVector concat_features(const EncodedSequence& seq, const CategoryVector* category,
                              ConcatStrategy strategy, const Vocabulary& vocab) {
  FeatureVector out;
  out.strategy = strategy;
  out.ids.assign(seq.ids.begin(), seq.ids.end());
  if (strategy == ConcatStrategy::text_only) return out;
  if (category == nullptr) {
    throw ConfigError(to_string(strategy) + " concatenation needs a category vector");
  }
  const auto& values = category->values;
  const auto V = static_cast<long>(vocab.size());
  const auto limit = V + static_cast<long>(values.size());
  out.ids.reserve(kSequenceLength + values.size());
  if (strategy == ConcatStrategy::literal) {
    for (int v : values) {
      if (v < 0 || v >= limit) {
        throw RangeError("category value " + std::to_string(v) + " exceeds embedding rows " +
                         std::to_string(limit));
      }
      out.ids.push_back(v);
    }
    return out;
  }
  const bool scaled = category->mode == VectorMode::count;
  if (scaled) out.weights.assign(kSequenceLength, 1.0f);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const bool present = values[i] > 0;
    out.ids.push_back(present ? static_cast<int>(V + static_cast<long>(i)) : Vocabulary::kPad);
    if (scaled) out.weights.push_back(present ? static_cast<float>(values[i]) : 1.0f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding files

const float* EmbeddingTable::find(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? nullptr : values_.data() + it->second * dim_;
}

namespace {

bool parse_float(std::string_view s, float& out) {
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool is_header(const std::vector<std::string_view>& fields) {
  if (fields.size() != 2) return false;
  for (auto f : fields) {
    if (f.empty() || !std::all_of(f.begin(), f.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return false;
    }
  }
  return true;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

}  // namespace

EmbeddingTable EmbeddingTable::parse(std::istream& in, const std::string& source) {
  EmbeddingTable table;
  std::size_t lineno = 0;
  bool first = true;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (first) {
      first = false;
      if (is_header(fields)) continue;
    }
    if (table.dim_ == 0) {
      table.dim_ = fields.size() - 1;
      if (table.dim_ == 0) throw FormatError(source + ":" + std::to_string(lineno) + ": no vector values");
    }
    if (fields.size() - 1 != table.dim_) {
      throw FormatError(source + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(table.dim_) + " values, found " +
                        std::to_string(fields.size() - 1));
    }
    std::vector<float> vec(table.dim_);
    for (std::size_t k = 0; k < table.dim_; ++k) {
      if (!parse_float(fields[k + 1], vec[k])) {
        throw FormatError(source + ":" + std::to_string(lineno) + ": bad number '" +
                          std::string(fields[k + 1]) + "'");
      }
    }
    std::string token(fields[0]);
    if (table.index_.count(token)) continue;
    table.index_.emplace(token, table.tokens_.size());
    table.tokens_.push_back(std::move(token));
    table.values_.insert(table.values_.end(), vec.begin(), vec.end());
  }
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read embeddings " + path.string());
  auto table = EmbeddingTable::parse(in, path.string());
  table.digest_ = sha256_file(path);
  return table;
}

EmbeddingMatrix build_embedding_matrix(const Vocabulary& vocab, std::size_t taxonomy_size,
                                       const EmbeddingTable* table, std::size_t dim,
                                       std::uint64_t seed) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  if (table != nullptr && table->dim() != dim) {
    throw ConfigError("embedding file has dimension " + std::to_string(table->dim()) +
                      ", configuration asks for " + std::to_string(dim));
  }
  const auto rows = static_cast<Eigen::Index>(vocab.size() + taxonomy_size);
  EmbeddingMatrix m;
  m.init_seed = seed;
  m.source = table == nullptr ? "random" : "sha256:" + table->digest();
  m.rows.resize(rows, static_cast<Eigen::Index>(dim));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> init(-kEmbeddingInitRange, kEmbeddingInitRange);
  // Every row draws its values so the stream does not depend on which rows match.
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < m.rows.cols(); ++c) m.rows(r, c) = init(rng);
  }
  m.rows.row(Vocabulary::kPad).setZero();
  if (table != nullptr) {
    for (std::size_t id = 2; id < vocab.size(); ++id) {
      if (const float* v = table->find(vocab.token(static_cast<int>(id)))) {
        m.rows.row(static_cast<Eigen::Index>(id)) =
            Eigen::Map<const Eigen::RowVectorXf>(v, static_cast<Eigen::Index>(dim));
      }
    }
  }
  return m;
}

}  // namespace geosent
