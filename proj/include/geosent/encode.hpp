#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "geosent/corpus.hpp"
#include "geosent/geo.hpp"

namespace geosent {

inline constexpr std::size_t kSequenceLength = 25;

/// Token ids: 0 is padding, 1 is out-of-vocabulary, 2.. are corpus tokens
/// ordered by descending frequency then lexically.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();

  static Vocabulary build(std::span<const CleanTweet> corpus, std::size_t min_count = 1);
  static Vocabulary build(std::span<const std::vector<std::string>> token_lists,
                          std::size_t min_count = 1);

  int id(const std::string& token) const;
  const std::string& token(int id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }
  bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }
  /// Total id count V, reserved ids included.
  std::size_t size() const { return id_to_token_.size(); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  void save_jsonl(const std::filesystem::path& path) const;
  static Vocabulary load_jsonl(const std::filesystem::path& path);
  std::string digest() const;

 private:
  void append(const std::string& token);

  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

struct EncodedSequence {
  std::array<int, kSequenceLength> ids{};
};

/// Left-pads with PAD and truncates from the right to exactly 25 ids.
EncodedSequence encode_pad(const CleanTweet& tweet, const Vocabulary& vocab);
EncodedSequence encode_pad(std::span<const std::string> tokens, const Vocabulary& vocab);

enum class ConcatStrategy { text_only, literal, reserved };

std::string to_string(ConcatStrategy s);
ConcatStrategy parse_concat_strategy(std::string_view name);

/// Model input: embedding indices plus optional per-position scale factors.
/// `weights` is empty unless a reserved-strategy count vector scales the
/// looked-up location rows.
struct FeatureVector {
  std::vector<int> ids;
  std::vector<float> weights;
  ConcatStrategy strategy = ConcatStrategy::text_only;

  std::size_t size() const { return ids.size(); }
  float weight(std::size_t i) const { return weights.empty() ? 1.0f : weights[i]; }
};

FeatureVector concat_features(const EncodedSequence& seq, const CategoryVector* category,
                              ConcatStrategy strategy, const Vocabulary& vocab);

/// Pre-trained vectors keyed by token.
class EmbeddingTable {
 public:
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return tokens_.size(); }
  /// Null when the token is absent.
  const float* find(const std::string& token) const;
  const std::string& digest() const { return digest_; }

  static EmbeddingTable parse(std::istream& in, const std::string& source = "<stream>");

 private:
  friend EmbeddingTable load_embeddings(const std::filesystem::path& path);

  std::size_t dim_ = 0;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<float> values_;
  std::string digest_;
};

/// Text format `token v1 ... vd`, optional `N d` header line; first
/// occurrence wins for duplicate tokens.
EmbeddingTable load_embeddings(const std::filesystem::path& path);

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EmbeddingMatrix {
  RowMatrixXf rows;       // (V + taxonomy size) x d
  std::uint64_t init_seed = 0;
  std::string source;     // "random" or "sha256:<digest>"

  std::size_t dim() const { return static_cast<std::size_t>(rows.cols()); }
};

inline constexpr float kEmbeddingInitRange = 0.05f;

EmbeddingMatrix build_embedding_matrix(const Vocabulary& vocab, std::size_t taxonomy_size,
                                       const EmbeddingTable* table, std::size_t dim,
                                       std::uint64_t seed);

}  // namespace geosent
