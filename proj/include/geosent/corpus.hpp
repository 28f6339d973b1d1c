#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace geosent {

struct RawTweet {
  std::string id;
  std::string text;
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const RawTweet&, const RawTweet&) = default;
};

/// Tokenized message. `tokens` may be empty when cleaning stripped
/// everything; callers can test `stripped()` rather than losing the record.
struct CleanTweet {
  std::string id;
  std::vector<std::string> tokens;
  double lat = 0.0;
  double lon = 0.0;

  bool stripped() const { return tokens.empty(); }
  friend bool operator==(const CleanTweet&, const CleanTweet&) = default;
};

struct LabeledTweet {
  std::string id;
  std::vector<std::string> tokens;
  double lat = 0.0;
  double lon = 0.0;
  double score = 0.0;
  int label = 0;

  CleanTweet clean() const { return {id, tokens, lat, lon}; }
  friend bool operator==(const LabeledTweet&, const LabeledTweet&) = default;
};

/// Phrase polarity table with single-token negation.
class SentimentLexicon {
 public:
  static constexpr std::size_t kMaxPhraseTokens = 3;

  SentimentLexicon() = default;

  /// Parses `phrase<TAB>polarity` lines followed by an optional
  /// `#NEGATORS` section with one token per line.
  static SentimentLexicon load(const std::filesystem::path& path);
  static SentimentLexicon parse(std::istream& in, const std::string& source = "<stream>");

  void add(const std::string& phrase, double polarity);
  void add_negator(const std::string& token);

  const double* find(const std::string& phrase) const;
  bool is_negator(const std::string& token) const { return negators_.count(token) > 0; }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, double>& entries() const { return entries_; }
  const std::set<std::string>& negators() const { return negators_; }

 private:
  std::map<std::string, double> entries_;
  std::set<std::string> negators_;
};

enum class CorpusFormat { jsonl, tsv };

CorpusFormat parse_corpus_format(std::string_view name);

struct CorpusLoad {
  std::vector<RawTweet> tweets;
  std::size_t malformed = 0;
};

/// Reads a JSONL or TSV corpus. Bad records are skipped and counted; more
/// than half of the records being bad raises FormatError.
CorpusLoad load_corpus(const std::filesystem::path& path, CorpusFormat format);
CorpusLoad parse_corpus(std::istream& in, CorpusFormat format);

std::vector<std::string> clean_tokens(std::string_view text);
CleanTweet clean_text(const RawTweet& raw);

/// Longest-match phrase scan; mean polarity of the matches, 0 when nothing matches.
double score_sentiment(const CleanTweet& clean, const SentimentLexicon& lexicon);

inline int label(double score) { return score > 0.0 ? 1 : 0; }

LabeledTweet label_tweet(const CleanTweet& clean, const SentimentLexicon& lexicon);

/// Draws `n_per_class` tweets of each label without replacement and returns
/// them in a seed-determined shuffled order.
std::vector<LabeledTweet> sample_balanced(std::span<const LabeledTweet> tweets,
                                          std::size_t n_per_class, std::uint64_t seed);

void write_labeled_jsonl(std::ostream& out, std::span<const LabeledTweet> tweets);
void save_labeled(const std::filesystem::path& path, std::span<const LabeledTweet> tweets);
std::vector<LabeledTweet> load_labeled(const std::filesystem::path& path);

}  // namespace geosent
