#include "geosent/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "geosent/error.hpp"

namespace geosent {

namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  for (std::string w; in >> w;) out.push_back(std::move(w));
  return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i]) return false;
  }
  return true;
}

bool contains_url(std::string_view word) {
  std::string lower(word);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower.find("http://") != std::string::npos ||
         lower.find("https://") != std::string::npos || starts_with_ci(word, "www.");
}

bool valid_coordinates(double lat, double lon) {
  return lat >= -90.0 && lat <= 90.0 && lon >= -180.0 && lon <= 180.0;
}

bool parse_jsonl_record(const std::string& line, RawTweet& out) {
  const json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return false;
  for (const char* key : {"id", "text", "lat", "lon"}) {
    if (!j.contains(key)) return false;
  }
  if (!j["id"].is_string() || !j["text"].is_string() || !j["lat"].is_number() ||
      !j["lon"].is_number()) {
    return false;
  }
  out.id = j["id"].get<std::string>();
  out.text = j["text"].get<std::string>();
  out.lat = j["lat"].get<double>();
  out.lon = j["lon"].get<double>();
  return true;
}

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(s, &used);
    return used == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_tsv_record(const std::string& line, RawTweet& out) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (cols.size() != 4) return false;
  out.id = cols[0];
  out.text = cols[1];
  return parse_double(cols[2], out.lat) && parse_double(cols[3], out.lon);
}

}  // namespace

// ---------------------------------------------------------------------------
// Lexicon

void SentimentLexicon::add(const std::string& phrase, double polarity) {
  if (!(polarity >= -1.0 && polarity <= 1.0)) {
    throw FormatError("lexicon polarity out of [-1, 1] for '" + phrase + "'");
  }
  const auto words = split_ws(phrase);
  if (words.empty() || words.size() > kMaxPhraseTokens) {
    throw FormatError("lexicon phrase must have 1..3 tokens: '" + phrase + "'");
  }
  std::string normalized;
  for (const auto& w : words) {
    if (std::any_of(w.begin(), w.end(), [](unsigned char c) { return std::isupper(c); })) {
      throw FormatError("lexicon phrase must be lowercase: '" + phrase + "'");
    }
    if (!normalized.empty()) normalized += ' ';
    normalized += w;
  }
  if (!entries_.emplace(normalized, polarity).second) {
    throw FormatError("duplicate lexicon phrase '" + normalized + "'");
  }
}

void SentimentLexicon::add_negator(const std::string& token) {
  const auto t = trim(token);
  if (t.empty() || t.find(' ') != std::string::npos) {
    throw FormatError("negator must be a single token: '" + token + "'");
  }
  negators_.insert(t);
}

const double* SentimentLexicon::find(const std::string& phrase) const {
  const auto it = entries_.find(phrase);
  return it == entries_.end() ? nullptr : &it->second;
}

SentimentLexicon SentimentLexicon::parse(std::istream& in, const std::string& source) {
  SentimentLexicon lex;
  bool in_negators = false;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty()) continue;
    if (t == "#NEGATORS") {
      in_negators = true;
      continue;
    }
    if (t.front() == '#') continue;
    if (in_negators) {
      lex.add_negator(t);
      continue;
    }
    const auto tab = t.find('\t');
    double polarity = 0.0;
    if (tab == std::string::npos || !parse_double(trim(t.substr(tab + 1)), polarity)) {
      throw FormatError(source + ":" + std::to_string(lineno) +
                        ": expected 'phrase<TAB>polarity'");
    }
    lex.add(t.substr(0, tab), polarity);
  }
  return lex;
}

SentimentLexicon SentimentLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read lexicon " + path.string());
  return parse(in, path.string());
}

// ---------------------------------------------------------------------------
// Loading

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "jsonl") return CorpusFormat::jsonl;
  if (name == "tsv") return CorpusFormat::tsv;
  throw ConfigError("unknown corpus format '" + std::string(name) + "'");
}

CorpusLoad parse_corpus(std::istream& in, CorpusFormat format) {
  CorpusLoad result;
  std::size_t records = 0;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++records;
    RawTweet tweet;
    const bool ok = format == CorpusFormat::jsonl ? parse_jsonl_record(line, tweet)
                                                  : parse_tsv_record(line, tweet);
    if (!ok || tweet.text.empty() || !valid_coordinates(tweet.lat, tweet.lon)) {
      ++result.malformed;
      continue;
    }
    result.tweets.push_back(std::move(tweet));
  }
  if (records > 0 && result.malformed * 2 > records) {
    throw FormatError("corpus has " + std::to_string(result.malformed) + " malformed of " +
                      std::to_string(records) + " records");
  }
  return result;
}

CorpusLoad load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus " + path.string());
  return parse_corpus(in, format);
}

// ---------------------------------------------------------------------------
// Cleaning and scoring

std::vector<std::string> clean_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  for (const auto& word : split_ws(text)) {
    if (contains_url(word)) continue;
    // Words carrying non-ASCII codepoints are dropped whole.
    if (std::any_of(word.begin(), word.end(),
                    [](unsigned char c) { return c >= 0x80; })) {
      continue;
    }
    std::string token;
    for (unsigned char c : word) {
      if (std::isalpha(c)) token += static_cast<char>(std::tolower(c));
    }
    if (token.empty() || token == "rt") continue;
    tokens.push_back(std::move(token));
  }
  return tokens;
}

CleanTweet clean_text(const RawTweet& raw) {
  return {raw.id, clean_tokens(raw.text), raw.lat, raw.lon};
}

double score_sentiment(const CleanTweet& clean, const SentimentLexicon& lexicon) {
  const auto& tokens = clean.tokens;
  double sum = 0.0;
  std::size_t matches = 0;
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t matched_len = 0;
    double polarity = 0.0;
    for (std::size_t n = std::min(SentimentLexicon::kMaxPhraseTokens, tokens.size() - i); n >= 1;
         --n) {
      std::string phrase = tokens[i];
      for (std::size_t k = 1; k < n; ++k) phrase += ' ' + tokens[i + k];
      if (const double* p = lexicon.find(phrase)) {
        matched_len = n;
        polarity = *p;
        break;
      }
    }
    if (matched_len == 0) {
      ++i;
      continue;
    }
    if (i > 0 && lexicon.is_negator(tokens[i - 1])) polarity = -polarity;
    sum += polarity;
    ++matches;
    i += matched_len;
  }
  return matches == 0 ? 0.0 : sum / static_cast<double>(matches);
}

LabeledTweet label_tweet(const CleanTweet& clean, const SentimentLexicon& lexicon) {
  const double score = score_sentiment(clean, lexicon);
  return {clean.id, clean.tokens, clean.lat, clean.lon, score, label(score)};
}

std::vector<LabeledTweet> sample_balanced(std::span<const LabeledTweet> tweets,
                                          std::size_t n_per_class, std::uint64_t seed) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < tweets.size(); ++i) by_class[tweets[i].label == 1].push_back(i);
  for (int cls = 0; cls < 2; ++cls) {
    if (by_class[cls].size() < n_per_class) {
      throw ShortageError(std::string(cls == 1 ? "positive" : "negative") + " class (label " +
                          std::to_string(cls) + ") has " +
                          std::to_string(by_class[cls].size()) + " tweets, need " +
                          std::to_string(n_per_class));
    }
  }
  std::mt19937_64 rng(seed);
  std::vector<LabeledTweet> out;
  out.reserve(2 * n_per_class);
  for (auto& pool : by_class) {
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t k = 0; k < n_per_class; ++k) out.push_back(tweets[pool[k]]);
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

// ---------------------------------------------------------------------------
// Labeled JSONL

void write_labeled_jsonl(std::ostream& out, std::span<const LabeledTweet> tweets) {
  for (const auto& t : tweets) {
    json j = {{"id", t.id},   {"tokens", t.tokens}, {"lat", t.lat},
              {"lon", t.lon}, {"score", t.score},   {"label", t.label}};
    out << j.dump() << '\n';
  }
}

void save_labeled(const std::filesystem::path& path, std::span<const LabeledTweet> tweets) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_labeled_jsonl(out, tweets);
}

std::vector<LabeledTweet> load_labeled(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read labeled corpus " + path.string());
  std::vector<LabeledTweet> out;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      LabeledTweet t;
      t.id = j.at("id").get<std::string>();
      t.tokens = j.at("tokens").get<std::vector<std::string>>();
      t.lat = j.at("lat").get<double>();
      t.lon = j.at("lon").get<double>();
      t.score = j.at("score").get<double>();
      t.label = j.at("label").get<int>();
      if (t.label != 0 && t.label != 1) throw FormatError("label must be 0 or 1");
      out.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace geosent
