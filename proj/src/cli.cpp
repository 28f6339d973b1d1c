#include "geosent/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "geosent/corpus.hpp"
#include "geosent/digest.hpp"
#include "geosent/encode.hpp"
#include "geosent/error.hpp"
#include "geosent/experiment.hpp"
#include "geosent/geo.hpp"
#include "geosent/grid.hpp"
#include "geosent/nn/checkpoint.hpp"
#include "geosent/nn/gradcheck.hpp"
#include "geosent/table.hpp"

namespace geosent::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TaxonomyPaths {
  std::string geonames = (default_data_dir() / "taxonomy" / "geonames.txt").string();
  std::string places = (default_data_dir() / "taxonomy" / "places.txt").string();

  // Entries look like `geonames=path` or `places=path`.
  void apply(const std::vector<std::string>& specs) {
    for (const auto& s : specs) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--taxonomy expects PROVIDER=PATH, got '" + s + "'");
      const auto provider = parse_provider(s.substr(0, eq));
      (provider == Provider::geonames ? geonames : places) = s.substr(eq + 1);
    }
  }

  Taxonomies load() const {
    Taxonomies t;
    t.geonames = CategoryTaxonomy::load(geonames, Provider::geonames);
    t.places = CategoryTaxonomy::load(places, Provider::places);
    return t;
  }
};

void add_taxonomy_option(CLI::App* cmd, std::vector<std::string>& specs) {
  cmd->add_option("--taxonomy", specs,
                  "Taxonomy override as PROVIDER=PATH, repeatable (defaults: shipped data/taxonomy/*.txt)");
}

std::vector<std::vector<std::string>> token_lists(const std::vector<LabeledTweet>& tweets) {
  std::vector<std::vector<std::string>> lists;
  lists.reserve(tweets.size());
  for (const auto& t : tweets) lists.push_back(t.tokens);
  return lists;
}

// ---- ingest ---------------------------------------------------------------

struct IngestArgs {
  std::string corpus, format = "jsonl", lexicon = (default_data_dir() / "lexicon.tsv").string(), out;
};

int run_ingest(const IngestArgs& a, std::ostream& out) {
  const auto loaded = load_corpus(a.corpus, parse_corpus_format(a.format));
  const auto lexicon = SentimentLexicon::load(a.lexicon);
  std::vector<LabeledTweet> labeled;
  std::size_t stripped = 0;
  for (const auto& raw : loaded.tweets) {
    const auto clean = clean_text(raw);
    if (clean.stripped()) {
      ++stripped;
      continue;
    }
    labeled.push_back(label_tweet(clean, lexicon));
  }
  save_labeled(a.out, labeled);
  const auto positive = std::count_if(labeled.begin(), labeled.end(), [](const auto& t) { return t.label == 1; });
  out << "read " << loaded.tweets.size() << " tweets (" << loaded.malformed << " malformed skipped, " << stripped
      << " empty after cleaning)\n"
      << "wrote " << labeled.size() << " labeled tweets to " << a.out << ": " << positive << " positive, "
      << labeled.size() - positive << " negative\n";
  return 0;
}

// ---- label ----------------------------------------------------------------

struct LabelArgs {
  std::string corpus, lexicon, out;
  std::size_t per_class = 250;
  std::uint64_t seed = 0;
};

int run_label(const LabelArgs& a, std::ostream& out) {
  auto tweets = load_labeled(a.corpus);
  if (!a.lexicon.empty()) {
    const auto lexicon = SentimentLexicon::load(a.lexicon);
    for (auto& t : tweets) t = label_tweet(t.clean(), lexicon);
  }
  const auto sample = a.per_class == 0 ? tweets : sample_balanced(tweets, a.per_class, a.seed);
  save_labeled(a.out, sample);
  out << "wrote " << sample.size() << " tweets to " << a.out << "\n";
  return 0;
}

// ---- geofetch -------------------------------------------------------------

struct GeofetchArgs {
  std::string corpus, cache, provider = "all";
  double radius = kStandardRadiusM;
  bool offline = false;
  FetcherOptions fetcher;
  std::size_t progress_every = 50;
};

int run_geofetch(const GeofetchArgs& a, std::ostream& out, std::ostream& err) {
  const auto tweets = load_labeled(a.corpus);
  std::vector<Provider> providers;
  if (a.provider == "all") {
    providers = {Provider::geonames, Provider::places};
  } else {
    providers = {parse_provider(a.provider)};
  }
  GeoCache cache{fs::path(a.cache)};
  const std::size_t cached_before = cache.size();
  NearbyFetcher fetcher(cache, a.offline ? nullptr : std::shared_ptr<HttpTransport>(make_http_transport()),
                        a.fetcher);
  const auto mode = a.offline ? FetchMode::offline : FetchMode::online;

  std::vector<std::string> misses;
  const std::size_t total = tweets.size() * providers.size();
  std::size_t done = 0;
  for (const auto provider : providers) {
    for (const auto& t : tweets) {
      try {
        fetcher.fetch({t.lat, t.lon}, provider, a.radius, mode);
      } catch (const CacheMissError& e) {
        misses.push_back(e.key());
      }
      if (++done % a.progress_every == 0 || done == total) {
        out << "progress " << done << "/" << total << " (" << fetcher.requests_issued() << " requests)\n";
      }
    }
  }
  out << "cache " << a.cache << ": " << cached_before << " -> " << cache.size() << " entries\n";
  if (!misses.empty()) {
    err << "cache miss report: " << misses.size() << " lookups not cached\n";
    for (const auto& key : misses) err << "  " << key << "\n";
    return static_cast<int>(ErrorClass::provider);
  }
  return 0;
}

// ---- encode ---------------------------------------------------------------

struct EncodeArgs {
  std::string corpus, cache, variant = "text_only", strategy = "literal", vocab_out, out;
  std::vector<std::string> taxonomy;
  std::size_t min_count = 1;
};

int run_encode(const EncodeArgs& a, std::ostream& out) {
  const auto tweets = load_labeled(a.corpus);
  const auto vocab = Vocabulary::build(token_lists(tweets), a.min_count);
  TaxonomyPaths paths;
  paths.apply(a.taxonomy);
  const auto taxonomies = paths.load();
  const auto variant = parse_variant(a.variant);
  std::optional<GeoCache> cache;
  if (!a.cache.empty()) {
    if (!fs::exists(a.cache)) throw IoError("cache " + a.cache + " does not exist");
    cache.emplace(fs::path(a.cache));
  } else if (provider_of(variant)) {
    throw ConfigError("variant " + a.variant + " needs --cache");
  } else {
    cache.emplace();
  }
  std::size_t unknown = 0;
  const auto data = build_dataset(tweets, vocab, variant, parse_concat_strategy(a.strategy), taxonomies, *cache,
                                  &unknown);
  if (!a.vocab_out.empty()) vocab.save_jsonl(a.vocab_out);
  std::ofstream file(a.out);
  if (!file) throw IoError("cannot write " + a.out);
  for (std::size_t i = 0; i < data.size(); ++i) {
    json line{{"id", tweets[i].id}, {"ids", data[i].features.ids}, {"label", data[i].label}};
    if (!data[i].features.weights.empty()) line["weights"] = data[i].features.weights;
    file << line.dump() << "\n";
  }
  out << "encoded " << data.size() << " tweets, length " << (data.empty() ? 0 : data.front().features.size())
      << ", vocabulary " << vocab.size() << ", unknown categories " << unknown << "\n";
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string corpus, cache, embeddings = "random", model = "cnn", variant = "text_only", strategy = "literal", out;
  std::vector<std::string> taxonomy;
  std::size_t dim = 200, epochs = 20, batch_size = 32, min_count = 1;
  double lr = 0.001;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a, std::ostream& out) {
  ExperimentConfig config;
  config.model = nn::parse_model_kind(a.model);
  config.embedding = a.embeddings;
  config.dim = a.dim;
  config.variant = parse_variant(a.variant);
  config.epochs = a.epochs;
  config.batch_size = a.batch_size;
  config.strategy = parse_concat_strategy(a.strategy);
  config.adam.lr = a.lr;
  config.validate();

  const auto tweets = load_labeled(a.corpus);
  const auto vocab = Vocabulary::build(token_lists(tweets), a.min_count);
  TaxonomyPaths paths;
  paths.apply(a.taxonomy);
  const auto taxonomies = paths.load();
  std::optional<GeoCache> cache;
  if (!a.cache.empty()) {
    if (!fs::exists(a.cache)) throw IoError("cache " + a.cache + " does not exist");
    cache.emplace(fs::path(a.cache));
  } else {
    cache.emplace();
  }
  const auto data = build_dataset(tweets, vocab, config.variant, config.strategy, taxonomies, *cache);
  std::optional<EmbeddingTable> table;
  if (a.embeddings != "random") table = load_embeddings(a.embeddings);
  const auto tax_size = taxonomies.size_for(config.variant);
  const auto embedding = build_embedding_matrix(vocab, tax_size, table ? &*table : nullptr, a.dim,
                                                derive_seed(a.seed, SeedStream::embedding));
  const auto trained = train(config.train_options(), embedding, data, a.seed);
  for (std::size_t e = 0; e < trained.history.size(); ++e) {
    out << "epoch " << e + 1 << " loss " << std::fixed << std::setprecision(4) << trained.history[e].loss
        << " train_acc " << trained.history[e].train_accuracy << "\n";
  }
  json metadata{{"vocabulary", vocab.digest()},
                {"vocabulary_size", vocab.size()},
                {"variant", to_string(config.variant)},
                {"strategy", to_string(config.strategy)},
                {"embedding_source", embedding.source},
                {"seed", a.seed}};
  if (const auto p = provider_of(config.variant)) metadata["taxonomy"] = taxonomies.get(*p).digest();
  nn::save_checkpoint(a.out, trained.model, metadata);
  out << "saved checkpoint " << a.out << "\n";
  return 0;
}

// ---- run ------------------------------------------------------------------

struct RunArgs {
  std::string config;
  unsigned threads = 0;
};

int run_grid_command(const RunArgs& a, std::ostream& out) {
  auto config = GridConfig::load(a.config);
  if (a.threads > 0) config.threads = a.threads;
  const auto outcome = run_grid(config, [&](const RunResult& r) {
    out << r.model << " " << r.embedding << " " << r.dim << " " << to_string(r.variant) << ": mean "
        << format_cell(r.mean) << " sd " << std::fixed << std::setprecision(4) << r.stddev * 100 << " ("
        << std::setprecision(1) << r.wall_seconds << "s)" << (r.partial ? " aborted: " + r.error : "") << "\n";
  });
  out << "wrote " << outcome.results_log.string() << ", " << outcome.csv_table.string() << ", "
      << outcome.markdown_table.string() << "\n";
  const bool partial = std::any_of(outcome.results.begin(), outcome.results.end(), [](const auto& r) { return r.partial; });
  return partial ? static_cast<int>(ErrorClass::numeric) : 0;
}

// ---- table ----------------------------------------------------------------

struct TableArgs {
  std::string results, format = "markdown", out;
};

int run_table(const TableArgs& a, std::ostream& out) {
  const auto results = load_results(a.results);
  const auto text = emit_table(results, parse_table_format(a.format));
  if (a.out.empty()) {
    out << text;
  } else {
    std::ofstream file(a.out);
    if (!file) throw IoError("cannot write " + a.out);
    file << text;
  }
  return 0;
}

// ---- gradcheck ------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 0;
  double step = 1e-5;
  std::size_t samples = 200;
  double tolerance = nn::kGradCheckTolerance;
};

int run_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  bool ok = true;
  out << std::scientific << std::setprecision(3);
  for (const auto& check : nn::check_layers(a.seed, std::nullopt, a.step)) {
    const bool pass = check.max_rel_error < a.tolerance;
    ok = ok && pass;
    out << "layer " << std::left << std::setw(10) << nn::to_string(check.layer) << std::right << " max_rel_error "
        << check.max_rel_error << (pass ? "  ok" : "  FAIL") << "\n";
  }
  constexpr std::size_t kRows = 40;
  for (const auto kind : {nn::ModelKind::cnn, nn::ModelKind::bilstm}) {
    nn::GradCheckOptions options;
    options.step = a.step;
    options.min_samples = a.samples;
    options.seed = a.seed;
    const auto input = nn::random_input(kSequenceLength + taxonomy_size(Provider::geonames), kRows, a.seed);
    const auto report = nn::grad_check(nn::tiny_spec(kind), input, 1, kRows, options);
    const bool pass = report.passed(a.tolerance);
    ok = ok && pass;
    out << "model " << std::left << std::setw(10) << nn::to_string(kind) << std::right << " max_rel_error "
        << report.max_rel_error << " over " << report.sampled << " parameters" << (pass ? "  ok" : "  FAIL") << "\n";
    for (const auto& [layer, e] : report.per_layer) out << "  " << std::left << std::setw(10) << layer << std::right << " " << e << "\n";
  }
  return ok ? 0 : static_cast<int>(ErrorClass::numeric);
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Geo-tagged tweet sentiment pipeline", "geosent"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  std::function<int()> action;

  IngestArgs ingest;
  auto* cmd = app.add_subcommand("ingest", "Load, clean and lexicon-label a raw corpus");
  cmd->add_option("--corpus", ingest.corpus, "Raw corpus file")->required();
  cmd->add_option("--format", ingest.format, "Corpus format: jsonl or tsv");
  cmd->add_option("--lexicon", ingest.lexicon, "Sentiment lexicon");
  cmd->add_option("--out", ingest.out, "Labeled JSONL output")->required();
  cmd->callback([&] { action = [&] { return run_ingest(ingest, out); }; });

  LabelArgs label;
  cmd = app.add_subcommand("label", "Optionally re-score, then draw a class-balanced sample");
  cmd->add_option("--corpus", label.corpus, "Labeled JSONL input")->required();
  cmd->add_option("--lexicon", label.lexicon, "Re-score with this lexicon (empty keeps existing labels)");
  cmd->add_option("--per-class", label.per_class, "Tweets per class; 0 keeps everything");
  cmd->add_option("--seed", label.seed, "Sampling seed");
  cmd->add_option("--out", label.out, "Labeled JSONL output")->required();
  cmd->callback([&] { action = [&] { return run_label(label, out); }; });

  GeofetchArgs geofetch;
  cmd = app.add_subcommand("geofetch", "Fill the nearby-category cache for every tweet (resumable)");
  cmd->add_option("--corpus", geofetch.corpus, "Labeled JSONL input")->required();
  cmd->add_option("--cache", geofetch.cache, "Append-only cache file")->required();
  cmd->add_option("--provider", geofetch.provider, "geonames, places or all");
  cmd->add_option("--radius", geofetch.radius, "Search radius in metres");
  cmd->add_flag("--offline", geofetch.offline, "Never touch the network; report cache misses");
  cmd->add_option("--geonames-url", geofetch.fetcher.geonames.base_url, "Geonames base URL (user from GEONAMES_USER)");
  cmd->add_option("--geonames-rps", geofetch.fetcher.geonames.requests_per_second, "Geonames request rate limit");
  cmd->add_option("--places-url", geofetch.fetcher.places.base_url, "Places base URL (key from PLACES_API_KEY)");
  cmd->add_option("--places-rps", geofetch.fetcher.places.requests_per_second, "Places request rate limit");
  cmd->add_option("--attempts", geofetch.fetcher.attempts, "Attempts per request (429/5xx/transport retried)");
  cmd->add_option("--progress-every", geofetch.progress_every, "Progress line interval")->check(CLI::PositiveNumber);
  cmd->callback([&] { action = [&] { return run_geofetch(geofetch, out, err); }; });

  EncodeArgs encode;
  cmd = app.add_subcommand("encode", "Build the vocabulary and write padded, concatenated feature vectors");
  cmd->add_option("--corpus", encode.corpus, "Labeled JSONL input")->required();
  cmd->add_option("--cache", encode.cache, "Nearby-category cache (required for location variants)");
  cmd->add_option("--variant", encode.variant,
                  "text_only, onehot_geonames, onehot_places, count_geonames or count_places");
  cmd->add_option("--strategy", encode.strategy, "Concatenation: text_only, literal or reserved");
  add_taxonomy_option(cmd, encode.taxonomy);
  cmd->add_option("--min-count", encode.min_count, "Minimum token frequency for the vocabulary");
  cmd->add_option("--vocab-out", encode.vocab_out, "Vocabulary JSONL output (optional)");
  cmd->add_option("--out", encode.out, "Feature JSONL output")->required();
  cmd->callback([&] { action = [&] { return run_encode(encode, out); }; });

  TrainArgs trainer;
  cmd = app.add_subcommand("train", "Train one model on a whole corpus and save a checkpoint");
  cmd->add_option("--corpus", trainer.corpus, "Labeled JSONL input")->required();
  cmd->add_option("--cache", trainer.cache, "Nearby-category cache (required for location variants)");
  cmd->add_option("--embeddings", trainer.embeddings, "random or a text embedding file");
  cmd->add_option("--model", trainer.model, "cnn or bilstm");
  cmd->add_option("--dim", trainer.dim, "Embedding dimension (200 or 300)");
  cmd->add_option("--variant", trainer.variant, "Dataset variant");
  cmd->add_option("--strategy", trainer.strategy, "Concatenation strategy");
  add_taxonomy_option(cmd, trainer.taxonomy);
  cmd->add_option("--epochs", trainer.epochs, "Training epochs");
  cmd->add_option("--batch-size", trainer.batch_size, "Mini-batch size");
  cmd->add_option("--lr", trainer.lr, "Adam learning rate");
  cmd->add_option("--min-count", trainer.min_count, "Minimum token frequency for the vocabulary");
  cmd->add_option("--seed", trainer.seed, "Seed for embedding init, model init and shuffling");
  cmd->add_option("--out", trainer.out, "Checkpoint path")->required();
  cmd->callback([&] { action = [&] { return run_train(trainer, out); }; });

  RunArgs run;
  cmd = app.add_subcommand("run", "Run an experiment grid and write results.jsonl, table.csv and table.md");
  cmd->add_option("--config", run.config, "Grid JSON file")->required();
  cmd->add_option("--threads", run.threads, "Concurrent repeats; 0 uses the config value");
  cmd->callback([&] { action = [&] { return run_grid_command(run, out); }; });

  TableArgs table;
  cmd = app.add_subcommand("table", "Render a results log as a table");
  cmd->add_option("--results", table.results, "results.jsonl written by run")->required();
  cmd->add_option("--format", table.format, "csv or markdown");
  cmd->add_option("--out", table.out, "Output file (stdout when empty)");
  cmd->callback([&] { action = [&] { return run_table(table, out); }; });

  GradcheckArgs gradcheck;
  cmd = app.add_subcommand("gradcheck", "Finite-difference check of every layer and both model kinds");
  cmd->add_option("--seed", gradcheck.seed, "Seed for parameters and inputs");
  cmd->add_option("--step", gradcheck.step, "Central-difference step");
  cmd->add_option("--samples", gradcheck.samples, "Minimum parameters sampled per model");
  cmd->add_option("--tolerance", gradcheck.tolerance, "Pass threshold on max relative error");
  cmd->callback([&] { action = [&] { return run_gradcheck(gradcheck, out); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kUsageExit;
  }

  try {
    return action();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON: " << e.what() << "\n";
    return static_cast<int>(ErrorClass::io);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace geosent::cli
