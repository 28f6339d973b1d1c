#include <doctest.h>

#include <sstream>

#include "geosent/cli.hpp"
#include "geosent/nn/checkpoint.hpp"
#include "support.hpp"

namespace ts = testing_support;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = geosent::cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("usage errors exit 64") {
  CHECK(run({}).code == geosent::cli::kUsageExit);
  CHECK(run({"frobnicate"}).code == 64);
  CHECK(run({"table", "--results", "x", "--bogus"}).code == 64);
  CHECK(run({"ingest", "--out", "x"}).code == 64);  // missing --corpus
  CHECK(run({"geofetch", "--corpus", "a", "--cache", "b", "--progress-every", "0"}).code == 64);
}

TEST_CASE("help lists flags with defaults") {
  const auto r = run({"train", "--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("--epochs") != std::string::npos);
  CHECK(r.out.find("--batch-size") != std::string::npos);
  CHECK(r.out.find("20") != std::string::npos);
  const auto top = run({"--help"});
  CHECK(top.code == 0);
  for (const char* sub : {"ingest", "label", "geofetch", "encode", "train", "run", "table", "gradcheck"})
    CHECK(top.out.find(sub) != std::string::npos);
}

TEST_CASE("error classes map to exit codes") {
  ts::TempDir dir("cli_err");
  CHECK(run({"ingest", "--corpus", (dir.path() / "missing.jsonl").string(), "--out", (dir.path() / "o").string()})
            .code == 2);
  const auto bad_variant = run({"encode", "--corpus", ts::fixture("signal40.jsonl").string(), "--variant", "nope",
                                "--out", (dir.path() / "o").string()});
  CHECK(bad_variant.code == 3);
  CHECK(bad_variant.err.find("error:") == 0);
  const auto missing_cache = run({"encode", "--corpus", ts::fixture("signal40.jsonl").string(), "--variant",
                                  "count_places", "--out", (dir.path() / "o").string()});
  CHECK(missing_cache.code == 3);
  ts::write_file(dir.path() / "bad.json", "{\"grid\": [");
  CHECK(run({"run", "--config", (dir.path() / "bad.json").string()}).code == 3);
}

TEST_CASE("offline geofetch reports misses against a cold cache") {
  ts::TempDir dir("cli_geo");
  const auto cache = (dir.path() / "cache.jsonl").string();
  const auto r = run({"geofetch", "--corpus", ts::fixture("signal40.jsonl").string(), "--cache", cache, "--offline"});
  CHECK(r.code == 4);
  CHECK(r.err.find("cache miss report: 80 lookups not cached") != std::string::npos);
  CHECK(count_lines(r.err) == 81);

  const auto warm = run({"geofetch", "--corpus", ts::fixture("signal40.jsonl").string(), "--cache",
                         ts::fixture("signal40_cache.jsonl").string(), "--offline"});
  CHECK(warm.code == 0);
  CHECK(warm.err.empty());
  CHECK(warm.out.find("80 -> 80 entries") != std::string::npos);
}

TEST_CASE("gradcheck subcommand passes") {
  const auto r = run({"gradcheck"});
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("layer conv1d") != std::string::npos);
  CHECK(r.out.find("model bilstm") != std::string::npos);
}

TEST_CASE("ingest, label, encode, train pipeline") {
  ts::TempDir dir("cli_pipe");
  const auto labeled = (dir.path() / "labeled.jsonl").string();
  auto r = run({"ingest", "--corpus", ts::fixture("signal40_raw.jsonl").string(), "--out", labeled});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("read 40 tweets") != std::string::npos);
  // lexicon labels follow text polarity, so flipped tweets change class
  CHECK(r.out.find("wrote 40 labeled tweets") != std::string::npos);

  const auto sample = (dir.path() / "sample.jsonl").string();
  r = run({"label", "--corpus", labeled, "--per-class", "5", "--seed", "3", "--out", sample});
  REQUIRE(r.code == 0);
  CHECK(count_lines(ts::read_file(sample)) == 10);
  CHECK(run({"label", "--corpus", labeled, "--per-class", "50", "--out", sample}).code == 3);

  const auto encoded = (dir.path() / "encoded.jsonl").string();
  const auto vocab = (dir.path() / "vocab.jsonl").string();
  r = run({"encode", "--corpus", labeled, "--cache", ts::fixture("signal40_cache.jsonl").string(), "--variant",
           "count_places", "--strategy", "reserved", "--vocab-out", vocab, "--out", encoded});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("encoded 40 tweets, length 125") != std::string::npos);
  const auto first = nlohmann::json::parse(ts::read_file(encoded).substr(0, ts::read_file(encoded).find('\n')));
  CHECK(first["ids"].size() == 125);
  CHECK(first.contains("label"));
  CHECK(count_lines(ts::read_file(vocab)) > 2);

  const auto ckpt = (dir.path() / "model.ckpt").string();
  r = run({"train", "--corpus", labeled, "--cache", ts::fixture("signal40_cache.jsonl").string(), "--model", "cnn",
           "--variant", "count_geonames", "--epochs", "2", "--out", ckpt});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("epoch 2 loss") != std::string::npos);
  const auto loaded = geosent::nn::load_checkpoint(ckpt);
  CHECK(loaded.model.input_length() == 76);
  CHECK(loaded.metadata["variant"] == "count_geonames");
  CHECK(loaded.metadata.contains("vocabulary"));
}

TEST_CASE("run writes results and tables reproducibly") {
  ts::TempDir dir("cli_run");
  const nlohmann::json config{
      {"corpus", ts::fixture("signal40.jsonl").string()},
      {"cache", ts::fixture("signal40_cache.jsonl").string()},
      {"repeats", 2},
      {"epochs", 2},
      {"output_dir", "out"},
      {"grid", {{{"model", "cnn"}, {"dim", 200}, {"variants", {"text_only", "count_places"}}},
                {{"model", "bilstm"}, {"dim", 200}, {"variants", {"onehot_geonames"}}}}}};
  const auto path = dir.path() / "grid.json";
  ts::write_file(path, config.dump());
  auto r = run({"run", "--config", path.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("cnn random 200 count_places: mean") != std::string::npos);
  const auto out_dir = dir.path() / "out";
  CHECK(count_lines(ts::read_file(out_dir / "results.jsonl")) == 3);
  const auto md = ts::read_file(out_dir / "table.md");
  const auto csv = ts::read_file(out_dir / "table.csv");
  CHECK(count_lines(md) == 4);
  CHECK(count_lines(csv) == 3);

  r = run({"run", "--config", path.string(), "--threads", "2"});
  REQUIRE(r.code == 0);
  CHECK(ts::read_file(out_dir / "table.md") == md);
  CHECK(ts::read_file(out_dir / "table.csv") == csv);

  const auto rendered = run({"table", "--results", (out_dir / "results.jsonl").string(), "--format", "csv"});
  CHECK(rendered.code == 0);
  CHECK(rendered.out == csv);
  CHECK(run({"table", "--results", (out_dir / "results.jsonl").string(), "--format", "html"}).code == 3);
}
