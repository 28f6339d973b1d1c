#include <doctest.h>

#include <sstream>

#include "geosent/error.hpp"
#include "geosent/nn/checkpoint.hpp"
#include "geosent/nn/gradcheck.hpp"
#include "support.hpp"

using namespace geosent;

TEST_CASE("checkpoint round-trip preserves parameters and predictions") {
  for (auto kind : {nn::ModelKind::cnn, nn::ModelKind::bilstm}) {
    nn::Matrix<float> emb = nn::Matrix<float>::Random(20, nn::tiny_spec(kind).embed_dim);
    emb.row(0).setZero();
    nn::Model<float> model(nn::tiny_spec(kind), 76, emb, 11);
    const nlohmann::json meta{{"vocabulary_digest", "abc"}, {"variant", "count_places"}};
    testing_support::TempDir dir("ckpt");
    const auto path = dir.path() / "m.ckpt";
    nn::save_checkpoint(path, model, meta);
    const auto back = nn::load_checkpoint(path);
    CHECK(back.metadata == meta);
    CHECK(back.model.parameters() == model.parameters());
    CHECK(back.model.input_length() == 76);
    const auto x = nn::random_input(76, 20, 3);
    CHECK(back.model.predict(x) == model.predict(x));
  }
}

TEST_CASE("corrupt checkpoints are rejected") {
  std::istringstream bad_magic(std::string("XXXX\x01\0\0\0", 8));
  CHECK_THROWS_AS(nn::read_checkpoint(bad_magic), FormatError);

  nn::Model<float> model(nn::tiny_spec(nn::ModelKind::cnn), 25, nn::Matrix<float>::Zero(5, 6), 1);
  std::ostringstream out;
  nn::write_checkpoint(out, model, nlohmann::json::object());
  const auto bytes = out.str();
  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(nn::read_checkpoint(truncated), FormatError);
  CHECK_THROWS_AS(nn::load_checkpoint("/nonexistent/ckpt"), IoError);
}
