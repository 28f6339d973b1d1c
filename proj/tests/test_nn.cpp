#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "geosent/error.hpp"
#include "geosent/nn/adam.hpp"
#include "geosent/nn/gradcheck.hpp"
#include "geosent/nn/layers.hpp"
#include "geosent/nn/lstm.hpp"
#include "geosent/nn/model.hpp"

using namespace geosent;
using namespace geosent::nn;

using LD = long double;
using M = Matrix<LD>;
using R = RowVector<LD>;

namespace {

M random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  M m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Test-side oracle: central differences of a scalar objective over every
// entry of `x`, compared with the analytic gradient entry by entry.
template <typename Mat>
double max_fd_error(Mat& x, const Mat& analytic, const std::function<LD()>& objective, LD h = 1e-6L) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const LD saved = x.data()[i];
    x.data()[i] = saved + h;
    const LD up = objective();
    x.data()[i] = saved - h;
    const LD down = objective();
    x.data()[i] = saved;
    const LD numeric = (up - down) / (2 * h);
    const LD a = analytic.data()[i];
    const LD denom = std::max({std::fabs(a), std::fabs(numeric), LD(1e-6)});
    worst = std::max(worst, static_cast<double>(std::fabs(a - numeric) / denom));
  }
  return worst;
}

// Reference convolution written loop by loop from the definition.
M naive_conv(const M& x, const M& W, const R& b, Eigen::Index k) {
  const auto c_in = x.cols();
  const auto c_out = W.cols();
  M out(x.rows() - k + 1, c_out);
  for (Eigen::Index t = 0; t < out.rows(); ++t) {
    for (Eigen::Index o = 0; o < c_out; ++o) {
      LD s = b(o);
      for (Eigen::Index j = 0; j < k; ++j)
        for (Eigen::Index c = 0; c < c_in; ++c) s += x(t + j, c) * W(j * c_in + c, o);
      out(t, o) = std::max(s, LD(0));
    }
  }
  return out;
}

FeatureVector ids(std::vector<int> v) {
  FeatureVector f;
  f.ids = std::move(v);
  return f;
}

}  // namespace

TEST_CASE("embedding lookup") {
  std::mt19937_64 rng(1);
  M table = random_matrix(4, 3, rng);
  table.row(0).setZero();
  CHECK(embedding_forward(ids({0, 0, 0}), table).isZero());
  CHECK(embedding_forward(ids({2}), table).row(0) == table.row(2));
  CHECK_THROWS_AS(embedding_forward(ids({4}), table), IndexError);
  CHECK_THROWS_AS(embedding_forward(ids({-1}), table), IndexError);
}

TEST_CASE("embedding gradient matches finite differences") {
  std::mt19937_64 rng(2);
  M table = random_matrix(4, 3, rng);
  auto input = ids({3, 1});
  input.weights = {1.0f, 2.5f};
  const M up = random_matrix(2, 3, rng);
  M grad = M::Zero(4, 3);
  embedding_backward(input, up, grad);
  const auto err = max_fd_error(table, grad, [&] { return (embedding_forward(input, table).array() * up.array()).sum(); });
  CHECK(err < 1e-4);
  CHECK(grad.row(0).isZero());
  CHECK(grad.row(2).isZero());
}

TEST_CASE("conv1d examples") {
  CHECK(conv1d(M(M::Zero(5, 2)), M(M::Random(6, 3)), R(R::Zero(3))).isZero());
  M x(2, 1);
  x << 1, 3;
  M W(1, 1);
  W << 2;
  M expected(2, 1);
  expected << 2, 6;
  CHECK(conv1d(x, W, R(R::Zero(1))) == expected);
  CHECK_THROWS_AS(conv1d(M(M::Zero(2, 1)), M(M::Zero(3, 1)), R(R::Zero(1))), ShapeError);
}

TEST_CASE("conv1d agrees with a naive reference") {
  std::mt19937_64 rng(3);
  for (Eigen::Index k : {1, 2, 3, 5}) {
    const M x = random_matrix(11, 4, rng);
    const M W = random_matrix(k * 4, 6, rng);
    const R b = random_matrix(1, 6, rng);
    CHECK((conv1d(x, W, b) - naive_conv(x, W, b, k)).cwiseAbs().maxCoeff() < 1e-15L);
  }
}

TEST_CASE("conv1d gradients match finite differences") {
  std::mt19937_64 rng(4);
  M x = random_matrix(10, 4, rng);
  M W = random_matrix(12, 5, rng);
  M b = random_matrix(1, 5, rng);
  const M up = random_matrix(8, 5, rng);
  auto objective = [&] { return (conv1d(x, W, R(b)).array() * up.array()).sum(); };
  const auto g = conv1d_backward(x, W, conv1d(x, W, R(b)), up);
  CHECK(max_fd_error(x, g.dx, objective) < 1e-4);
  CHECK(max_fd_error(W, g.dW, objective) < 1e-4);
  CHECK(max_fd_error(b, M(g.db), objective) < 1e-4);
}

TEST_CASE("maxpool examples") {
  M x(4, 1);
  x << 1, 5, 3, 2;
  M expected(2, 1);
  expected << 5, 3;
  CHECK(maxpool1d(x, 2).out == expected);
  // remainder dropped
  CHECK(maxpool1d(M(M::Ones(5, 2)), 2).out.rows() == 2);
  // ties route to the first element of each window
  const M c = M::Constant(6, 2, 0.7L);
  const auto p = maxpool1d(c, 3);
  CHECK(p.out == M::Constant(2, 2, 0.7L));
  const M g = maxpool1d_backward(M(M::Ones(2, 2)), p.argmax, 6);
  M want = M::Zero(6, 2);
  want.row(0).setOnes();
  want.row(3).setOnes();
  CHECK(g == want);
  CHECK_THROWS_AS(maxpool1d(M(M::Ones(1, 1)), 2), ShapeError);
}

TEST_CASE("maxpool gradient matches finite differences") {
  std::mt19937_64 rng(5);
  M x = random_matrix(12, 3, rng);
  const M up = random_matrix(6, 3, rng);
  const auto p = maxpool1d(x, 2);
  const M g = maxpool1d_backward(up, p.argmax, 12);
  CHECK(max_fd_error(x, g, [&] { return (maxpool1d(x, 2).out.array() * up.array()).sum(); }) < 1e-4);
}

TEST_CASE("dense examples") {
  const R x = (R(3) << 1, -2, 3).finished();
  CHECK(dense(x, M(M::Identity(3, 3)), R(R::Zero(3)), Activation::none) == x);
  const R half = dense(R(R::Zero(4)), M(M::Random(4, 2)), R(R::Zero(2)), Activation::sigmoid);
  CHECK(half(0) == 0.5L);
  CHECK(half(1) == 0.5L);
  CHECK(dense(x, M(M::Identity(3, 3)), R(R::Zero(3)), Activation::relu) == (R(3) << 1, 0, 3).finished());
  CHECK_THROWS_AS(dense(x, M(M::Zero(2, 2)), R(R::Zero(2)), Activation::none), ShapeError);
}

TEST_CASE("dense gradients match finite differences for every activation") {
  std::mt19937_64 rng(6);
  for (auto act : {Activation::none, Activation::relu, Activation::sigmoid}) {
    M x = random_matrix(1, 8, rng);
    M W = random_matrix(8, 4, rng);
    M b = random_matrix(1, 4, rng);
    const R up = random_matrix(1, 4, rng);
    auto objective = [&] { return dense(R(x), W, R(b), act).dot(up); };
    const auto g = dense_backward(R(x), W, dense(R(x), W, R(b), act), up, act);
    CHECK(max_fd_error(x, M(g.dx), objective) < 1e-4);
    CHECK(max_fd_error(W, g.dW, objective) < 1e-4);
    CHECK(max_fd_error(b, M(g.db), objective) < 1e-4);
  }
}

TEST_CASE("dropout modes") {
  std::mt19937_64 rng(7);
  const M x = random_matrix(5, 5, rng);
  CHECK(dropout(x, 0.0, Mode::train, 1).out == x);
  CHECK(dropout(x, 0.9, Mode::eval, 1).out == x);
  CHECK(dropout(x, 0.5, Mode::train, 3).mask == dropout(x, 0.5, Mode::train, 3).mask);
  CHECK_THROWS_AS(dropout(x, 1.0, Mode::train, 1), ConfigError);
  CHECK_THROWS_AS(dropout(x, -0.1, Mode::eval, 1), ConfigError);
}

TEST_CASE("dropout is unbiased over many masks") {
  const Matrix<double> x = Matrix<double>::Constant(20, 20, 2.0) + Matrix<double>::Identity(20, 20);
  Matrix<double> sum = Matrix<double>::Zero(20, 20);
  std::mt19937_64 rng(8);
  double kept = 0.0;
  constexpr int kMasks = 10000;
  for (int i = 0; i < kMasks; ++i) {
    const auto d = dropout(x, 0.5, Mode::train, rng);
    sum += d.out;
    kept += static_cast<double>((d.mask.array() > 0).count()) / static_cast<double>(x.size());
  }
  CHECK(kept / kMasks > 0.45);
  CHECK(kept / kMasks < 0.55);
  const Matrix<double> mean = sum / kMasks;
  CHECK(((mean - x).array().abs() / x.array()).maxCoeff() < 0.05);
}

TEST_CASE("dropout gradient with a fixed mask matches finite differences") {
  std::mt19937_64 rng(9);
  M x = random_matrix(3, 4, rng);
  const M up = random_matrix(3, 4, rng);
  const auto mask = dropout(x, 0.4, Mode::train, 11).mask;
  auto objective = [&] { return (x.cwiseProduct(mask).array() * up.array()).sum(); };
  CHECK(max_fd_error(x, dropout_backward(up, mask), objective) < 1e-4);
}

TEST_CASE("bilstm examples") {
  const LstmParams<LD> zero{M::Zero(4, 12), M::Zero(3, 12), R::Zero(12)};
  CHECK(bilstm(M(M::Zero(5, 4)), zero, zero).isZero());

  std::mt19937_64 rng(10);
  const LstmParams<LD> p{random_matrix(4, 12, rng), random_matrix(3, 12, rng), random_matrix(1, 12, rng)};
  const R out = bilstm(M(random_matrix(1, 4, rng)), p, p);
  CHECK(out.segment(0, 3) == out.segment(3, 3));

  const R longer = bilstm(M(random_matrix(4, 4, rng)), p, p);
  CHECK_FALSE(longer.segment(0, 3) == longer.segment(3, 3));
  CHECK_THROWS_AS(bilstm(M(M::Zero(5, 5)), p, p), ShapeError);
}

TEST_CASE("bilstm gradients match finite differences") {
  std::mt19937_64 rng(11);
  M x = random_matrix(5, 4, rng);
  LstmParams<LD> f{random_matrix(4, 12, rng, 0.5), random_matrix(3, 12, rng, 0.5), random_matrix(1, 12, rng, 0.5)};
  LstmParams<LD> b{random_matrix(4, 12, rng, 0.5), random_matrix(3, 12, rng, 0.5), random_matrix(1, 12, rng, 0.5)};
  const R up = random_matrix(1, 6, rng);
  auto objective = [&] { return bilstm(x, f, b).dot(up); };
  BiLstmTrace<LD> tr;
  bilstm(x, f, b, &tr);
  const auto g = bilstm_backward(x, f, b, tr, up);
  CHECK(max_fd_error(x, g.dx, objective) < 1e-4);
  CHECK(max_fd_error(f.Wx, g.forward.dWx, objective) < 1e-4);
  CHECK(max_fd_error(f.Wh, g.forward.dWh, objective) < 1e-4);
  M fb = f.b;
  CHECK(max_fd_error(fb, M(g.forward.db), [&] { f.b = fb; return objective(); }) < 1e-4);
  CHECK(max_fd_error(b.Wx, g.backward.dWx, objective) < 1e-4);
  CHECK(max_fd_error(b.Wh, g.backward.dWh, objective) < 1e-4);
}

TEST_CASE("binary cross-entropy values") {
  CHECK(std::fabs(bce_loss(0.5, 1) - std::log(2.0)) < 1e-12);
  CHECK(bce_loss(1.0 - kProbabilityClamp, 1) < 1e-6);
  CHECK(std::fabs(bce_loss(0.9, 0) - 2.302585) < 1e-6);
  CHECK(std::isfinite(bce_loss(0.0, 1)));
  CHECK(std::isfinite(bce_loss(1.0, 0)));
  for (double p : {0.1, 0.3, 0.77}) {
    for (int y : {0, 1}) {
      const double h = 1e-7;
      const double numeric = (bce_loss(p + h, y) - bce_loss(p - h, y)) / (2 * h);
      CHECK(bce_grad(p, y) == doctest::Approx(numeric).epsilon(1e-6));
      CHECK(bce_grad(p, y) == doctest::Approx((p - y) / (p * (1 - p))));
    }
  }
}

TEST_CASE("sigmoid") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(0.0f) == 0.5f);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(std::isfinite(sigmoid(-800.0)));
}

TEST_CASE("adam analytic steps") {
  ParameterSet<double> params{{"w", Matrix<double>::Constant(2, 2, 0.3)}};
  AdamState<double> state;
  adam_step(params, {{"w", Matrix<double>::Zero(2, 2)}}, state);
  CHECK(params["w"] == Matrix<double>::Constant(2, 2, 0.3));

  ParameterSet<double> scalar{{"theta", Matrix<double>::Constant(1, 1, 1.0)}};
  AdamState<double> fresh;
  adam_step(scalar, {{"theta", Matrix<double>::Constant(1, 1, 1.0)}}, fresh);
  // t=1: m_hat = g, v_hat = g^2, so the step is lr * 1 / (1 + eps)
  CHECK(std::fabs(scalar["theta"](0, 0) - (1.0 - 0.001 / (1.0 + 1e-8))) < 1e-12);
  CHECK(std::fabs(scalar["theta"](0, 0) - 0.999) < 1e-4);
  CHECK(fresh.step == 1);

  ParameterSet<double> bad{{"w", Matrix<double>::Zero(1, 1)}};
  CHECK_THROWS_AS(adam_step(bad, {{"w", Matrix<double>::Constant(1, 1, NAN)}}, fresh), NumericError);
  CHECK_THROWS_AS(adam_step(bad, {{"w", Matrix<double>::Zero(2, 1)}}, fresh), ShapeError);
}

TEST_CASE("adam trajectories are bit identical for identical gradient streams") {
  std::mt19937_64 ra(1), rb(1);
  ParameterSet<float> a{{"w", Matrix<float>::Ones(3, 3)}}, b = a;
  AdamState<float> sa, sb;
  for (int i = 0; i < 20; ++i) {
    Matrix<float> ga(3, 3), gb(3, 3);
    std::normal_distribution<float> na, nb;
    for (int k = 0; k < 9; ++k) ga.data()[k] = na(ra);
    for (int k = 0; k < 9; ++k) gb.data()[k] = nb(rb);
    adam_step(a, {{"w", ga}}, sa);
    adam_step(b, {{"w", gb}}, sb);
  }
  CHECK(a["w"] == b["w"]);
}

TEST_CASE("model spec validation and json") {
  ModelSpec s;
  CHECK(s.cnn_output_length(76) == 7);
  CHECK(s.cnn_output_length(125) == 13);
  CHECK(s.cnn_output_length(25) == 1);
  CHECK_THROWS_AS(s.cnn_output_length(10), ShapeError);
  const auto back = ModelSpec::from_json(s.to_json());
  CHECK(back.to_json() == s.to_json());
  CHECK_FALSE(s.to_json().contains("lstm_units"));
  auto j = s.to_json();
  j["lstm_units"] = 5;
  CHECK_THROWS_AS(ModelSpec::from_json(j), ConfigError);
  ModelSpec l;
  l.kind = ModelKind::bilstm;
  CHECK_FALSE(l.to_json().contains("conv_filters"));
  CHECK(ModelSpec::from_json(l.to_json()).lstm_units == 64);
}

TEST_CASE("cnn shape chain ends in a probability") {
  std::mt19937_64 rng(12);
  Matrix<float> emb = random_matrix(50, 200, rng, 0.05).cast<float>();
  emb.row(0).setZero();
  const Model<float> m(ModelSpec{}, 76, emb, 3);
  CHECK(m.parameters().at("dense1.W").rows() == 7 * 64);
  const auto input = random_input(76, 50, 4);
  const float p = m.predict(input);
  CHECK(p > 0.0f);
  CHECK(p < 1.0f);
  CHECK(m.predict(input) == p);  // eval mode is deterministic
}

TEST_CASE("full model gradients match a test-side oracle") {
  for (auto kind : {ModelKind::cnn, ModelKind::bilstm}) {
    std::mt19937_64 rng(13);
    M emb = random_matrix(20, 6, rng, 0.5);
    emb.row(0).setZero();
    Model<LD> model(tiny_spec(kind), 25, emb, 5);
    const auto input = random_input(25, 20, 6);
    auto grads = model.zero_gradients();
    std::mt19937_64 unused(0);
    model.accumulate(input, 1, Mode::eval, unused, grads);
    for (auto& [name, value] : model.parameters()) {
      if (name == "embedding") continue;  // row 0 is pinned; covered by the lookup test
      CHECK_MESSAGE(max_fd_error(value, grads.at(name), [&] { return model.loss(input, 1); }) < 1e-4, name);
    }
  }
}

TEST_CASE("pad row never receives gradient") {
  std::mt19937_64 rng(14);
  M emb = random_matrix(10, 6, rng, 0.5);
  emb.row(0).setZero();
  Model<LD> model(tiny_spec(ModelKind::cnn), 25, emb, 5);
  auto grads = model.zero_gradients();
  std::mt19937_64 r(0);
  model.accumulate(random_input(25, 10, 1), 0, Mode::train, r, grads);
  CHECK(grads.at("embedding").row(0).isZero());
}

TEST_CASE("frozen embedding has no gradient entry") {
  auto spec = tiny_spec(ModelKind::bilstm);
  spec.freeze_embedding = true;
  Model<float> model(spec, 25, Matrix<float>::Zero(10, 6), 1);
  CHECK(model.zero_gradients().count("embedding") == 0);
}

TEST_CASE("single example loss falls monotonically under adam") {
  for (auto kind : {ModelKind::cnn, ModelKind::bilstm}) {
    std::mt19937_64 rng(15);
    Matrix<double> emb = random_matrix(20, 6, rng, 0.5).cast<double>();
    emb.row(0).setZero();
    auto spec = tiny_spec(kind);
    spec.dropout_p = 0.0;
    Model<double> model(spec, 25, emb, 2);
    const auto input = random_input(25, 20, 3);
    AdamState<double> state;
    const double initial = model.loss(input, 1);
    double previous = initial;
    bool monotone = true;
    for (int step = 0; step < 50; ++step) {
      auto grads = model.zero_gradients();
      std::mt19937_64 r(0);
      model.accumulate(input, 1, Mode::eval, r, grads);
      adam_step(model.parameters(), grads, state);
      const double now = model.loss(input, 1);
      monotone = monotone && now < previous;
      previous = now;
    }
    CHECK(monotone);
    CHECK(previous < 0.9 * initial);
  }
}

TEST_CASE("library grad_check passes for both kinds") {
  for (auto kind : {ModelKind::cnn, ModelKind::bilstm}) {
    const auto report = grad_check(tiny_spec(kind), random_input(76, 40, 1), 1, 40);
    CHECK(report.sampled >= 200);
    CHECK(report.passed());
    CHECK(report.per_layer.count("embedding") == 1);
  }
}

TEST_CASE("per-layer checks pass and every corrupted backward fails") {
  for (const auto& c : check_layers(0)) CHECK_MESSAGE(c.max_rel_error < kGradCheckTolerance, to_string(c.layer));
  for (auto layer : {LayerKind::embedding, LayerKind::conv1d, LayerKind::maxpool1d, LayerKind::dense,
                     LayerKind::dropout, LayerKind::bilstm}) {
    for (const auto& c : check_layers(0, layer)) {
      if (c.layer == layer) CHECK_MESSAGE(c.max_rel_error > 1e-2, to_string(layer));
    }
  }
  GradCheckOptions corrupt;
  corrupt.corrupt = LayerKind::conv1d;
  CHECK(grad_check(tiny_spec(ModelKind::cnn), random_input(76, 40, 1), 1, 40, corrupt).max_rel_error > 1e-2);
}

TEST_CASE("relative error floor") {
  CHECK(relative_error(0.0L, 0.0L) == 0.0);
  CHECK(relative_error(1e-9L, 0.0L) == doctest::Approx(1e-3));
  CHECK(relative_error(2.0L, 1.0L) == doctest::Approx(0.5));
}
