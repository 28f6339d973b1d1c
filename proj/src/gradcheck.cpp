#include "geosent/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "geosent/nn/layers.hpp"
#include "geosent/nn/lstm.hpp"
#include "geosent/nn/model.hpp"

namespace geosent::nn {

namespace {

using LD = long double;
using MatLD = Matrix<LD>;
using RowLD = RowVector<LD>;

MatLD random_matrix(Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  MatLD m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = LD(dist(rng));
  return m;
}

/// Max relative error between `analytic` and central differences of
/// `objective` taken by perturbing every element of `param` in place.
template <typename Param>
double compare_all(Param& param, const MatLD& analytic, const std::function<LD()>& objective, double step) {
  double worst = 0.0;
  const LD h = LD(step);
  for (Eigen::Index i = 0; i < param.size(); ++i) {
    LD& v = param.data()[i];
    const LD saved = v;
    v = saved + h;
    const LD up = objective();
    v = saved - h;
    const LD down = objective();
    v = saved;
    worst = std::max(worst, relative_error(analytic.data()[i], (up - down) / (2 * h)));
  }
  return worst;
}

LD weighted_sum(const MatLD& out, const MatLD& weights) { return out.cwiseProduct(weights).sum(); }

}  // namespace

double relative_error(long double analytic, long double numeric) {
  const long double denom =
      std::max({std::fabs(analytic), std::fabs(numeric), static_cast<long double>(kRelativeErrorFloor)});
  return static_cast<double>(std::fabs(analytic - numeric) / denom);
}

// ---------------------------------------------------------------------------

std::vector<LayerCheck> check_layers(std::uint64_t seed, std::optional<LayerKind> corrupt, double step) {
  std::mt19937_64 rng(seed);
  std::vector<LayerCheck> out;
  const LD bad(1.5);
  auto is = [&](LayerKind k) { return corrupt && *corrupt == k; };

  {  // embedding: 4x3 table, L = 2
    MatLD table = random_matrix(4, 3, 1.0, rng);
    FeatureVector fv;
    fv.ids = {3, 1};
    fv.weights = {1.0f, 2.0f};
    const MatLD w = random_matrix(2, 3, 1.0, rng);
    MatLD grad = MatLD::Zero(4, 3);
    embedding_backward(fv, w, grad);
    if (is(LayerKind::embedding)) grad *= bad;
    auto f = [&] { return weighted_sum(embedding_forward(fv, table), w); };
    out.push_back({LayerKind::embedding, compare_all(table, grad, f, step)});
  }
  {  // conv1d: x 10x4, k = 3, 5 filters
    MatLD x = random_matrix(10, 4, 1.0, rng);
    MatLD W = random_matrix(12, 5, 0.5, rng);
    RowLD b = random_matrix(1, 5, 0.5, rng);
    const MatLD w = random_matrix(8, 5, 1.0, rng);
    const MatLD y = conv1d(x, W, b);
    auto g = conv1d_backward(x, W, y, w);
    if (is(LayerKind::conv1d)) g.dW *= bad;
    auto f = [&] { return weighted_sum(conv1d(x, W, b), w); };
    double e = compare_all(x, g.dx, f, step);
    e = std::max(e, compare_all(W, g.dW, f, step));
    e = std::max(e, compare_all(b, MatLD(g.db), f, step));
    out.push_back({LayerKind::conv1d, e});
  }
  {  // maxpool1d: x 12x3, width 2
    MatLD x = random_matrix(12, 3, 1.0, rng);
    const MatLD w = random_matrix(6, 3, 1.0, rng);
    auto pooled = maxpool1d(x, 2);
    auto argmax = pooled.argmax;
    if (is(LayerKind::maxpool1d)) {
      for (auto& a : argmax) a = (a / 2) * 2 + 1;
    }
    const MatLD dx = maxpool1d_backward(w, argmax, 12);
    auto f = [&] { return weighted_sum(maxpool1d(x, 2).out, w); };
    out.push_back({LayerKind::maxpool1d, compare_all(x, dx, f, step)});
  }
  {  // dense: 8 -> 4 under every activation
    double e = 0.0;
    for (auto act : {Activation::none, Activation::relu, Activation::sigmoid}) {
      RowLD x = random_matrix(1, 8, 1.0, rng);
      MatLD W = random_matrix(8, 4, 0.7, rng);
      RowLD b = random_matrix(1, 4, 0.5, rng);
      const MatLD w = random_matrix(1, 4, 1.0, rng);
      const RowLD y = dense(x, W, b, act);
      auto g = dense_backward(x, W, y, RowLD(w), act);
      if (is(LayerKind::dense)) g.dW *= bad;
      auto f = [&] { return weighted_sum(dense(x, W, b, act), w); };
      e = std::max(e, compare_all(x, MatLD(g.dx), f, step));
      e = std::max(e, compare_all(W, g.dW, f, step));
      e = std::max(e, compare_all(b, MatLD(g.db), f, step));
    }
    out.push_back({LayerKind::dense, e});
  }
  {  // dropout: eval identity, plus train mode with a frozen mask
    double e = 0.0;
    for (auto mode : {Mode::eval, Mode::train}) {
      MatLD x = random_matrix(4, 6, 1.0, rng);
      const MatLD w = random_matrix(4, 6, 1.0, rng);
      const std::uint64_t mask_seed = rng();
      const auto dropped = dropout(x, 0.5, mode, mask_seed);
      MatLD dx = dropout_backward(w, dropped.mask);
      if (is(LayerKind::dropout)) dx *= bad;
      auto f = [&] { return weighted_sum(dropout(x, 0.5, mode, mask_seed).out, w); };
      e = std::max(e, compare_all(x, dx, f, step));
    }
    out.push_back({LayerKind::dropout, e});
  }
  {  // bilstm: L = 5, d = 4, u = 3
    MatLD x = random_matrix(5, 4, 1.0, rng);
    LstmParams<LD> fwd{random_matrix(4, 12, 0.6, rng), random_matrix(3, 12, 0.6, rng),
                       random_matrix(1, 12, 0.3, rng)};
    LstmParams<LD> bwd{random_matrix(4, 12, 0.6, rng), random_matrix(3, 12, 0.6, rng),
                       random_matrix(1, 12, 0.3, rng)};
    const MatLD w = random_matrix(1, 6, 1.0, rng);
    BiLstmTrace<LD> trace;
    bilstm(x, fwd, bwd, &trace);
    auto g = bilstm_backward(x, fwd, bwd, trace, RowLD(w));
    if (is(LayerKind::bilstm)) g.forward.dWh *= bad;
    auto f = [&] { return weighted_sum(MatLD(bilstm(x, fwd, bwd)), w); };
    double e = compare_all(x, g.dx, f, step);
    e = std::max(e, compare_all(fwd.Wx, g.forward.dWx, f, step));
    e = std::max(e, compare_all(fwd.Wh, g.forward.dWh, f, step));
    e = std::max(e, compare_all(fwd.b, MatLD(g.forward.db), f, step));
    e = std::max(e, compare_all(bwd.Wx, g.backward.dWx, f, step));
    e = std::max(e, compare_all(bwd.Wh, g.backward.dWh, f, step));
    e = std::max(e, compare_all(bwd.b, MatLD(g.backward.db), f, step));
    out.push_back({LayerKind::bilstm, e});
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string layer_of(const std::string& param) {
  if (param == "embedding") return to_string(LayerKind::embedding);
  if (param.rfind("conv", 0) == 0) return to_string(LayerKind::conv1d);
  if (param.rfind("lstm", 0) == 0) return to_string(LayerKind::bilstm);
  return to_string(LayerKind::dense);
}

}  // namespace

GradCheckReport grad_check(const ModelSpec& spec, const FeatureVector& input, int label,
                           std::size_t embedding_rows, const GradCheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  MatLD table = random_matrix(static_cast<Eigen::Index>(embedding_rows),
                              static_cast<Eigen::Index>(spec.embed_dim), 0.5, rng);
  table.row(Vocabulary::kPad).setZero();
  Model<LD> model(spec, input.size(), std::move(table), rng());
  model.set_backward_fault(options.corrupt);

  auto grads = model.zero_gradients();
  model.accumulate(input, label, Mode::eval, rng, grads);

  // Candidate flat indices per parameter; embedding rows limited to those
  // the input touches (PAD is held constant).
  std::map<std::string, std::vector<Eigen::Index>> candidates;
  for (const auto& [name, g] : grads) {
    auto& idx = candidates[name];
    if (name == "embedding") {
      std::vector<int> rows(input.ids.begin(), input.ids.end());
      std::sort(rows.begin(), rows.end());
      rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
      for (int r : rows) {
        if (r == Vocabulary::kPad) continue;
        for (Eigen::Index c = 0; c < g.cols(); ++c) idx.push_back(r * g.cols() + c);
      }
    } else {
      idx.resize(static_cast<std::size_t>(g.size()));
      std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    }
  }
  const std::size_t per_group =
      (options.min_samples + candidates.size() - 1) / std::max<std::size_t>(1, candidates.size());

  // Even share per group first, then top up from groups with spare entries
  // so at least min_samples parameters are probed whenever the model has them.
  std::map<std::string, std::size_t> takes;
  std::size_t total = 0;
  for (auto& [name, idx] : candidates) {
    std::shuffle(idx.begin(), idx.end(), rng);
    takes[name] = std::min(per_group, idx.size());
    total += takes[name];
  }
  for (auto& [name, idx] : candidates) {
    if (total >= options.min_samples) break;
    const std::size_t extra = std::min(options.min_samples - total, idx.size() - takes[name]);
    takes[name] += extra;
    total += extra;
  }

  GradCheckReport report;
  const LD h = LD(options.step);
  auto& params = model.parameters();
  for (auto& [name, idx] : candidates) {
    const std::size_t take = takes[name];
    auto& param = params.at(name);
    const auto& analytic = grads.at(name);
    double& layer_err = report.per_layer[layer_of(name)];
    for (std::size_t s = 0; s < take; ++s) {
      const Eigen::Index i = idx[s];
      LD& v = param.data()[i];
      const LD saved = v;
      v = saved + h;
      const LD up = model.loss(input, label);
      v = saved - h;
      const LD down = model.loss(input, label);
      v = saved;
      const double e = relative_error(analytic.data()[i], (up - down) / (2 * h));
      layer_err = std::max(layer_err, e);
      report.max_rel_error = std::max(report.max_rel_error, e);
      ++report.sampled;
    }
  }
  return report;
}

ModelSpec tiny_spec(ModelKind kind) {
  ModelSpec s;
  s.kind = kind;
  s.embed_dim = 6;
  s.conv_filters = {4, 4, 4};
  s.kernel = 3;
  s.pool = 2;
  s.dense_units = 5;
  s.dropout_p = 0.5;
  s.lstm_units = 3;
  return s;
}

FeatureVector random_input(std::size_t length, std::size_t rows, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> id(0, static_cast<int>(rows) - 1);
  FeatureVector fv;
  fv.ids.resize(length);
  for (auto& v : fv.ids) v = id(rng);
  return fv;
}

}  // namespace geosent::nn
