#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "geosent/encode.hpp"
#include "geosent/nn/layers.hpp"
#include "geosent/nn/lstm.hpp"
#include "geosent/nn/model_spec.hpp"
#include "geosent/nn/tensor.hpp"

namespace geosent::nn {

template <typename Scalar>
struct StepResult {
  Scalar probability;
  Scalar loss;
};

/// Embedding-fronted binary classifier: either
///   embedding -> 3 x (conv1d + ReLU, maxpool) -> flatten -> dense(ReLU) -> dropout -> dense(sigmoid)
/// or
///   embedding -> bidirectional LSTM -> dense(sigmoid).
///
/// Parameters live in a name-ordered map. The embedding's PAD row is held at
/// zero: its gradient is always discarded.
template <typename Scalar>
class Model {
 public:
  Model(ModelSpec spec, std::size_t input_length, Matrix<Scalar> embedding, std::uint64_t seed)
      : spec_(spec), input_length_(input_length) {
    spec_.validate(input_length_);
    if (static_cast<std::size_t>(embedding.cols()) != spec_.embed_dim) {
      throw ShapeError("embedding width " + std::to_string(embedding.cols()) + " != embed_dim " +
                       std::to_string(spec_.embed_dim));
    }
    params_["embedding"] = std::move(embedding);
    initialize(seed);
  }

  /// Restores a model from saved parameters.
  Model(ModelSpec spec, std::size_t input_length, ParameterSet<Scalar> params)
      : spec_(spec), input_length_(input_length), params_(std::move(params)) {
    spec_.validate(input_length_);
    const auto expected = Model(spec_, input_length_,
                                Matrix<Scalar>::Zero(params_.at("embedding").rows(),
                                                     static_cast<Eigen::Index>(spec_.embed_dim)),
                                0)
                              .parameters();
    for (const auto& [name, value] : expected) {
      const auto it = params_.find(name);
      if (it == params_.end() || it->second.rows() != value.rows() || it->second.cols() != value.cols()) {
        throw ShapeError("restored parameter '" + name + "' missing or misshapen");
      }
    }
  }

  const ModelSpec& spec() const { return spec_; }
  std::size_t input_length() const { return input_length_; }
  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }
  const Matrix<Scalar>& embedding() const { return params_.at("embedding"); }

  /// Mutation hook for gradient-check sanity tests: the chosen layer's
  /// backward pass emits a wrong gradient.
  void set_backward_fault(std::optional<LayerKind> layer) { fault_ = layer; }

  /// Zero-filled gradient map with one entry per trainable parameter.
  ParameterSet<Scalar> zero_gradients() const {
    ParameterSet<Scalar> g;
    for (const auto& [name, value] : params_) {
      if (name == "embedding" && spec_.freeze_embedding) continue;
      g.emplace(name, Matrix<Scalar>::Zero(value.rows(), value.cols()));
    }
    return g;
  }

  /// Probability of the positive class with dropout disabled.
  Scalar predict(const FeatureVector& input) const {
    std::mt19937_64 unused(0);
    Trace trace;
    return forward(input, Mode::eval, unused, trace);
  }

  /// Forward and backward pass for one labelled example; gradients are added into `grads`.
  template <typename Rng>
  StepResult<Scalar> accumulate(const FeatureVector& input, int label, Mode mode, Rng& rng,
                                ParameterSet<Scalar>& grads) const {
    Trace trace;
    const Scalar p = forward(input, mode, rng, trace);
    backward(input, label, trace, grads);
    return {p, bce_loss(p, label)};
  }

  /// Mean BCE over a single example in eval mode; the objective seen by gradient checks.
  Scalar loss(const FeatureVector& input, int label) const { return bce_loss(predict(input), label); }

  template <typename To>
  Model<To> cast() const {
    Model<To> out(spec_, input_length_, cast_parameters<To>(params_));
    out.set_backward_fault(fault_);
    return out;
  }

 private:
  struct Trace {
    Matrix<Scalar> embedded;
    // cnn
    std::array<Matrix<Scalar>, 3> conv_out;
    std::array<Pooled<Scalar>, 3> pooled;
    RowVector<Scalar> flat;
    RowVector<Scalar> hidden;
    Dropped<Scalar> dropped;
    // bilstm
    BiLstmTrace<Scalar> lstm;
    RowVector<Scalar> lstm_out;
    // head
    RowVector<Scalar> head_in;
    RowVector<Scalar> prob;
  };

  static std::string conv_name(int stage, const char* what) {
    return "conv" + std::to_string(stage + 1) + "." + what;
  }

  void glorot(const std::string& name, Eigen::Index rows, Eigen::Index cols, double fan_in,
              double fan_out, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix<Scalar> w(rows, cols);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = Scalar(limit * dist(rng));
    params_[name] = std::move(w);
  }

  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto d = static_cast<Eigen::Index>(spec_.embed_dim);
    Eigen::Index head_in = 0;
    if (spec_.kind == ModelKind::cnn) {
      const auto k = static_cast<Eigen::Index>(spec_.kernel);
      Eigen::Index c_in = d;
      for (int s = 0; s < 3; ++s) {
        const auto c_out = static_cast<Eigen::Index>(spec_.conv_filters[static_cast<std::size_t>(s)]);
        glorot(conv_name(s, "W"), k * c_in, c_out, double(k * c_in), double(k * c_out), rng);
        params_[conv_name(s, "b")] = Matrix<Scalar>::Zero(1, c_out);
        c_in = c_out;
      }
      const auto flat = static_cast<Eigen::Index>(spec_.cnn_output_length(input_length_)) * c_in;
      const auto units = static_cast<Eigen::Index>(spec_.dense_units);
      glorot("dense1.W", flat, units, double(flat), double(units), rng);
      params_["dense1.b"] = Matrix<Scalar>::Zero(1, units);
      head_in = units;
    } else {
      const auto u = static_cast<Eigen::Index>(spec_.lstm_units);
      for (const char* dir : {"lstm_fwd", "lstm_bwd"}) {
        const std::string prefix = dir;
        glorot(prefix + ".Wx", d, 4 * u, double(d), double(4 * u), rng);
        glorot(prefix + ".Wh", u, 4 * u, double(u), double(4 * u), rng);
        Matrix<Scalar> b = Matrix<Scalar>::Zero(1, 4 * u);
        b.middleCols(u, u).setOnes();  // forget-gate bias starts at 1
        params_[prefix + ".b"] = std::move(b);
      }
      head_in = 2 * u;
    }
    glorot("out.W", head_in, 1, double(head_in), 1.0, rng);
    params_["out.b"] = Matrix<Scalar>::Zero(1, 1);
  }

  LstmParams<Scalar> lstm_params(const char* dir) const {
    const std::string prefix = dir;
    return {params_.at(prefix + ".Wx"), params_.at(prefix + ".Wh"), params_.at(prefix + ".b")};
  }

  template <typename Rng>
  Scalar forward(const FeatureVector& input, Mode mode, Rng& rng, Trace& tr) const {
    if (input.size() != input_length_) {
      throw ShapeError("model expects " + std::to_string(input_length_) + " ids, got " +
                       std::to_string(input.size()));
    }
    tr.embedded = embedding_forward(input, params_.at("embedding"));
    if (spec_.kind == ModelKind::cnn) {
      const Matrix<Scalar>* x = &tr.embedded;
      for (int s = 0; s < 3; ++s) {
        const auto si = static_cast<std::size_t>(s);
        tr.conv_out[si] = conv1d(*x, params_.at(conv_name(s, "W")),
                                 RowVector<Scalar>(params_.at(conv_name(s, "b"))));
        tr.pooled[si] = maxpool1d(tr.conv_out[si], static_cast<Eigen::Index>(spec_.pool));
        x = &tr.pooled[si].out;
      }
      tr.flat = Eigen::Map<const RowVector<Scalar>>(tr.pooled[2].out.data(), tr.pooled[2].out.size());
      tr.hidden = dense(tr.flat, params_.at("dense1.W"), RowVector<Scalar>(params_.at("dense1.b")),
                        Activation::relu);
      tr.dropped = dropout(Matrix<Scalar>(tr.hidden), spec_.dropout_p, mode, rng);
      tr.head_in = tr.dropped.out;
    } else {
      tr.lstm_out = bilstm(tr.embedded, lstm_params("lstm_fwd"), lstm_params("lstm_bwd"), &tr.lstm);
      tr.head_in = tr.lstm_out;
    }
    tr.prob = dense(tr.head_in, params_.at("out.W"), RowVector<Scalar>(params_.at("out.b")),
                    Activation::sigmoid);
    require_finite(tr.prob, "model output");
    return tr.prob(0);
  }

  bool faulty(LayerKind k) const { return fault_ && *fault_ == k; }

  static void add(ParameterSet<Scalar>& grads, const std::string& name, const Matrix<Scalar>& g) {
    grads.at(name) += g;
  }

  void backward(const FeatureVector& input, int label, const Trace& tr, ParameterSet<Scalar>& grads) const {
    const Scalar corrupt(1.5);
    RowVector<Scalar> d_prob(1);
    d_prob(0) = bce_grad(tr.prob(0), label);
    auto head = dense_backward(tr.head_in, params_.at("out.W"), tr.prob, d_prob, Activation::sigmoid);
    if (faulty(LayerKind::dense)) head.dW *= corrupt;
    add(grads, "out.W", head.dW);
    add(grads, "out.b", head.db);

    Matrix<Scalar> d_embedded;
    if (spec_.kind == ModelKind::cnn) {
      Matrix<Scalar> d_hidden = dropout_backward(Matrix<Scalar>(head.dx), tr.dropped.mask);
      if (faulty(LayerKind::dropout)) d_hidden *= corrupt;
      auto d1 = dense_backward(tr.flat, params_.at("dense1.W"), tr.hidden, RowVector<Scalar>(d_hidden),
                               Activation::relu);
      if (faulty(LayerKind::dense)) d1.dW *= corrupt;
      add(grads, "dense1.W", d1.dW);
      add(grads, "dense1.b", d1.db);
      const auto& p3 = tr.pooled[2].out;
      Matrix<Scalar> d_x = Eigen::Map<const Matrix<Scalar>>(d1.dx.data(), p3.rows(), p3.cols());
      for (int s = 2; s >= 0; --s) {
        const auto si = static_cast<std::size_t>(s);
        auto argmax = tr.pooled[si].argmax;
        if (faulty(LayerKind::maxpool1d)) {
          // Route to the last slot of each window instead of the max.
          const auto w = static_cast<Eigen::Index>(spec_.pool);
          for (auto& a : argmax) a = (a / w) * w + (w - 1);
        }
        Matrix<Scalar> d_conv = maxpool1d_backward(d_x, argmax, tr.conv_out[si].rows());
        const Matrix<Scalar>& conv_in = s == 0 ? tr.embedded : tr.pooled[si - 1].out;
        auto g = conv1d_backward(conv_in, params_.at(conv_name(s, "W")), tr.conv_out[si], d_conv);
        if (faulty(LayerKind::conv1d)) {
          g.dW *= corrupt;
          g.dx *= corrupt;
        }
        add(grads, conv_name(s, "W"), g.dW);
        add(grads, conv_name(s, "b"), g.db);
        d_x = std::move(g.dx);
      }
      d_embedded = std::move(d_x);
    } else {
      auto g = bilstm_backward(tr.embedded, lstm_params("lstm_fwd"), lstm_params("lstm_bwd"), tr.lstm,
                               head.dx);
      if (faulty(LayerKind::bilstm)) {
        g.forward.dWh *= corrupt;
        g.backward.dWx *= corrupt;
        g.dx *= corrupt;
      }
      add(grads, "lstm_fwd.Wx", g.forward.dWx);
      add(grads, "lstm_fwd.Wh", g.forward.dWh);
      add(grads, "lstm_fwd.b", g.forward.db);
      add(grads, "lstm_bwd.Wx", g.backward.dWx);
      add(grads, "lstm_bwd.Wh", g.backward.dWh);
      add(grads, "lstm_bwd.b", g.backward.db);
      d_embedded = std::move(g.dx);
    }
    if (spec_.freeze_embedding) return;
    if (faulty(LayerKind::embedding)) d_embedded *= corrupt;
    auto& d_table = grads.at("embedding");
    embedding_backward(input, d_embedded, d_table);
    d_table.row(Vocabulary::kPad).setZero();
  }

  ModelSpec spec_;
  std::size_t input_length_;
  ParameterSet<Scalar> params_;
  std::optional<LayerKind> fault_;
};

}  // namespace geosent::nn
