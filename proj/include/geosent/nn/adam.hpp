#pragma once

#include <cmath>
#include <cstdint>

#include "geosent/nn/tensor.hpp"

namespace geosent::nn {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  ParameterSet<Scalar> m;
  ParameterSet<Scalar> v;
};

/// One bias-corrected Adam update. Parameters without a gradient entry are
/// left untouched (used for frozen embeddings).
template <typename Scalar>
void adam_step(ParameterSet<Scalar>& params, const ParameterSet<Scalar>& grads, AdamState<Scalar>& state) {
  for (const auto& [name, g] : grads) {
    const auto it = params.find(name);
    if (it == params.end()) throw ShapeError("gradient for unknown parameter '" + name + "'");
    if (g.rows() != it->second.rows() || g.cols() != it->second.cols()) {
      throw ShapeError("gradient shape mismatch for '" + name + "'");
    }
    require_finite(g, name.c_str());
  }
  ++state.step;
  const auto& c = state.config;
  const Scalar b1 = Scalar(c.beta1);
  const Scalar b2 = Scalar(c.beta2);
  const Scalar correction1 = Scalar(1) - Scalar(std::pow(c.beta1, static_cast<double>(state.step)));
  const Scalar correction2 = Scalar(1) - Scalar(std::pow(c.beta2, static_cast<double>(state.step)));
  const Scalar lr = Scalar(c.lr);
  const Scalar eps = Scalar(c.epsilon);
  for (const auto& [name, g] : grads) {
    auto& theta = params.at(name);
    auto [mi, m_new] = state.m.try_emplace(name, Matrix<Scalar>::Zero(g.rows(), g.cols()));
    auto [vi, v_new] = state.v.try_emplace(name, Matrix<Scalar>::Zero(g.rows(), g.cols()));
    auto& m = mi->second;
    auto& v = vi->second;
    m = b1 * m + (Scalar(1) - b1) * g;
    v.array() = b2 * v.array() + (Scalar(1) - b2) * g.array().square();
    theta.array() -= lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + eps);
  }
}

}  // namespace geosent::nn
