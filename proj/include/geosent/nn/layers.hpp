#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "geosent/encode.hpp"
#include "geosent/nn/tensor.hpp"

namespace geosent::nn {

// ---------------------------------------------------------------------------
// Embedding lookup: out[i] = weight_i * E[id_i].

template <typename Scalar>
Matrix<Scalar> embedding_forward(const FeatureVector& input, const Matrix<Scalar>& table) {
  Matrix<Scalar> out(static_cast<Eigen::Index>(input.size()), table.cols());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const int id = input.ids[i];
    if (id < 0 || id >= table.rows()) {
      throw IndexError("embedding id " + std::to_string(id) + " outside " +
                       std::to_string(table.rows()) + " rows");
    }
    out.row(static_cast<Eigen::Index>(i)) = Scalar(input.weight(i)) * table.row(id);
  }
  return out;
}

/// Scatter-adds the upstream gradient into the looked-up rows of `d_table`.
template <typename Scalar>
void embedding_backward(const FeatureVector& input, const Matrix<Scalar>& d_out,
                        Matrix<Scalar>& d_table) {
  for (std::size_t i = 0; i < input.size(); ++i) {
    d_table.row(input.ids[i]) += Scalar(input.weight(i)) * d_out.row(static_cast<Eigen::Index>(i));
  }
}

// ---------------------------------------------------------------------------
// Valid 1-D convolution along the sequence axis followed by ReLU.
//
// Kernel layout: W is (k * c_in) x c_out with row j * c_in + ci holding tap j
// of input channel ci, i.e. a [k, c_in, c_out] tensor flattened row-major.

template <typename Scalar>
auto unfold(const Matrix<Scalar>& x, Eigen::Index k) {
  // Row-major storage makes each receptive field a contiguous run of k*c values.
  using Strided = Eigen::Map<const Matrix<Scalar>, 0, Eigen::OuterStride<>>;
  return Strided(x.data(), x.rows() - k + 1, k * x.cols(), Eigen::OuterStride<>(x.cols()));
}

template <typename Scalar>
Matrix<Scalar> conv1d(const Matrix<Scalar>& x, const Matrix<Scalar>& W, const RowVector<Scalar>& b) {
  const Eigen::Index c_in = x.cols();
  if (c_in == 0 || W.rows() % c_in != 0) throw ShapeError("conv1d kernel does not match input channels");
  const Eigen::Index k = W.rows() / c_in;
  if (x.rows() < k) {
    throw ShapeError("conv1d input length " + std::to_string(x.rows()) + " < kernel " +
                     std::to_string(k));
  }
  if (b.cols() != W.cols()) throw ShapeError("conv1d bias does not match filters");
  Matrix<Scalar> out = unfold(x, k) * W;
  out.rowwise() += b;
  return out.cwiseMax(Scalar(0));
}

template <typename Scalar>
struct Conv1dGrads {
  Matrix<Scalar> dx;
  Matrix<Scalar> dW;
  RowVector<Scalar> db;
};

/// `out` is the forward (post-ReLU) output; its sign pattern is the ReLU mask.
template <typename Scalar>
Conv1dGrads<Scalar> conv1d_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& W,
                                    const Matrix<Scalar>& out, const Matrix<Scalar>& d_out) {
  const Eigen::Index c_in = x.cols();
  const Eigen::Index k = W.rows() / c_in;
  const Eigen::Index steps = out.rows();
  const Matrix<Scalar> g = (out.array() > Scalar(0)).select(d_out, Scalar(0));
  Conv1dGrads<Scalar> grads;
  grads.dW.noalias() = unfold(x, k).transpose() * g;
  grads.db = g.colwise().sum();
  const Matrix<Scalar> d_cols = g * W.transpose();
  grads.dx = Matrix<Scalar>::Zero(x.rows(), c_in);
  for (Eigen::Index j = 0; j < k; ++j) {
    grads.dx.middleRows(j, steps) += d_cols.middleCols(j * c_in, c_in);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Non-overlapping max pooling; trailing positions that do not fill a window are dropped.

template <typename Scalar>
struct Pooled {
  Matrix<Scalar> out;
  std::vector<Eigen::Index> argmax;  // source row per output element, row-major
};

template <typename Scalar>
Pooled<Scalar> maxpool1d(const Matrix<Scalar>& x, Eigen::Index width) {
  if (width < 1 || x.rows() < width) {
    throw ShapeError("maxpool1d input length " + std::to_string(x.rows()) + " < width " +
                     std::to_string(width));
  }
  const Eigen::Index n = x.rows() / width;
  Pooled<Scalar> p;
  p.out.resize(n, x.cols());
  p.argmax.resize(static_cast<std::size_t>(n * x.cols()));
  for (Eigen::Index w = 0; w < n; ++w) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      Eigen::Index best = w * width;
      for (Eigen::Index r = best + 1; r < (w + 1) * width; ++r) {
        if (x(r, c) > x(best, c)) best = r;  // strict: first index wins ties
      }
      p.out(w, c) = x(best, c);
      p.argmax[static_cast<std::size_t>(w * x.cols() + c)] = best;
    }
  }
  return p;
}

template <typename Scalar>
Matrix<Scalar> maxpool1d_backward(const Matrix<Scalar>& d_out, const std::vector<Eigen::Index>& argmax,
                                  Eigen::Index input_rows) {
  Matrix<Scalar> dx = Matrix<Scalar>::Zero(input_rows, d_out.cols());
  for (Eigen::Index w = 0; w < d_out.rows(); ++w) {
    for (Eigen::Index c = 0; c < d_out.cols(); ++c) {
      dx(argmax[static_cast<std::size_t>(w * d_out.cols() + c)], c) += d_out(w, c);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Fully connected layer.

enum class Activation { none, relu, sigmoid };

template <typename Scalar>
RowVector<Scalar> dense(const RowVector<Scalar>& x, const Matrix<Scalar>& W, const RowVector<Scalar>& b,
                        Activation act) {
  if (x.cols() != W.rows() || b.cols() != W.cols()) {
    throw ShapeError("dense: input " + std::to_string(x.cols()) + " vs weights " +
                     std::to_string(W.rows()) + "x" + std::to_string(W.cols()));
  }
  RowVector<Scalar> z = x * W + b;
  switch (act) {
    case Activation::none: return z;
    case Activation::relu: return z.cwiseMax(Scalar(0));
    case Activation::sigmoid: return sigmoid(z);
  }
  return z;
}

template <typename Scalar>
struct DenseGrads {
  RowVector<Scalar> dx;
  Matrix<Scalar> dW;
  RowVector<Scalar> db;
};

/// `y` is the forward output; activation derivatives are taken from it.
template <typename Scalar>
DenseGrads<Scalar> dense_backward(const RowVector<Scalar>& x, const Matrix<Scalar>& W,
                                  const RowVector<Scalar>& y, const RowVector<Scalar>& dy,
                                  Activation act) {
  RowVector<Scalar> dz;
  switch (act) {
    case Activation::none: dz = dy; break;
    case Activation::relu: dz = (y.array() > Scalar(0)).select(dy, Scalar(0)); break;
    case Activation::sigmoid: dz = dy.cwiseProduct(y.cwiseProduct((Scalar(1) - y.array()).matrix())); break;
  }
  DenseGrads<Scalar> g;
  g.dW.noalias() = x.transpose() * dz;
  g.db = dz;
  g.dx.noalias() = dz * W.transpose();
  return g;
}

// ---------------------------------------------------------------------------
// Inverted dropout.

enum class Mode { train, eval };

template <typename Scalar>
struct Dropped {
  Matrix<Scalar> out;
  Matrix<Scalar> mask;  // 0 or 1/(1-p); all ones in eval mode
};

inline void validate_dropout(double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must be in [0, 1)");
}

template <typename Scalar, typename Rng>
Dropped<Scalar> dropout(const Matrix<Scalar>& x, double p, Mode mode, Rng& rng) {
  validate_dropout(p);
  Dropped<Scalar> d;
  if (mode == Mode::eval || p == 0.0) {
    d.mask = Matrix<Scalar>::Ones(x.rows(), x.cols());
    d.out = x;
    return d;
  }
  std::bernoulli_distribution keep(1.0 - p);
  const Scalar scale = Scalar(1.0 / (1.0 - p));
  d.mask.resize(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < d.mask.size(); ++i) d.mask.data()[i] = keep(rng) ? scale : Scalar(0);
  d.out = x.cwiseProduct(d.mask);
  return d;
}

template <typename Scalar>
Dropped<Scalar> dropout(const Matrix<Scalar>& x, double p, Mode mode, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return dropout(x, p, mode, rng);
}

template <typename Scalar>
Matrix<Scalar> dropout_backward(const Matrix<Scalar>& d_out, const Matrix<Scalar>& mask) {
  return d_out.cwiseProduct(mask);
}

// ---------------------------------------------------------------------------
// Binary cross-entropy on a probability.

inline constexpr double kProbabilityClamp = 1e-7;

template <typename Scalar>
Scalar clamp_probability(Scalar p) {
  const Scalar eps = Scalar(kProbabilityClamp);
  return std::min(std::max(p, eps), Scalar(1) - eps);
}

template <typename Scalar>
Scalar bce_loss(Scalar p, int y) {
  const Scalar pc = clamp_probability(p);
  return y == 1 ? -std::log(pc) : -std::log(Scalar(1) - pc);
}

/// dL/dp evaluated at the clamped probability.
template <typename Scalar>
Scalar bce_grad(Scalar p, int y) {
  const Scalar pc = clamp_probability(p);
  return (pc - Scalar(y)) / (pc * (Scalar(1) - pc));
}

}  // namespace geosent::nn
