#pragma once

#include <cmath>
#include <map>
#include <string>
#include <type_traits>

#include <Eigen/Core>

#include "geosent/error.hpp"

namespace geosent::nn {

/// Row-major dense matrix; the [L, c] activation layout used throughout.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Named parameter (or gradient) tensors. Ordered by name so iteration, and
/// therefore every seeded draw over it, is deterministic.
template <typename Scalar>
using ParameterSet = std::map<std::string, Matrix<Scalar>>;

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& x, const char* what) {
  if (!x.derived().array().isFinite().all()) {
    throw NumericError(std::string("non-finite values in ") + what);
  }
}

template <typename Scalar>
  requires std::is_floating_point_v<Scalar>
Scalar sigmoid(Scalar z) {
  // Split form avoids exp overflow for large |z|.
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  return z.unaryExpr([](Scalar v) { return sigmoid(v); });
}

template <typename Scalar, typename From>
ParameterSet<Scalar> cast_parameters(const ParameterSet<From>& in) {
  ParameterSet<Scalar> out;
  for (const auto& [name, value] : in) out.emplace(name, value.template cast<Scalar>());
  return out;
}

}  // namespace geosent::nn
