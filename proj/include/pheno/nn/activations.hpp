#pragma once

#include <Eigen/Core>

#include <cmath>
#include <concepts>
#include <numbers>

namespace pheno::nn {

// Exact GELU: x * Phi(x).
template <std::floating_point Scalar>
Scalar gelu(Scalar x) {
  using std::erf;
  return Scalar(0.5) * x * (Scalar(1) + erf(x / std::numbers::sqrt2_v<Scalar>));
}

template <std::floating_point Scalar>
Scalar gelu_derivative(Scalar x) {
  using std::erf;
  using std::exp;
  const Scalar cdf = Scalar(0.5) * (Scalar(1) + erf(x / std::numbers::sqrt2_v<Scalar>));
  const Scalar pdf = exp(Scalar(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<Scalar> / std::numbers::sqrt2_v<Scalar>;
  return cdf + x * pdf;
}

template <typename Derived>
auto gelu(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return gelu(v); });
}

template <typename Derived>
auto gelu_derivative(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return gelu_derivative(v); });
}

}  // namespace pheno::nn
