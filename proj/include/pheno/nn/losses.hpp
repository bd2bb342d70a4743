#pragma once

#include "pheno/errors.hpp"
#include "pheno/nn/tensor.hpp"

#include <cmath>
#include <span>
#include <string>

namespace pheno::nn {

template <typename Scalar>
struct LossResult {
  Scalar loss{};
  MatrixX<Scalar> grad;  // dL/dlogits
};

/// Row-wise log-softmax with max subtraction.
template <typename Scalar>
MatrixX<Scalar> log_softmax(const MatrixX<Scalar>& logits) {
  MatrixX<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar m = logits.row(i).maxCoeff();
    const Scalar lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

/// Mean categorical cross entropy and its gradient (softmax - onehot) / batch.
template <typename Scalar>
LossResult<Scalar> softmax_cross_entropy(const MatrixX<Scalar>& logits, std::span<const int> labels) {
  const auto n = logits.rows();
  const auto k = logits.cols();
  if (k == 0) throw InputError("cross entropy needs at least one class");
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw InputError("cross entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  if (n == 0) throw InputError("cross entropy of an empty batch");
  const MatrixX<Scalar> logp = log_softmax(logits);
  LossResult<Scalar> r;
  r.grad = logp.array().exp().matrix();
  Scalar total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    total -= logp(i, y);
    r.grad(i, y) -= Scalar(1);
  }
  r.loss = total / Scalar(n);
  r.grad /= Scalar(n);
  return r;
}

/// Cross entropy against the uniform distribution over K classes. Minimal
/// (= ln K) exactly when every row of logits is constant.
template <typename Scalar>
LossResult<Scalar> uniform_cross_entropy(const MatrixX<Scalar>& logits) {
  const auto n = logits.rows();
  const auto k = logits.cols();
  if (k < 2) throw InputError("uniform cross entropy needs K >= 2");
  if (n == 0) throw InputError("uniform cross entropy of an empty batch");
  const MatrixX<Scalar> logp = log_softmax(logits);
  LossResult<Scalar> r;
  r.loss = -logp.sum() / Scalar(n * k);
  r.grad = ((logp.array().exp() - Scalar(1) / Scalar(k)) / Scalar(n)).matrix();
  return r;
}

}  // namespace pheno::nn
