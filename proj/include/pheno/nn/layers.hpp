#pragma once

#include "pheno/errors.hpp"
#include "pheno/nn/tensor.hpp"
#include "pheno/rng.hpp"

#include <cmath>
#include <string>

namespace pheno::nn {

/// y = x W^T + b, rows of x are samples.
template <typename Scalar>
struct Linear {
  MatrixX<Scalar> weight;  // out x in
  MatrixX<Scalar> bias;    // 1 x out
  MatrixX<Scalar> weight_grad;
  MatrixX<Scalar> bias_grad;

  Linear() = default;

  /// Fan-in scaled uniform init, U(-1/sqrt(in), 1/sqrt(in)).
  Linear(int in, int out, Rng rng) : weight(out, in), bias(1, out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) weight(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
    for (int c = 0; c < out; ++c) bias(0, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
    zero_grad();
  }

  int in_features() const { return static_cast<int>(weight.cols()); }
  int out_features() const { return static_cast<int>(weight.rows()); }

  MatrixX<Scalar> forward(const MatrixX<Scalar>& x) const {
    if (x.cols() != weight.cols())
      throw InputError("linear layer expects " + std::to_string(weight.cols()) + " inputs, got " +
                       std::to_string(x.cols()));
    MatrixX<Scalar> y = x * weight.transpose();
    y.rowwise() += bias.row(0);
    return y;
  }

  /// Accumulates parameter gradients; returns dL/dx.
  MatrixX<Scalar> backward(const MatrixX<Scalar>& x, const MatrixX<Scalar>& grad_y) {
    weight_grad.noalias() += grad_y.transpose() * x;
    bias_grad += grad_y.colwise().sum();
    return grad_y * weight;
  }

  void zero_grad() {
    weight_grad = MatrixX<Scalar>::Zero(weight.rows(), weight.cols());
    bias_grad = MatrixX<Scalar>::Zero(bias.rows(), bias.cols());
  }

  void collect(ParamList<Scalar>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight, &weight_grad});
    out.push_back({prefix + ".bias", &bias, &bias_grad});
  }
};

template <typename Scalar>
struct BatchNormCache {
  MatrixX<Scalar> x_hat;
  RowVectorX<Scalar> inv_std;
  Mode mode = Mode::train;
};

/// 1-D batch normalization over the batch dimension. Train mode normalizes
/// with biased batch statistics and folds the unbiased variance into the
/// running estimate.
template <typename Scalar>
struct BatchNorm1d {
  MatrixX<Scalar> gain;   // 1 x n
  MatrixX<Scalar> shift;  // 1 x n
  MatrixX<Scalar> gain_grad;
  MatrixX<Scalar> shift_grad;
  RowVectorX<Scalar> running_mean;
  RowVectorX<Scalar> running_var;
  Scalar momentum = Scalar(0.1);
  Scalar eps = Scalar(1e-5);

  BatchNorm1d() = default;

  explicit BatchNorm1d(int n)
      : gain(MatrixX<Scalar>::Ones(1, n)),
        shift(MatrixX<Scalar>::Zero(1, n)),
        running_mean(RowVectorX<Scalar>::Zero(n)),
        running_var(RowVectorX<Scalar>::Ones(n)) {
    zero_grad();
  }

  MatrixX<Scalar> forward(const MatrixX<Scalar>& z, Mode mode, BatchNormCache<Scalar>& cache) {
    const auto n = z.rows();
    cache.mode = mode;
    RowVectorX<Scalar> mean;
    if (mode == Mode::train) {
      if (n < 2) throw InputError("batch norm needs a batch of at least 2 in train mode");
      mean = z.colwise().mean();
      const MatrixX<Scalar> centered = z.rowwise() - mean;
      const RowVectorX<Scalar> var = centered.array().square().colwise().sum().matrix() / Scalar(n);
      cache.inv_std = (var.array() + eps).rsqrt().matrix();
      cache.x_hat = centered * cache.inv_std.asDiagonal();
      const Scalar unbias = Scalar(n) / Scalar(n - 1);
      running_mean = (Scalar(1) - momentum) * running_mean + momentum * mean;
      running_var = (Scalar(1) - momentum) * running_var + momentum * unbias * var;
    } else {
      cache.inv_std = (running_var.array() + eps).rsqrt().matrix();
      cache.x_hat = (z.rowwise() - running_mean) * cache.inv_std.asDiagonal();
    }
    MatrixX<Scalar> y = cache.x_hat * gain.row(0).asDiagonal();
    y.rowwise() += shift.row(0);
    return y;
  }

  MatrixX<Scalar> backward(const BatchNormCache<Scalar>& cache, const MatrixX<Scalar>& grad_y) {
    gain_grad += (grad_y.array() * cache.x_hat.array()).colwise().sum().matrix();
    shift_grad += grad_y.colwise().sum();
    const MatrixX<Scalar> g_hat = grad_y * gain.row(0).asDiagonal();
    if (cache.mode == Mode::eval) return g_hat * cache.inv_std.asDiagonal();
    const Scalar n = Scalar(grad_y.rows());
    const RowVectorX<Scalar> sum_g = g_hat.colwise().sum();
    const RowVectorX<Scalar> sum_gx = (g_hat.array() * cache.x_hat.array()).colwise().sum().matrix();
    MatrixX<Scalar> out = (g_hat * n).rowwise() - sum_g;
    out -= cache.x_hat * sum_gx.asDiagonal();
    return out * (cache.inv_std / n).asDiagonal();
  }

  void zero_grad() {
    gain_grad = MatrixX<Scalar>::Zero(gain.rows(), gain.cols());
    shift_grad = MatrixX<Scalar>::Zero(shift.rows(), shift.cols());
  }

  void collect(ParamList<Scalar>& out, const std::string& prefix) {
    out.push_back({prefix + ".gain", &gain, &gain_grad});
    out.push_back({prefix + ".shift", &shift, &shift_grad});
  }
};

}  // namespace pheno::nn
