#pragma once

#include "pheno/errors.hpp"
#include "pheno/nn/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

namespace pheno::nn {

struct AdamWOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

template <typename Scalar>
struct Moments {
  MatrixX<Scalar> m;
  MatrixX<Scalar> v;
};

/// AdamW with decoupled weight decay:
///   theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * wd * theta
template <typename Scalar>
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(AdamWOptions opts) : opts_(opts) {
    if (!(opts.lr > 0)) throw ConfigError("AdamW learning rate must be > 0");
  }

  const AdamWOptions& options() const { return opts_; }
  std::int64_t step_count() const { return t_; }
  std::map<std::string, Moments<Scalar>>& state() { return state_; }
  const std::map<std::string, Moments<Scalar>>& state() const { return state_; }
  void set_step_count(std::int64_t t) { t_ = t; }

  /// Throws TrainingError naming the first parameter whose gradient is not
  /// finite; no parameter is modified in that case.
  void step(const ParamList<Scalar>& params) {
    for (const auto& p : params) {
      if (!p.grad->allFinite()) throw TrainingError("non-finite gradient in " + p.name, -1, p.name);
      if (p.grad->rows() != p.value->rows() || p.grad->cols() != p.value->cols())
        throw InputError("gradient shape mismatch for " + p.name);
    }
    ++t_;
    const Scalar lr = static_cast<Scalar>(opts_.lr);
    const Scalar b1 = static_cast<Scalar>(opts_.beta1);
    const Scalar b2 = static_cast<Scalar>(opts_.beta2);
    const Scalar eps = static_cast<Scalar>(opts_.eps);
    const Scalar wd = static_cast<Scalar>(opts_.weight_decay);
    const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(opts_.beta1, static_cast<double>(t_)));
    const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(opts_.beta2, static_cast<double>(t_)));
    for (const auto& p : params) {
      auto& s = state_[p.name];
      if (s.m.size() == 0) {
        s.m = MatrixX<Scalar>::Zero(p.value->rows(), p.value->cols());
        s.v = MatrixX<Scalar>::Zero(p.value->rows(), p.value->cols());
      }
      const auto g = p.grad->array();
      s.m.array() = b1 * s.m.array() + (Scalar(1) - b1) * g;
      s.v.array() = b2 * s.v.array() + (Scalar(1) - b2) * g.square();
      const auto m_hat = s.m.array() / c1;
      const auto v_hat = s.v.array() / c2;
      auto theta = p.value->array();
      theta = theta - lr * (m_hat / (v_hat.sqrt() + eps)) - lr * wd * theta;
    }
  }

 private:
  AdamWOptions opts_;
  std::map<std::string, Moments<Scalar>> state_;
  std::int64_t t_ = 0;
};

}  // namespace pheno::nn
