#pragma once

#include "pheno/nn/activations.hpp"
#include "pheno/nn/layers.hpp"

#include <array>
#include <string>

namespace pheno::nn {

template <typename Scalar>
struct HeadCache {
  std::array<MatrixX<Scalar>, 3> inputs;
  std::array<MatrixX<Scalar>, 2> pre_act;
};

/// Three linear layers (in -> hidden -> hidden -> classes) with GELU between.
template <typename Scalar>
class MlpHead {
 public:
  MlpHead() = default;

  MlpHead(int in, int hidden, int n_classes, Rng rng) {
    if (in < 1 || hidden < 1 || n_classes < 1) throw ConfigError("head dimensions must be >= 1");
    layers_[0] = Linear<Scalar>(in, hidden, rng.split("l0"));
    layers_[1] = Linear<Scalar>(hidden, hidden, rng.split("l1"));
    layers_[2] = Linear<Scalar>(hidden, n_classes, rng.split("l2"));
  }

  int in_features() const { return layers_[0].in_features(); }
  int n_classes() const { return layers_[2].out_features(); }
  std::array<Linear<Scalar>, 3>& layers() { return layers_; }
  const std::array<Linear<Scalar>, 3>& layers() const { return layers_; }

  MatrixX<Scalar> forward(const MatrixX<Scalar>& x, HeadCache<Scalar>& cache) const {
    cache.inputs[0] = x;
    cache.pre_act[0] = layers_[0].forward(x);
    cache.inputs[1] = gelu(cache.pre_act[0]);
    cache.pre_act[1] = layers_[1].forward(cache.inputs[1]);
    cache.inputs[2] = gelu(cache.pre_act[1]);
    return layers_[2].forward(cache.inputs[2]);
  }

  MatrixX<Scalar> logits(const MatrixX<Scalar>& x) const {
    HeadCache<Scalar> cache;
    return forward(x, cache);
  }

  MatrixX<Scalar> backward(const HeadCache<Scalar>& cache, const MatrixX<Scalar>& grad_logits) {
    MatrixX<Scalar> g = layers_[2].backward(cache.inputs[2], grad_logits);
    for (int l = 1; l >= 0; --l) {
      g = (g.array() * gelu_derivative(cache.pre_act[l]).array()).matrix();
      g = layers_[l].backward(cache.inputs[l], g);
    }
    return g;
  }

  void zero_grad() {
    for (auto& l : layers_) l.zero_grad();
  }

  ParamList<Scalar> params(const std::string& prefix) {
    ParamList<Scalar> out;
    for (int l = 0; l < 3; ++l) layers_[l].collect(out, prefix + ".l" + std::to_string(l));
    return out;
  }

 private:
  std::array<Linear<Scalar>, 3> layers_;
};

}  // namespace pheno::nn
