#pragma once

#include "pheno/errors.hpp"
#include "pheno/nn/activations.hpp"
#include "pheno/nn/layers.hpp"
#include "pheno/nn/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pheno::nn {

struct BackboneConfig {
  int depth = 1;
  int width = 128;
  int d_in = 0;
  std::uint64_t seed = 0;
};

template <typename Scalar>
struct BlockCache {
  MatrixX<Scalar> input;
  MatrixX<Scalar> pre_norm;
  MatrixX<Scalar> pre_act;
  BatchNormCache<Scalar> norm;
};

template <typename Scalar>
struct BackboneCache {
  std::uint64_t version = 0;
  Mode mode = Mode::train;
  MatrixX<Scalar> input;
  std::vector<BlockCache<Scalar>> blocks;
};

/// Residual block: out = h + GELU(BN(h W^T + b)).
template <typename Scalar>
struct ResidualBlock {
  Linear<Scalar> linear;
  BatchNorm1d<Scalar> norm;

  ResidualBlock() = default;
  ResidualBlock(int width, Rng rng) : linear(width, width, rng), norm(width) {}

  MatrixX<Scalar> forward(const MatrixX<Scalar>& h, Mode mode, BlockCache<Scalar>& cache) {
    cache.input = h;
    cache.pre_norm = linear.forward(h);
    cache.pre_act = norm.forward(cache.pre_norm, mode, cache.norm);
    return h + gelu(cache.pre_act);
  }

  MatrixX<Scalar> backward(const BlockCache<Scalar>& cache, const MatrixX<Scalar>& grad_out) {
    const MatrixX<Scalar> g_act = (grad_out.array() * gelu_derivative(cache.pre_act).array()).matrix();
    const MatrixX<Scalar> g_lin = norm.backward(cache.norm, g_act);
    return grad_out + linear.backward(cache.input, g_lin);
  }
};

/// Input projection (d_in -> width) followed by `depth` residual blocks.
template <typename Scalar>
class Backbone {
 public:
  Backbone() = default;

  explicit Backbone(const BackboneConfig& cfg) : cfg_(cfg) {
    if (cfg.depth < 1 || cfg.width < 1 || cfg.d_in < 1)
      throw ConfigError("backbone needs depth, width and d_in >= 1");
    Rng rng(cfg.seed, "backbone/init");
    projection_ = Linear<Scalar>(cfg.d_in, cfg.width, rng.split("proj"));
    for (int i = 0; i < cfg.depth; ++i)
      blocks_.emplace_back(cfg.width, rng.split(static_cast<std::uint64_t>(i)));
  }

  const BackboneConfig& config() const { return cfg_; }
  int width() const { return cfg_.width; }
  std::uint64_t version() const { return version_; }

  Linear<Scalar>& projection() { return projection_; }
  const Linear<Scalar>& projection() const { return projection_; }
  std::vector<ResidualBlock<Scalar>>& blocks() { return blocks_; }
  const std::vector<ResidualBlock<Scalar>>& blocks() const { return blocks_; }

  MatrixX<Scalar> forward(const MatrixX<Scalar>& x, Mode mode, BackboneCache<Scalar>& cache) {
    if (!x.allFinite()) throw InputError("backbone input contains non-finite values");
    cache.version = version_;
    cache.mode = mode;
    cache.input = x;
    cache.blocks.resize(blocks_.size());
    MatrixX<Scalar> h = projection_.forward(x);
    for (std::size_t i = 0; i < blocks_.size(); ++i) h = blocks_[i].forward(h, mode, cache.blocks[i]);
    return h;
  }

  /// Eval-mode forward without a cache; a pure function of the parameters.
  MatrixX<Scalar> features(const MatrixX<Scalar>& x) const {
    auto copy = *this;  // running statistics are not touched in eval mode
    BackboneCache<Scalar> cache;
    return copy.forward(x, Mode::eval, cache);
  }

  /// Accumulates parameter gradients into the grad buffers; returns dL/dx.
  MatrixX<Scalar> backward(const BackboneCache<Scalar>& cache, const MatrixX<Scalar>& grad_out) {
    if (cache.version != version_)
      throw TrainingError("stale backbone cache: parameters changed after the forward pass");
    MatrixX<Scalar> g = grad_out;
    for (std::size_t i = blocks_.size(); i-- > 0;) g = blocks_[i].backward(cache.blocks[i], g);
    return projection_.backward(cache.input, g);
  }

  void zero_grad() {
    projection_.zero_grad();
    for (auto& b : blocks_) {
      b.linear.zero_grad();
      b.norm.zero_grad();
    }
  }

  ParamList<Scalar> params() {
    ParamList<Scalar> out;
    projection_.collect(out, "backbone.proj");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string p = "backbone.block" + std::to_string(i);
      blocks_[i].linear.collect(out, p + ".linear");
      blocks_[i].norm.collect(out, p + ".norm");
    }
    return out;
  }

  /// Invalidates caches taken before a parameter update.
  void mark_updated() { ++version_; }

 private:
  BackboneConfig cfg_;
  Linear<Scalar> projection_;
  std::vector<ResidualBlock<Scalar>> blocks_;
  std::uint64_t version_ = 0;
};

}  // namespace pheno::nn
