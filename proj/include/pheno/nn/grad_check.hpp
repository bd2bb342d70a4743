#pragma once

#include "pheno/nn/backbone.hpp"
#include "pheno/nn/losses.hpp"
#include "pheno/nn/mlp_head.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace pheno::nn {

struct GradCorruption {
  std::string param;  // e.g. "backbone.block0.linear.weight"
  Eigen::Index index = 0;
  double delta = 1e-2;
};

struct GradCheckOptions {
  BackboneConfig backbone{1, 8, 6, 1};
  int n_classes = 5;
  int batch = 16;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::optional<GradCorruption> corrupt;
};

struct LayerGradError {
  std::string name;
  double max_rel_err = 0;
  double max_abs_err = 0;
  Eigen::Index n_entries = 0;
  bool pass = true;
};

struct GradCheckReport {
  double max_rel_err = 0;
  bool pass = true;
  std::vector<LayerGradError> layers;

  std::vector<std::string> failing_layers() const {
    std::vector<std::string> out;
    for (const auto& l : layers)
      if (!l.pass) out.push_back(l.name);
    return out;
  }
};

/// |a - n| / max(|a| + |n|, 1e-6); the floor keeps exactly-zero gradients
/// (e.g. biases feeding batch norm) from amplifying round-off.
inline double relative_grad_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-6);
}

/// Compares analytic gradients of CE(head(backbone(x))) with central finite
/// differences on every parameter of backbone and head, plus the input.
inline GradCheckReport grad_check(const GradCheckOptions& opts) {
  using M = MatrixX<double>;
  if (opts.batch < 2) throw InputError("grad_check needs a batch of at least 2");
  Backbone<double> net(opts.backbone);
  MlpHead<double> head(opts.backbone.width, opts.backbone.width, opts.n_classes,
                       Rng(opts.backbone.seed, "gradcheck/head"));
  Rng data(opts.backbone.seed, "gradcheck/data");
  M x(opts.batch, opts.backbone.d_in);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = data.normal();
  std::vector<int> labels(static_cast<std::size_t>(opts.batch));
  for (auto& y : labels) y = static_cast<int>(data.below(static_cast<std::uint64_t>(opts.n_classes)));

  auto loss_at = [&](const M& input) {
    BackboneCache<double> bc;
    HeadCache<double> hc;
    const M feats = net.forward(input, Mode::train, bc);
    return softmax_cross_entropy<double>(head.forward(feats, hc), labels).loss;
  };

  net.zero_grad();
  head.zero_grad();
  BackboneCache<double> bc;
  HeadCache<double> hc;
  const M feats = net.forward(x, Mode::train, bc);
  const auto ce = softmax_cross_entropy<double>(head.forward(feats, hc), labels);
  const M g_feats = head.backward(hc, ce.grad);
  M g_input = net.backward(bc, g_feats);

  ParamList<double> params = net.params();
  for (const auto& p : head.params("head")) params.push_back(p);
  params.push_back({"input", &x, &g_input});

  if (opts.corrupt) {
    for (auto& p : params)
      if (p.name == opts.corrupt->param) (*p.grad)(opts.corrupt->index) += opts.corrupt->delta;
  }

  GradCheckReport report;
  for (auto& p : params) {
    LayerGradError row;
    row.name = p.name;
    row.n_entries = p.value->size();
    for (Eigen::Index i = 0; i < p.value->size(); ++i) {
      double& v = (*p.value)(i);
      const double saved = v;
      v = saved + opts.step;
      const double up = loss_at(x);
      v = saved - opts.step;
      const double down = loss_at(x);
      v = saved;
      const double numeric = (up - down) / (2 * opts.step);
      const double analytic = (*p.grad)(i);
      row.max_abs_err = std::max(row.max_abs_err, std::abs(analytic - numeric));
      row.max_rel_err = std::max(row.max_rel_err, relative_grad_error(analytic, numeric));
    }
    row.pass = row.max_rel_err < opts.tolerance;
    report.max_rel_err = std::max(report.max_rel_err, row.max_rel_err);
    report.pass = report.pass && row.pass;
    report.layers.push_back(row);
  }
  return report;
}

}  // namespace pheno::nn
