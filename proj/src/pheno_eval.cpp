#include "pheno/pheno_eval.hpp"

#include "pheno/errors.hpp"
#include "pheno/nn/losses.hpp"
#include "pheno/profile_prep.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pheno {

double topk_accuracy(const Matrix& logits, std::span<const int> labels, int k) {
  const auto n = logits.rows();
  const auto n_classes = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw InputError("topk_accuracy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  if (k < 1 || k > n_classes)
    throw InputError("topk_accuracy: k = " + std::to_string(k) + " outside [1, " + std::to_string(n_classes) + "]");
  if (n == 0) return 0.0;
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= n_classes) throw InputError("topk_accuracy: label " + std::to_string(y) + " out of range");
    const double v = logits(i, y);
    Eigen::Index rank = 0;
    for (Eigen::Index c = 0; c < n_classes && rank < k; ++c) {
      const double u = logits(i, c);
      if (u > v || (u == v && c < y)) ++rank;
    }
    if (rank < k) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::map<int, double> label_histogram(std::span<const int> labels) {
  std::map<int, double> h;
  for (int y : labels) h[y] += 1.0;
  return h;
}

double chance_topk(const std::map<int, double>& histogram, int k) {
  if (histogram.empty()) throw InputError("chance_topk: empty histogram");
  std::vector<double> freq;
  freq.reserve(histogram.size());
  for (const auto& [id, c] : histogram) freq.push_back(c);
  std::sort(freq.begin(), freq.end(), std::greater<>());
  const double total = std::accumulate(freq.begin(), freq.end(), 0.0);
  if (!(total > 0)) throw InputError("chance_topk: histogram has no mass");
  const auto top = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), freq.size());
  return std::accumulate(freq.begin(), freq.begin() + static_cast<std::ptrdiff_t>(top), 0.0) / total;
}

double molecule_cce(const Matrix& logits, std::span<const int> labels) {
  return nn::softmax_cross_entropy<double>(logits, labels).loss;
}

DiscoveryCurve discovery_curve(const Vector& crispr_rep, const std::vector<MoleculeRep>& molecules, int gene_id,
                               DistanceMetric metric) {
  if (molecules.empty()) throw InputError("discovery_curve: no molecules");
  DiscoveryCurve curve;
  struct Scored {
    double dist;
    int id;
    bool match;
  };
  std::vector<Scored> scored;
  scored.reserve(molecules.size());
  const double crispr_norm = crispr_rep.norm();
  for (const auto& m : molecules) {
    if (m.rep.size() != crispr_rep.size())
      throw DimensionError("discovery_curve: molecule " + std::to_string(m.id) + " has dimension " +
                           std::to_string(m.rep.size()) + ", expected " + std::to_string(crispr_rep.size()));
    double dist;
    const double norm = m.rep.norm();
    if (metric == DistanceMetric::cosine && crispr_norm > 0 && norm > 0) {
      dist = 1.0 - crispr_rep.dot(m.rep) / (crispr_norm * norm);
    } else {
      if (metric == DistanceMetric::cosine) ++curve.euclidean_fallbacks;
      dist = (crispr_rep - m.rep).norm();
    }
    scored.push_back({dist, m.id, m.target_id == gene_id});
  }
  std::sort(scored.begin(), scored.end(),
            [](const Scored& a, const Scored& b) { return a.dist != b.dist ? a.dist < b.dist : a.id < b.id; });
  int hits = 0;
  for (std::size_t g = 0; g < scored.size(); ++g) {
    if (scored[g].match) ++hits;
    curve.guesses.push_back(static_cast<int>(g) + 1);
    curve.cumulative_hits.push_back(hits);
    curve.ranked_ids.push_back(scored[g].id);
  }
  curve.n_matches = hits;
  return curve;
}

double discovery_auc(const DiscoveryCurve& curve) {
  if (curve.n_matches <= 0) throw InputError("discovery AUC is undefined without matching molecules");
  const double m = static_cast<double>(curve.guesses.size());
  const double n = static_cast<double>(curve.n_matches);
  double area = 0.0;
  double prev = 0.0;
  for (int h : curve.cumulative_hits) {
    const double y = h / n;
    area += 0.5 * (prev + y) / m;
    prev = y;
  }
  return area;
}

std::vector<DiscoveryResult> discovery_eval(const ArenaDataset& d, const Matrix& reps, int min_replicates,
                                            DistanceMetric metric) {
  if (reps.rows() != static_cast<Eigen::Index>(d.size()))
    throw DimensionError("discovery_eval: " + std::to_string(reps.rows()) + " representations for " +
                         std::to_string(d.size()) + " wells");
  std::map<int, std::vector<int>> holdout_wells, all_wells, crispr_wells;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& w = d.wells[i];
    if (w.pert_type == PertType::crispr) {
      crispr_wells[w.pert_id].push_back(static_cast<int>(i));
    } else if (w.pert_type == PertType::compound && d.is_arena_compound(w.pert_id)) {
      all_wells[w.pert_id].push_back(static_cast<int>(i));
      if (d.is_holdout(i)) holdout_wells[w.pert_id].push_back(static_cast<int>(i));
    }
  }
  auto median_of = [&](const std::vector<int>& idx) {
    Matrix rows(static_cast<Eigen::Index>(idx.size()), reps.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) rows.row(static_cast<Eigen::Index>(r)) = reps.row(idx[r]);
    return aggregate_well(rows);
  };
  std::vector<MoleculeRep> molecules;
  for (const auto& [id, wells] : all_wells) {
    const auto it = holdout_wells.find(id);
    const auto& use = it != holdout_wells.end() ? it->second : wells;
    molecules.push_back({id, d.labels.at(id).target_id, median_of(use)});
  }
  std::vector<DiscoveryResult> out;
  if (molecules.empty()) return out;
  for (const auto& [pert, wells] : crispr_wells) {
    if (static_cast<int>(wells.size()) < min_replicates) continue;
    const int gene = d.crispr_genes.at(pert);
    DiscoveryResult r;
    r.pert_id = pert;
    r.gene_id = gene;
    r.curve = discovery_curve(median_of(wells), molecules, gene, metric);
    if (r.curve.n_matches == 0) continue;
    r.auc = discovery_auc(r.curve);
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double var_of(std::span<const double> v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0) || !(b > 0)) throw InputError("incomplete_beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double df) {
  if (!(df > 0)) throw InputError("student_t_two_sided needs df > 0");
  if (!std::isfinite(t)) return 0.0;
  return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw InputError("welch_t_test needs at least 2 values per sample");
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = var_of(a, ma), vb = var_of(b, mb);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  WelchResult r;
  if (va == 0.0 && vb == 0.0) {
    if (ma != mb) throw InputError("welch_t_test: both samples are constant with different means");
    r.t = 0.0;
    r.df = na + nb - 2.0;
    r.p_two_sided = 1.0;
    return r;
  }
  const double sa = va / na, sb = vb / nb;
  r.t = (ma - mb) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  r.p_two_sided = student_t_two_sided(r.t, r.df);
  return r;
}

Embedding2D embed_2d(const Matrix& reps) {
  if (reps.rows() < 3) throw InputError("embed_2d needs at least 3 rows");
  if (reps.cols() < 1) throw DimensionError("embed_2d needs at least one feature");
  const Matrix centered = reps.rowwise() - reps.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(reps.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  const Vector evals = es.eigenvalues().reverse();
  const Matrix evecs = es.eigenvectors().rowwise().reverse();
  const double total = evals.sum();
  const double tol = std::max(evals(0), 1.0) * 1e-12 * static_cast<double>(reps.cols());
  Embedding2D out;
  out.coords = Matrix::Zero(reps.rows(), 2);
  out.explained_ratio = Vector::Zero(2);
  const int rank = static_cast<int>((evals.array() > tol).count());
  const int use = std::min(rank, 2);
  out.degenerate = rank < 2;
  for (int k = 0; k < use; ++k) {
    Vector c = evecs.col(k);
    Eigen::Index arg;
    c.cwiseAbs().maxCoeff(&arg);
    if (c(arg) < 0) c = -c;
    out.coords.col(k) = centered * c;
    out.explained_ratio(k) = total > 0 ? evals(k) / total : 0.0;
  }
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("spearman needs two equal-length samples of size >= 2");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double mx = mean_of(rx), my = mean_of(ry);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace pheno
