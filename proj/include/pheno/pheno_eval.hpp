#pragma once

#include "pheno/arena_synth.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace pheno {

/// Fraction of rows whose label is among the k largest logits. Equal logits
/// rank the lower class index first.
double topk_accuracy(const Matrix& logits, std::span<const int> labels, int k = 10);

/// Counts per class id.
std::map<int, double> label_histogram(std::span<const int> labels);

/// Summed frequency of the k most frequent classes: the top-k accuracy of
/// the best constant predictor.
double chance_topk(const std::map<int, double>& histogram, int k = 10);

/// Mean categorical cross entropy (no gradient).
double molecule_cce(const Matrix& logits, std::span<const int> labels);

enum class DistanceMetric { cosine, euclidean };

struct MoleculeRep {
  int id = 0;
  int target_id = 0;
  Vector rep;
};

struct DiscoveryCurve {
  std::vector<int> guesses;          // 1..M
  std::vector<int> cumulative_hits;  // nondecreasing
  int n_matches = 0;
  std::vector<int> ranked_ids;       // molecule ids in guess order
  int euclidean_fallbacks = 0;       // pairs with a zero-norm vector under cosine
};

/// Ranks molecules by ascending distance to the knockout representation
/// (ties by molecule id) and counts molecules hitting `gene_id`.
DiscoveryCurve discovery_curve(const Vector& crispr_rep, const std::vector<MoleculeRep>& molecules, int gene_id,
                               DistanceMetric metric = DistanceMetric::cosine);

/// Trapezoidal area under (guess / M, hits / n_matches) starting at the
/// origin. Throws InputError when n_matches is zero.
double discovery_auc(const DiscoveryCurve& curve);

struct DiscoveryResult {
  int pert_id = 0;
  int gene_id = 0;
  double auc = 0.0;
  DiscoveryCurve curve;
};

/// Zero-shot discovery over a dataset. `reps` holds one row per well of `d`.
/// Knockouts with at least `min_replicates` wells and at least one matching
/// arena compound are eligible. Representations are medians over the
/// knockout's wells and over each arena compound's holdout wells.
std::vector<DiscoveryResult> discovery_eval(const ArenaDataset& d, const Matrix& reps, int min_replicates = 5,
                                            DistanceMetric metric = DistanceMetric::cosine);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
};

/// Welch's unequal-variance t test. Two zero-variance samples with equal
/// means give t = 0, p = 1; otherwise zero variance is an InputError.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Two-sided tail probability of Student's t.
double student_t_two_sided(double t, double df);

struct Embedding2D {
  Matrix coords;             // n x 2
  Vector explained_ratio;    // per component
  bool degenerate = false;   // rank < 2, second axis is zero
};

/// Projection onto the top two principal components, sign-fixed so each
/// component's largest-magnitude loading is positive.
Embedding2D embed_2d(const Matrix& reps);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace pheno
