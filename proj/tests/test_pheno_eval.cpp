#include "pheno/errors.hpp"
#include "pheno/nn/losses.hpp"
#include "pheno/pheno_eval.hpp"
#include "pheno/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace pheno;

namespace {

Matrix random_logits(Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
  Rng r(seed, "test/logits");
  Matrix m(n, k);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = r.normal();
  return m;
}

// Best constant predictor by exhaustive search over k-subsets of classes.
double brute_force_chance(const std::vector<int>& labels, int n_classes, int k) {
  std::vector<int> pick(n_classes, 0);
  std::fill(pick.end() - k, pick.end(), 1);
  double best = 0.0;
  do {
    int hits = 0;
    for (int y : labels) hits += pick[y];
    best = std::max(best, static_cast<double>(hits) / labels.size());
  } while (std::next_permutation(pick.begin(), pick.end()));
  return best;
}

std::vector<MoleculeRep> line_molecules(const std::vector<int>& targets) {
  std::vector<MoleculeRep> out;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    Vector v(1);
    v(0) = static_cast<double>(i + 1);
    out.push_back({static_cast<int>(i), targets[i], v});
  }
  return out;
}

DiscoveryCurve ranked(int m, const std::vector<int>& match_ranks) {
  std::vector<int> targets(m, 0);
  for (int r : match_ranks) targets[r - 1] = 1;
  Vector probe(1);
  probe(0) = 0.0;
  return discovery_curve(probe, line_molecules(targets), 1, DistanceMetric::euclidean);
}

}  // namespace

TEST_CASE("topk_accuracy counts the k-th rank and rejects rank k+1") {
  Matrix logits(1, 5);
  logits << 5, 4, 3, 2, 1;
  const int at_k[] = {2};
  const int past_k[] = {3};
  CHECK(topk_accuracy(logits, at_k, 3) == 1.0);
  CHECK(topk_accuracy(logits, past_k, 3) == 0.0);
}

TEST_CASE("topk_accuracy breaks ties toward the lower class index") {
  Matrix logits = Matrix::Zero(1, 4);
  const int first[] = {0};
  const int last[] = {3};
  CHECK(topk_accuracy(logits, first, 1) == 1.0);
  CHECK(topk_accuracy(logits, last, 1) == 0.0);
  CHECK(topk_accuracy(logits, last, 4) == 1.0);
}

TEST_CASE("topk_accuracy with k = K is 1 for any logits") {
  const Matrix logits = random_logits(50, 7, 1);
  std::vector<int> labels(50);
  for (int i = 0; i < 50; ++i) labels[i] = i % 7;
  CHECK(topk_accuracy(logits, labels, 7) == 1.0);
}

TEST_CASE("topk_accuracy rejects bad k and labels") {
  const Matrix logits = random_logits(2, 3, 2);
  const int ok[] = {0, 1};
  const int bad[] = {0, 3};
  CHECK_THROWS_AS(topk_accuracy(logits, ok, 4), InputError);
  CHECK_THROWS_AS(topk_accuracy(logits, ok, 0), InputError);
  CHECK_THROWS_AS(topk_accuracy(logits, bad, 1), InputError);
}

TEST_CASE("topk_accuracy of random logits matches the binomial expectation") {
  const int n = 100000, k_classes = 1282;
  Rng r(3, "test/binomial");
  std::vector<int> labels(n);
  for (int& y : labels) y = static_cast<int>(r.below(k_classes));
  // Row-by-row to keep memory modest: 1e5 x 1282 doubles is ~1 GB.
  int hits = 0;
  const int chunk = 5000;
  for (int start = 0; start < n; start += chunk) {
    const Matrix logits = random_logits(chunk, k_classes, 100 + start);
    hits += static_cast<int>(std::lround(
        topk_accuracy(logits, std::span<const int>(labels).subspan(start, chunk), 10) * chunk));
  }
  const double p = 10.0 / k_classes;
  const double sigma = std::sqrt(p * (1 - p) / n);
  CHECK(std::abs(static_cast<double>(hits) / n - p) < 3 * sigma);
}

TEST_CASE("chance_topk of a uniform histogram") {
  std::map<int, double> h;
  for (int c = 0; c < 100; ++c) h[c] = 7.0;
  CHECK(chance_topk(h, 10) == doctest::Approx(0.10).epsilon(1e-15));
}

TEST_CASE("chance_topk with a majority class is at least its mass") {
  const std::map<int, double> h{{0, 50}, {1, 20}, {2, 20}, {3, 10}};
  for (int k = 1; k <= 4; ++k) CHECK(chance_topk(h, k) >= 0.5);
  CHECK(chance_topk(h, 1) == 0.5);
}

TEST_CASE("chance_topk matches the exhaustive constant-predictor oracle") {
  UniverseConfig uc;
  uc.n_targets = 7;
  uc.n_moas = 14;
  uc.n_compounds = 60;
  SplitPlan plan;
  plan.n_arena_compounds = 40;
  const ArenaDataset d = assemble_dataset(generate_universe(uc, 11), plan, 11);
  std::vector<int> labels;
  for (const auto& w : d.wells)
    if (w.pert_type == PertType::compound && d.is_arena_compound(w.pert_id)) labels.push_back(d.labels.at(w.pert_id).moa_id);
  for (int k : {1, 3, 10}) CHECK(chance_topk(label_histogram(labels), k) == doctest::Approx(brute_force_chance(labels, 14, k)));
}

TEST_CASE("chance_topk is invariant to histogram scaling") {
  const std::map<int, double> h{{0, 3}, {1, 9}, {2, 1}, {5, 4}, {7, 4}};
  std::map<int, double> scaled;
  for (auto [c, v] : h) scaled[c] = v * 37.5;
  for (int k = 1; k <= 5; ++k) CHECK(chance_topk(h, k) == doctest::Approx(chance_topk(scaled, k)).epsilon(1e-15));
}

TEST_CASE("molecule_cce of uniform logits is ln K") {
  for (int k : {2, 10, 1282, 2919, 10000}) {
    const Matrix logits = Matrix::Constant(3, k, 0.25);
    const int labels[] = {0, k / 2, k - 1};
    CHECK(std::abs(molecule_cce(logits, labels) - std::log(static_cast<double>(k))) < 1e-12);
  }
  const Matrix chance = Matrix::Zero(1, 2919);
  const int y[] = {17};
  const double cce = molecule_cce(chance, y);
  CHECK(cce >= 7.97);
  CHECK(cce <= 7.99);
}

TEST_CASE("molecule_cce of confident correct logits vanishes") {
  Matrix logits = Matrix::Zero(3, 4);
  const int labels[] = {0, 2, 3};
  for (int i = 0; i < 3; ++i) logits(i, labels[i]) = 30.0;
  CHECK(molecule_cce(logits, labels) < 1e-9);
}

TEST_CASE("molecule_cce equals the training loss bitwise") {
  const Matrix logits = random_logits(20, 6, 4);
  std::vector<int> labels(20);
  for (int i = 0; i < 20; ++i) labels[i] = (i * 5) % 6;
  CHECK(molecule_cce(logits, labels) == nn::softmax_cross_entropy<double>(logits, labels).loss);
}

TEST_CASE("discovery_curve on a hand enumerated ranking") {
  const DiscoveryCurve c = ranked(3, {1, 3});
  CHECK(c.cumulative_hits == std::vector<int>{1, 1, 2});
  CHECK(c.guesses == std::vector<int>{1, 2, 3});
  CHECK(c.n_matches == 2);
}

TEST_CASE("discovery_curve with all matches closest") {
  const DiscoveryCurve c = ranked(6, {1, 2, 3});
  CHECK(c.cumulative_hits == std::vector<int>{1, 2, 3, 3, 3, 3});
}

TEST_CASE("discovery_curve breaks distance ties by molecule id") {
  std::vector<MoleculeRep> mols;
  for (int id : {4, 1, 3, 0, 2}) mols.push_back({id, id == 3 ? 9 : 0, Vector::Ones(2)});
  const DiscoveryCurve c = discovery_curve(Vector::Ones(2), mols, 9);
  CHECK(c.ranked_ids == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(c.cumulative_hits == std::vector<int>{0, 0, 0, 1, 1});
}

TEST_CASE("discovery_curve falls back to Euclidean for zero vectors") {
  std::vector<MoleculeRep> mols{{0, 1, Vector::Zero(2)}, {1, 0, Vector::Ones(2)}};
  const DiscoveryCurve c = discovery_curve(Vector::Ones(2), mols, 1);
  CHECK(c.euclidean_fallbacks == 1);
}

TEST_CASE("discovery_auc bounds for perfect and worst rankings") {
  const double perfect = discovery_auc(ranked(100, {1, 2}));
  const double worst = discovery_auc(ranked(100, {99, 100}));
  CHECK(perfect >= 0.98);
  CHECK(worst <= 0.02);
  CHECK(perfect + worst == doctest::Approx(1.0).epsilon(1.0 / 100));
  CHECK_THROWS_AS(discovery_auc(ranked(5, {})), InputError);
}

TEST_CASE("discovery_auc of random rankings averages one half") {
  Rng r(5, "test/random-ranking");
  double total = 0.0;
  const int trials = 1000, m = 50;
  for (int t = 0; t < trials; ++t) {
    std::vector<int> ranks(m);
    std::iota(ranks.begin(), ranks.end(), 1);
    r.shuffle(ranks);
    ranks.resize(3);
    total += discovery_auc(ranked(m, ranks));
  }
  const double mean = total / trials;
  CHECK(mean >= 0.45);
  CHECK(mean <= 0.55);
}

TEST_CASE("discovery_eval respects the replicate threshold") {
  UniverseConfig uc;
  uc.n_targets = 4;
  uc.n_moas = 4;
  uc.n_compounds = 30;
  SplitPlan plan;
  plan.n_arena_compounds = 20;
  const ArenaDataset d = assemble_dataset(generate_universe(uc, 6), plan, 6);
  Matrix reps(static_cast<Eigen::Index>(d.size()), d.d_feat);
  for (std::size_t i = 0; i < d.size(); ++i) reps.row(static_cast<Eigen::Index>(i)) = d.wells[i].features.transpose();
  const auto results = discovery_eval(d, reps, plan.crispr_replicates);
  CHECK(!results.empty());
  for (const auto& r : results) {
    CHECK(r.auc >= 0.0);
    CHECK(r.auc <= 1.0);
    CHECK(r.curve.n_matches > 0);
  }
  CHECK(discovery_eval(d, reps, plan.crispr_replicates + 1).empty());
}

TEST_CASE("welch_t_test on the equal-variance worked example") {
  const double a[] = {1, 2, 3, 4, 5};
  const double b[] = {3, 4, 5, 6, 7};
  const WelchResult w = welch_t_test(a, b);
  CHECK(w.t == doctest::Approx(-2.0).epsilon(1e-14));
  CHECK(w.df == doctest::Approx(8.0).epsilon(1e-14));
  CHECK(w.p_two_sided == doctest::Approx(0.08051623795726257).epsilon(1e-10));
}

TEST_CASE("welch_t_test on unequal samples matches a reference implementation") {
  const double a[] = {2.1, 3.4, 1.9, 5.6, 4.4, 3.3};
  const double b[] = {6.2, 5.1, 7.7, 6.6, 5.9, 8.1, 7.2};
  const WelchResult w = welch_t_test(a, b);
  CHECK(w.t == doctest::Approx(-4.6480896799950004).epsilon(1e-12));
  CHECK(w.df == doctest::Approx(9.233142048427727).epsilon(1e-12));
  CHECK(w.p_two_sided == doctest::Approx(0.0011260394716661628).epsilon(1e-9));
}

TEST_CASE("welch_t_test symmetry, shift invariance and degenerate input") {
  const double a[] = {0.3, 1.7, 2.2, 0.9};
  const double b[] = {1.1, 2.5, 3.9, 2.0, 2.8};
  const WelchResult ab = welch_t_test(a, b), ba = welch_t_test(b, a);
  CHECK(ab.t == doctest::Approx(-ba.t));
  CHECK(ab.p_two_sided == doctest::Approx(ba.p_two_sided));
  double as[4], bs[5];
  for (int i = 0; i < 4; ++i) as[i] = a[i] + 1000.0;
  for (int i = 0; i < 5; ++i) bs[i] = b[i] + 1000.0;
  const WelchResult shifted = welch_t_test(as, bs);
  CHECK(shifted.t == doctest::Approx(ab.t).epsilon(1e-9));
  CHECK(shifted.p_two_sided == doctest::Approx(ab.p_two_sided).epsilon(1e-9));

  const double same[] = {2, 2, 2};
  const double other[] = {3, 3, 3};
  const double one[] = {1};
  const WelchResult eq = welch_t_test(same, same);
  CHECK(eq.t == 0.0);
  CHECK(eq.p_two_sided == 1.0);
  CHECK_THROWS_AS(welch_t_test(same, other), InputError);
  CHECK_THROWS_AS(welch_t_test(one, a), InputError);
}

TEST_CASE("incomplete_beta and the t tail match reference values") {
  CHECK(incomplete_beta(2.5, 3.5, 0.3) == doctest::Approx(0.29675298929566646).epsilon(1e-12));
  CHECK(incomplete_beta(0.5, 0.5, 0.9) == doctest::Approx(0.7951672353008665).epsilon(1e-12));
  CHECK(incomplete_beta(10, 20, 0.4) == doctest::Approx(0.7853183897628262).epsilon(1e-12));
  CHECK(incomplete_beta(3, 4, 0.0) == 0.0);
  CHECK(incomplete_beta(3, 4, 1.0) == 1.0);
  CHECK(student_t_two_sided(2.5, 7.3) == doctest::Approx(0.039650234665600415).epsilon(1e-10));
  CHECK(student_t_two_sided(0.0, 5.0) == doctest::Approx(1.0));
}

TEST_CASE("embed_2d reconstructs planar data exactly") {
  Rng r(7, "test/plane");
  const int n = 40, d = 12;
  Matrix basis(2, d);
  for (Eigen::Index i = 0; i < basis.size(); ++i) basis(i) = r.normal();
  Matrix coeff(n, 2);
  for (Eigen::Index i = 0; i < coeff.size(); ++i) coeff(i) = r.normal();
  const Matrix x = coeff * basis;
  const Embedding2D e = embed_2d(x);
  CHECK(!e.degenerate);
  CHECK(e.explained_ratio.head(2).sum() == doctest::Approx(1.0).epsilon(1e-12));
  // Projections onto an orthonormal basis of the data's plane preserve pairwise geometry.
  const Matrix centered = x.rowwise() - x.colwise().mean();
  const Matrix gram_x = centered * centered.transpose();
  const Matrix gram_e = e.coords * e.coords.transpose();
  CHECK((gram_x - gram_e).cwiseAbs().maxCoeff() < 1e-9 * gram_x.cwiseAbs().maxCoeff());
}

TEST_CASE("embed_2d of isotropic noise explains about 2/d") {
  const int n = 20000, d = 10;
  const Matrix x = random_logits(n, d, 8);
  const Embedding2D e = embed_2d(x);
  CHECK(e.explained_ratio.head(2).sum() == doctest::Approx(2.0 / d).epsilon(0.1));
  const Embedding2D again = embed_2d(x);
  CHECK(e.coords == again.coords);
}

TEST_CASE("embed_2d flags rank-one input and rejects tiny input") {
  Matrix x(5, 3);
  for (int i = 0; i < 5; ++i) x.row(i) = static_cast<double>(i) * Eigen::RowVector3d(1, 2, 3);
  const Embedding2D e = embed_2d(x);
  CHECK(e.degenerate);
  CHECK(e.coords.col(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(embed_2d(Matrix::Ones(2, 3)), InputError);
}

TEST_CASE("spearman uses average ranks") {
  const double x[] = {1, 2, 2, 3, 5};
  const double y[] = {2, 1, 4, 4, 9};
  CHECK(spearman(x, y) == doctest::Approx(0.7631578947368421).epsilon(1e-12));
  const double up[] = {1, 2, 3, 4};
  const double down[] = {8, 6, 4, 2};
  CHECK(spearman(up, up) == doctest::Approx(1.0));
  CHECK(spearman(up, down) == doctest::Approx(-1.0));
}
