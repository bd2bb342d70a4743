#include "pheno/profile_prep.hpp"

#include "pheno/errors.hpp"
#include "pheno/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace pheno {

Vector aggregate_well(const Eigen::Ref<const Matrix>& cells) {
  if (cells.rows() == 0 || cells.cols() == 0) throw InputError("aggregate_well: empty cell matrix");
  const Eigen::Index n = cells.rows();
  const Eigen::Index mid = (n - 1) / 2;
  Vector out(cells.cols());
  std::vector<double> col(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < cells.cols(); ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = cells(i, j);
      if (!std::isfinite(v)) throw InputError("aggregate_well: non-finite cell value");
      col[static_cast<std::size_t>(i)] = v;
    }
    std::nth_element(col.begin(), col.begin() + mid, col.end());
    out(j) = col[static_cast<std::size_t>(mid)];
  }
  return out;
}

double quantile_type7(std::vector<double> values, double q) {
  if (values.empty()) throw InputError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<WellRecord> normalize_plate(std::vector<WellRecord> wells, double eps) {
  std::map<int, std::vector<std::size_t>> by_plate;
  for (std::size_t i = 0; i < wells.size(); ++i) by_plate[wells[i].plate].push_back(i);

  for (const auto& [plate, idx] : by_plate) {
    if (idx.size() < 4) {
      throw NormalizationError("plate " + std::to_string(plate) + " has " +
                                   std::to_string(idx.size()) + " wells; normalization needs >= 4",
                               plate);
    }
    const Eigen::Index d = wells[idx.front()].features.size();
    std::vector<double> col(idx.size());
    for (Eigen::Index j = 0; j < d; ++j) {
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto& f = wells[idx[k]].features;
        if (f.size() != d) throw InputError("normalize_plate: ragged feature vectors on plate " + std::to_string(plate));
        col[k] = f(j);
      }
      const double med = quantile_type7(col, 0.5);
      const double iqr = quantile_type7(col, 0.75) - quantile_type7(col, 0.25);
      const double spread = std::max(iqr, eps);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        auto& v = wells[idx[k]].features(j);
        v = (v - med) / spread;
      }
    }
  }
  return wells;
}

Matrix Whitener::transform(const Eigen::Ref<const Matrix>& x) const {
  if (x.cols() != d_in()) {
    throw InputError("whitener expects " + std::to_string(d_in()) + " features, got " +
                     std::to_string(x.cols()));
  }
  return ((x.rowwise() - mean.transpose()) * components) * scales.asDiagonal();
}

Vector Whitener::transform_one(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != d_in()) {
    throw InputError("whitener expects " + std::to_string(d_in()) + " features, got " +
                     std::to_string(x.size()));
  }
  return scales.asDiagonal() * (components.transpose() * (x - mean));
}

Whitener fit_whitener(const Eigen::Ref<const Matrix>& x, int d_out, double eps, std::string fingerprint) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (d_out < 1 || d_out > d) {
    throw DimensionError("d_out=" + std::to_string(d_out) + " must lie in [1, " + std::to_string(d) + "]");
  }
  if (n <= d_out) {
    throw DimensionError("whitening needs more samples (" + std::to_string(n) + ") than d_out (" +
                         std::to_string(d_out) + ")");
  }
  if (!x.allFinite()) throw InputError("fit_whitener: non-finite training features");

  Whitener w;
  w.eps = eps;
  w.fingerprint = std::move(fingerprint);
  w.mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - w.mean.transpose();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success) throw DimensionError("covariance eigendecomposition failed");
  const Vector& evals = es.eigenvalues();  // ascending
  const double top = std::max(evals(d - 1), 0.0);
  const double tol = std::max(top, 1.0) * 1e-12 * static_cast<double>(d);
  int rank = 0;
  for (Eigen::Index i = 0; i < d; ++i) rank += evals(i) > tol ? 1 : 0;
  if (d_out > rank) {
    throw DimensionError("d_out=" + std::to_string(d_out) + " exceeds covariance rank " + std::to_string(rank));
  }

  w.components.resize(d, d_out);
  w.scales.resize(d_out);
  w.eigenvalues.resize(d_out);
  for (int k = 0; k < d_out; ++k) {
    Vector c = es.eigenvectors().col(d - 1 - k);
    Eigen::Index arg = 0;
    c.cwiseAbs().maxCoeff(&arg);
    if (c(arg) < 0) c = -c;
    w.components.col(k) = c;
    const double lambda = std::max(evals(d - 1 - k), eps);
    w.eigenvalues(k) = lambda;
    w.scales(k) = 1.0 / std::sqrt(lambda);
  }
  return w;
}

std::string well_fingerprint(const std::vector<int>& well_ids) {
  std::vector<int> ids = well_ids;
  std::sort(ids.begin(), ids.end());
  std::uint64_t h = fnv1a("wells");
  for (int id : ids) h = hash_combine(h, static_cast<std::uint64_t>(id));
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

Whitener fit_whitener(const ArenaDataset& data, const std::vector<int>& train_wells, int d_out, double eps) {
  std::vector<int> ids;
  ids.reserve(train_wells.size());
  for (int i : train_wells) {
    if (data.is_holdout(static_cast<std::size_t>(i))) {
      throw InputError("fit_whitener: well " + std::to_string(data.wells[i].well_id) +
                       " belongs to the arena holdout");
    }
    ids.push_back(data.wells[i].well_id);
  }
  return fit_whitener(data.features(train_wells), d_out, eps, well_fingerprint(ids));
}

std::vector<WellRecord> apply_whitener(const Whitener& w, std::vector<WellRecord> wells) {
  for (auto& well : wells) well.features = w.transform_one(well.features);
  return wells;
}

Whitener preprocess_dataset(ArenaDataset& data, int d_out, double eps) {
  data.wells = normalize_plate(std::move(data.wells), eps);
  return whiten_dataset(data, d_out, eps);
}

Whitener whiten_dataset(ArenaDataset& data, int d_out, double eps) {
  std::vector<int> train;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.is_holdout(i)) train.push_back(static_cast<int>(i));
  }
  Whitener w = fit_whitener(data, train, d_out, eps);
  data.wells = apply_whitener(w, std::move(data.wells));
  data.d_feat = w.d_out();
  return w;
}

namespace {

nlohmann::json to_array(const Vector& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

Vector vector_from(const nlohmann::json& j) {
  const auto vals = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace

void save_whitener(const Whitener& w, const std::string& path) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "whitener";
  j["d_in"] = w.d_in();
  j["d_out"] = w.d_out();
  j["mean"] = to_array(w.mean);
  std::vector<double> comps;
  comps.reserve(static_cast<std::size_t>(w.components.size()));
  for (Eigen::Index r = 0; r < w.components.rows(); ++r)
    for (Eigen::Index c = 0; c < w.components.cols(); ++c) comps.push_back(w.components(r, c));
  j["components_row_major"] = comps;
  j["scales"] = to_array(w.scales);
  j["eigenvalues"] = to_array(w.eigenvalues);
  j["eps"] = w.eps;
  j["fingerprint"] = w.fingerprint;
  std::ofstream out(path);
  if (!out) throw InputError("cannot write whitener file " + path);
  out << j.dump(1) << '\n';
}

Whitener load_whitener(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read whitener file " + path);
  nlohmann::json j;
  try {
    in >> j;
    if (j.at("kind") != "whitener" || j.at("schema_version") != 1) {
      throw InputError(path + ": not a version-1 whitener file");
    }
    Whitener w;
    const int d_in = j.at("d_in");
    const int d_out = j.at("d_out");
    w.mean = vector_from(j.at("mean"));
    w.scales = vector_from(j.at("scales"));
    w.eigenvalues = vector_from(j.at("eigenvalues"));
    const auto comps = j.at("components_row_major").get<std::vector<double>>();
    if (w.mean.size() != d_in || w.scales.size() != d_out ||
        comps.size() != static_cast<std::size_t>(d_in) * static_cast<std::size_t>(d_out)) {
      throw InputError(path + ": inconsistent whitener dimensions");
    }
    w.components.resize(d_in, d_out);
    for (int r = 0; r < d_in; ++r)
      for (int c = 0; c < d_out; ++c) w.components(r, c) = comps[static_cast<std::size_t>(r * d_out + c)];
    w.eps = j.at("eps");
    w.fingerprint = j.at("fingerprint");
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

}  // namespace pheno
