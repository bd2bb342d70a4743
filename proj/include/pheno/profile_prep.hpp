#pragma once

#include "pheno/arena_synth.hpp"

#include <string>
#include <vector>

namespace pheno {

inline constexpr double kSpreadFloor = 1e-6;

/// Elementwise median over cells (rows). Even counts take the lower of the
/// two middle order statistics.
Vector aggregate_well(const Eigen::Ref<const Matrix>& cells);

/// Quantile by linear interpolation between order statistics (R type 7).
double quantile_type7(std::vector<double> values, double q);

/// Per plate and feature: (x - median) / max(IQR, eps), quantiles type 7.
/// Throws NormalizationError for plates holding fewer than 4 wells.
std::vector<WellRecord> normalize_plate(std::vector<WellRecord> wells, double eps = kSpreadFloor);

struct Whitener {
  Vector mean;
  Matrix components;  // d_in x d_out, orthonormal columns
  Vector scales;      // inverse square-root eigenvalues
  Vector eigenvalues;
  double eps = kSpreadFloor;
  std::string fingerprint;  // hash of the fitting well ids

  int d_in() const { return static_cast<int>(mean.size()); }
  int d_out() const { return static_cast<int>(scales.size()); }

  /// Rows of x are samples.
  Matrix transform(const Eigen::Ref<const Matrix>& x) const;
  Vector transform_one(const Eigen::Ref<const Vector>& x) const;
};

/// PCA whitening of the rows of x. Eigenvalues are floored at eps and each
/// component's largest-magnitude entry is made positive.
Whitener fit_whitener(const Eigen::Ref<const Matrix>& x, int d_out, double eps = kSpreadFloor,
                      std::string fingerprint = {});

/// Fits on the given wells of a dataset; refuses arena_holdout wells.
Whitener fit_whitener(const ArenaDataset& data, const std::vector<int>& train_wells, int d_out,
                      double eps = kSpreadFloor);

std::vector<WellRecord> apply_whitener(const Whitener& w, std::vector<WellRecord> wells);

std::string well_fingerprint(const std::vector<int>& well_ids);

/// Plate normalization over all wells followed by a whitener fit on the
/// train split and applied everywhere. Returns the whitener used.
Whitener preprocess_dataset(ArenaDataset& data, int d_out, double eps = kSpreadFloor);

/// The whitening step of preprocess_dataset alone, keeping plate effects.
Whitener whiten_dataset(ArenaDataset& data, int d_out, double eps = kSpreadFloor);

void save_whitener(const Whitener& w, const std::string& path);
Whitener load_whitener(const std::string& path);

}  // namespace pheno
