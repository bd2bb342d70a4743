#pragma once

#include "pheno/train_protocols.hpp"
#include "pheno/zoo_runner.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pheno {

struct FrontierPoint {
  double x = 0.0;
  double y = 0.0;
  std::string provenance;  // fingerprint(s) of the record(s) behind y
};

enum class XAxis { ood_count, ood_wells };

struct FrontierOptions {
  std::string metric = "topk";
  Objective objective = Objective::maximize;
  XAxis x_axis = XAxis::ood_count;
  /// Take the median over seeds of otherwise identical configs before
  /// maximizing over the remaining axes.
  bool median_over_seeds = true;
  /// Drop trailing points that fall below (above, when minimizing) the
  /// running best.
  bool truncate_overfit = true;
};

/// Keeps done records of one supervision regime and task.
std::vector<RunRecord> select_records(const std::vector<RunRecord>& records, Supervision supervision, Task task);

/// Per distinct x, the best metric over every other axis, sorted by x.
std::vector<FrontierPoint> frontier(const std::vector<RunRecord>& records, const FrontierOptions& opts = {});

struct ScalingFit {
  double slope = 0.0;      // y units per x unit
  double intercept = 0.0;
  double r_squared = 0.0;
  int n_points = 0;
  std::string group_key;
  std::string x_units = "molecules";
  std::string y_units;
};

/// Ordinary least squares. Throws RangeError with fewer than 2 distinct x.
ScalingFit fit_linear(const std::vector<FrontierPoint>& points, std::string y_units = {}, std::string group_key = {});

struct Extrapolation {
  double molecules = 0.0;
  double wells = 0.0;
  int replicates = 5;
};

/// Additional x needed to move the metric from current to target along the
/// fit. Throws RangeError when the slope points away from the target.
Extrapolation extrapolate(const ScalingFit& fit, double current, double target, int replicates = 5);

struct ReplicateEffect {
  std::vector<std::pair<double, ScalingFit>> fits;  // ascending replicate fraction
  std::vector<double> skipped;                      // fractions with < 2 frontier points
  std::optional<bool> slopes_nondecreasing;         // undefined for a single fit
};

ReplicateEffect replicate_effect(const std::vector<RunRecord>& records, const FrontierOptions& opts = {},
                                 const std::string& y_units = {});

/// Converts fractions to percentage points.
std::vector<FrontierPoint> to_percent(std::vector<FrontierPoint> points);

}  // namespace pheno
