#include "pheno/scaling_laws.hpp"

#include "pheno/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

namespace pheno {

std::vector<RunRecord> select_records(const std::vector<RunRecord>& records, Supervision supervision, Task task) {
  std::vector<RunRecord> out;
  for (const auto& r : records)
    if (r.status == RunStatus::done && r.config.supervision == supervision && r.config.task == task) out.push_back(r);
  return out;
}

namespace {

bool better(double a, double b, Objective o) { return o == Objective::maximize ? a > b : a < b; }

double lower_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

struct Candidate {
  double x;
  double y;
  std::string provenance;
};

std::vector<Candidate> candidates(const std::vector<RunRecord>& records, const FrontierOptions& opts) {
  // key = config without seed
  using Key = std::tuple<int, int, int, int, double, int, double, double, double, double>;
  struct Group {
    double x = 0;
    std::vector<std::pair<std::string, double>> values;  // (fingerprint, metric)
  };
  std::map<Key, Group> groups;
  for (const auto& r : records) {
    if (r.status != RunStatus::done) continue;
    const auto it = r.metrics.find(opts.metric);
    if (it == r.metrics.end() || !std::isfinite(it->second)) continue;
    const auto& c = r.config;
    double x = c.ood_count;
    if (opts.x_axis == XAxis::ood_wells) {
      const auto w = r.metrics.find("ood_wells");
      if (w == r.metrics.end()) continue;
      x = w->second;
    }
    Key key{static_cast<int>(c.supervision), static_cast<int>(c.task), c.depth, c.width, c.replicate_fraction,
            c.ood_count, c.adversarial.well, c.adversarial.plate, c.adversarial.batch, c.adversarial.source};
    auto& g = groups[key];
    g.x = x;
    g.values.emplace_back(r.fingerprint, it->second);
  }
  std::vector<Candidate> out;
  for (auto& [key, g] : groups) {
    std::sort(g.values.begin(), g.values.end());
    if (opts.median_over_seeds) {
      std::vector<double> ys;
      std::string prov;
      for (const auto& [fp, y] : g.values) {
        ys.push_back(y);
        prov += (prov.empty() ? "" : "+") + fp;
      }
      out.push_back({g.x, lower_median(ys), prov});
    } else {
      for (const auto& [fp, y] : g.values) out.push_back({g.x, y, fp});
    }
  }
  return out;
}

}  // namespace

std::vector<FrontierPoint> frontier(const std::vector<RunRecord>& records, const FrontierOptions& opts) {
  std::map<double, FrontierPoint> best;
  for (const auto& c : candidates(records, opts)) {
    auto it = best.find(c.x);
    if (it == best.end()) {
      best.emplace(c.x, FrontierPoint{c.x, c.y, c.provenance});
    } else if (better(c.y, it->second.y, opts.objective) ||
               (c.y == it->second.y && c.provenance < it->second.provenance)) {
      it->second = {c.x, c.y, c.provenance};
    }
  }
  std::vector<FrontierPoint> out;
  for (auto& [x, p] : best) out.push_back(p);
  if (opts.truncate_overfit) {
    while (out.size() > 1) {
      double running = out.front().y;
      for (std::size_t i = 1; i + 1 < out.size(); ++i)
        if (better(out[i].y, running, opts.objective)) running = out[i].y;
      if (!better(running, out.back().y, opts.objective)) break;
      out.pop_back();
    }
  }
  return out;
}

ScalingFit fit_linear(const std::vector<FrontierPoint>& points, std::string y_units, std::string group_key) {
  std::set<double> xs;
  for (const auto& p : points) xs.insert(p.x);
  if (xs.size() < 2) throw RangeError("fit_linear needs at least 2 distinct x values");
  const double n = static_cast<double>(points.size());
  double mx = 0, my = 0;
  for (const auto& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& p : points) {
    sxx += (p.x - mx) * (p.x - mx);
    sxy += (p.x - mx) * (p.y - my);
    syy += (p.y - my) * (p.y - my);
  }
  ScalingFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0;
  for (const auto& p : points) {
    const double e = p.y - (f.intercept + f.slope * p.x);
    sse += e * e;
  }
  f.r_squared = syy > 0 ? 1.0 - sse / syy : 1.0;
  f.n_points = static_cast<int>(points.size());
  f.group_key = std::move(group_key);
  f.y_units = std::move(y_units);
  if (!std::isfinite(f.slope) || !std::isfinite(f.intercept)) throw RangeError("fit_linear produced non-finite coefficients");
  return f;
}

Extrapolation extrapolate(const ScalingFit& fit, double current, double target, int replicates) {
  if (replicates < 1) throw ConfigError("replicates must be >= 1");
  Extrapolation e;
  e.replicates = replicates;
  if (target == current) return e;
  const double molecules = (target - current) / fit.slope;
  if (!(molecules > 0) || !std::isfinite(molecules))
    throw RangeError("infeasible extrapolation: slope " + std::to_string(fit.slope) + " does not move " +
                     std::to_string(current) + " towards " + std::to_string(target));
  e.molecules = molecules;
  e.wells = molecules * replicates;
  return e;
}

ReplicateEffect replicate_effect(const std::vector<RunRecord>& records, const FrontierOptions& opts,
                                 const std::string& y_units) {
  std::map<double, std::vector<RunRecord>> by_fraction;
  for (const auto& r : records)
    if (r.status == RunStatus::done) by_fraction[r.config.replicate_fraction].push_back(r);
  ReplicateEffect out;
  for (const auto& [frac, recs] : by_fraction) {
    auto pts = frontier(recs, opts);
    if (y_units == "percent") pts = to_percent(std::move(pts));
    std::set<double> xs;
    for (const auto& p : pts) xs.insert(p.x);
    if (xs.size() < 2) {
      out.skipped.push_back(frac);
      continue;
    }
    out.fits.emplace_back(frac, fit_linear(pts, y_units, "replicate_fraction=" + std::to_string(frac)));
  }
  if (out.fits.size() >= 2) {
    bool ok = true;
    for (std::size_t i = 1; i < out.fits.size(); ++i) ok = ok && out.fits[i].second.slope >= out.fits[i - 1].second.slope;
    out.slopes_nondecreasing = ok;
  }
  return out;
}

std::vector<FrontierPoint> to_percent(std::vector<FrontierPoint> points) {
  for (auto& p : points) p.y *= 100.0;
  return points;
}

}  // namespace pheno
