#include "pheno/report.hpp"

#include "pheno/errors.hpp"
#include "pheno/pheno_eval.hpp"
#include "pheno/rng.hpp"
#include "pheno/scaling_laws.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace pheno {

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

}  // namespace

std::string render_table(const Table& t) {
  std::ostringstream out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "\t" : "") << t.columns[i];
  out << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "\t" : "") << row[i];
    out << "\n";
  }
  return out.str();
}

std::string render_svg(const Plot& p) {
  constexpr double W = 640, H = 420, left = 70, right = 160, top = 40, bottom = 55;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto& s : p.series)
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (first) {
        x0 = x1 = x;
        y0 = y1 = y;
        first = false;
      }
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pw = W - left - right, ph = H - top - bottom;
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << " " << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(p.title)
    << "</text>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    o << "<line x1=\"" << sx(xv) << "\" y1=\"" << top + ph << "\" x2=\"" << sx(xv) << "\" y2=\"" << top + ph + 5
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << sx(xv) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
    o << "<line x1=\"" << left - 5 << "\" y1=\"" << sy(yv) << "\" x2=\"" << left << "\" y2=\"" << sy(yv)
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << left - 8 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
  }
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xml_escape(p.x_label)
    << "</text>\n";
  o << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << xml_escape(p.y_label) << "</text>\n";
  for (std::size_t si = 0; si < p.series.size(); ++si) {
    const auto& s = p.series[si];
    const char* color = kPalette[si % std::size(kPalette)];
    if (!p.scatter && s.points.size() > 1) {
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (const auto& [x, y] : s.points) o << sx(x) << "," << sy(y) << " ";
      o << "\"/>\n";
    }
    for (const auto& [x, y] : s.points)
      o << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    const double ly = top + 14 + 16 * static_cast<double>(si);
    o << "<rect x=\"" << W - right + 12 << "\" y=\"" << ly - 9 << "\" width=\"10\" height=\"10\" fill=\"" << color
      << "\"/>\n";
    o << "<text x=\"" << W - right + 28 << "\" y=\"" << ly << "\">" << xml_escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string provenance_id(std::vector<std::string> fingerprints) {
  std::sort(fingerprints.begin(), fingerprints.end());
  std::uint64_t h = fnv1a("provenance");
  for (const auto& f : fingerprints) h = hash_combine(h, fnv1a(f));
  char buf[24];
  std::snprintf(buf, sizeof buf, "set:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

struct TaskMetric {
  std::string name;
  Objective objective;
  std::string units;
};

TaskMetric metric_for(Task t) {
  if (t == Task::discovery) return {"auc", Objective::maximize, "auc"};
  if (t == Task::molecule) return {"cce", Objective::minimize, "nats"};
  return {"topk", Objective::maximize, "percent"};
}

std::vector<std::string> split_provenance(const std::string& p) {
  std::vector<std::string> out;
  std::stringstream ss(p);
  std::string item;
  while (std::getline(ss, item, '+')) out.push_back(item);
  return out;
}

}  // namespace

ReportBundle build_report(const std::vector<RunRecord>& input, const ArenaDataset* dataset) {
  std::vector<RunRecord> records = input;
  std::sort(records.begin(), records.end(),
            [](const RunRecord& a, const RunRecord& b) { return a.fingerprint < b.fingerprint; });
  ReportBundle b;
  b.metadata["tool_version"] = kToolVersion;
  b.metadata["n_records"] = std::to_string(records.size());
  if (records.empty()) b.warnings.push_back("run store is empty");

  auto cite = [&b](const std::vector<std::string>& fps) {
    const std::string id = provenance_id(fps);
    auto sorted = fps;
    std::sort(sorted.begin(), sorted.end());
    b.provenance[id] = sorted;
    return id;
  };

  Table runs{"runs", {"fingerprint", "supervision", "task", "depth", "width", "ood_count", "replicate_fraction", "seed",
                      "status", "metric", "value", "chance"}, {}};
  std::set<std::uint64_t> seeds;
  for (const auto& r : records) {
    const auto m = metric_for(r.config.task);
    const auto it = r.metrics.find(m.name);
    const auto ch = r.metrics.find("chance");
    runs.rows.push_back({r.fingerprint, to_string(r.config.supervision), to_string(r.config.task),
                         std::to_string(r.config.depth), std::to_string(r.config.width),
                         std::to_string(r.config.ood_count), num(r.config.replicate_fraction),
                         std::to_string(r.config.seed), to_string(r.status), m.name,
                         it == r.metrics.end() ? "" : num(it->second), ch == r.metrics.end() ? "" : num(ch->second)});
    cite({r.fingerprint});
    seeds.insert(r.config.seed);
  }
  std::string seed_list;
  for (auto s : seeds) seed_list += (seed_list.empty() ? "" : ",") + std::to_string(s);
  b.metadata["seeds"] = seed_list;
  b.tables.push_back(std::move(runs));

  Table frontiers{"frontiers", {"supervision", "task", "ood_count", "value", "provenance"}, {}};
  Table bests{"bests", {"supervision", "task", "metric", "value", "depth", "width", "provenance"}, {}};
  Table chance{"chance", {"task", "chance_topk", "provenance"}, {}};
  Table ttests{"ttests", {"task", "metric", "n_ibp", "n_task", "t", "df", "p_two_sided", "provenance"}, {}};
  Table fits{"scaling", {"supervision", "task", "slope", "intercept", "r_squared", "n_points", "x_units", "y_units",
                         "provenance"}, {}};

  for (Task task : {Task::moa, Task::target, Task::molecule, Task::discovery}) {
    const auto m = metric_for(task);
    Plot plot{std::string("Scaling: ") + to_string(task), "OOD molecules", m.name + " (" + m.units + ")", {}, false};
    std::map<Supervision, std::vector<double>> values;
    std::map<Supervision, std::vector<std::string>> value_fps;
    std::vector<std::string> chance_fps;
    std::vector<double> chances;
    for (Supervision sup : {Supervision::ibp, Supervision::task}) {
      const auto sel = select_records(records, sup, task);
      if (sel.empty()) continue;
      for (const auto& r : sel) {
        const auto it = r.metrics.find(m.name);
        if (it != r.metrics.end() && std::isfinite(it->second)) {
          values[sup].push_back(it->second);
          value_fps[sup].push_back(r.fingerprint);
        }
        const auto ch = r.metrics.find("chance");
        if (ch != r.metrics.end()) {
          chances.push_back(ch->second);
          chance_fps.push_back(r.fingerprint);
        }
      }
      FrontierOptions fo;
      fo.metric = m.name;
      fo.objective = m.objective;
      fo.truncate_overfit = false;
      auto pts = frontier(sel, fo);
      if (m.units == "percent") pts = to_percent(std::move(pts));
      Series s{to_string(sup), {}};
      for (const auto& p : pts) {
        frontiers.rows.push_back({to_string(sup), to_string(task), num(p.x), num(p.y), cite(split_provenance(p.provenance))});
        s.points.emplace_back(p.x, p.y);
      }
      plot.series.push_back(std::move(s));

      fo.truncate_overfit = true;
      auto fit_pts = frontier(sel, fo);
      if (m.units == "percent") fit_pts = to_percent(std::move(fit_pts));
      std::set<double> xs;
      std::vector<std::string> fit_fps;
      for (const auto& p : fit_pts) {
        xs.insert(p.x);
        for (auto& f : split_provenance(p.provenance)) fit_fps.push_back(f);
      }
      if (xs.size() >= 2) {
        const ScalingFit f = fit_linear(fit_pts, m.units, std::string(to_string(sup)) + "/" + to_string(task));
        fits.rows.push_back({to_string(sup), to_string(task), num(f.slope), num(f.intercept), num(f.r_squared),
                             std::to_string(f.n_points), f.x_units, f.y_units, cite(fit_fps)});
      }

      const RunRecord* best = nullptr;
      for (const auto& r : sel) {
        const auto it = r.metrics.find(m.name);
        if (it == r.metrics.end() || !std::isfinite(it->second)) continue;
        const double v = it->second;
        if (!best || (m.objective == Objective::maximize ? v > best->metrics.at(m.name) : v < best->metrics.at(m.name)))
          best = &r;
      }
      if (best)
        bests.rows.push_back({to_string(sup), to_string(task), m.name, num(best->metrics.at(m.name)),
                              std::to_string(best->config.depth), std::to_string(best->config.width),
                              cite({best->fingerprint})});
    }
    if (!chances.empty()) {
      std::sort(chances.begin(), chances.end());
      chance.rows.push_back({to_string(task), num(chances[(chances.size() - 1) / 2]), cite(chance_fps)});
    }
    if (values[Supervision::ibp].size() >= 2 && values[Supervision::task].size() >= 2) {
      try {
        const auto w = welch_t_test(values[Supervision::ibp], values[Supervision::task]);
        auto fps = value_fps[Supervision::ibp];
        fps.insert(fps.end(), value_fps[Supervision::task].begin(), value_fps[Supervision::task].end());
        ttests.rows.push_back({to_string(task), m.name, std::to_string(values[Supervision::ibp].size()),
                               std::to_string(values[Supervision::task].size()), num(w.t), num(w.df),
                               num(w.p_two_sided), cite(fps)});
      } catch (const InputError& e) {
        b.warnings.push_back(std::string("t-test for ") + to_string(task) + ": " + e.what());
      }
    }
    if (!plot.series.empty()) b.plots.emplace_back(std::string("scaling_") + to_string(task), std::move(plot));
  }

  // discovery: per-knockout AUC of the best discovery run against the raw baseline
  const auto disc = select_records(records, Supervision::ibp, Task::discovery);
  const RunRecord* best_disc = nullptr;
  for (const auto& r : disc)
    if (r.metrics.count("auc") && (!best_disc || r.metrics.at("auc") > best_disc->metrics.at("auc"))) best_disc = &r;
  if (best_disc) {
    Table dt{"discovery", {"pert_id", "auc", "auc_baseline", "provenance"}, {}};
    Plot dp{"Discovery AUC per knockout", "raw-feature AUC", "model AUC", {{"knockouts", {}}, {"diagonal", {{0, 0}, {1, 1}}}}, false};
    const std::string id = cite({best_disc->fingerprint});
    for (const auto& [k, v] : best_disc->metrics) {
      if (k.rfind("auc/", 0) != 0) continue;
      const std::string pert = k.substr(4);
      const double base = best_disc->metrics.at("auc_baseline/" + pert);
      dt.rows.push_back({pert, num(v), num(base), id});
      dp.series[0].points.emplace_back(base, v);
    }
    std::sort(dp.series[0].points.begin(), dp.series[0].points.end());
    b.tables.push_back(std::move(dt));
    b.plots.emplace_back("discovery", std::move(dp));
  }

  if (dataset) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < dataset->size(); ++i) {
      const auto& w = dataset->wells[i];
      if (w.pert_type == PertType::compound && dataset->is_arena_compound(w.pert_id) && dataset->is_holdout(i))
        idx.push_back(static_cast<int>(i));
    }
    if (idx.size() >= 3) {
      const Embedding2D e = embed_2d(dataset->features(idx));
      std::map<int, Series> by_moa;
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const int moa = dataset->labels.at(dataset->wells[static_cast<std::size_t>(idx[r])].pert_id).moa_id;
        auto& s = by_moa[moa];
        s.name = "MoA " + std::to_string(moa);
        s.points.emplace_back(e.coords(static_cast<Eigen::Index>(r), 0), e.coords(static_cast<Eigen::Index>(r), 1));
      }
      Plot ep{"Arena holdout wells, 2-D PCA", "PC1", "PC2", {}, true};
      for (auto& [moa, s] : by_moa) ep.series.push_back(std::move(s));
      b.plots.emplace_back("embedding", std::move(ep));
      if (e.degenerate) b.warnings.push_back("embedding is rank deficient; second axis is zero");
    } else {
      b.warnings.push_back("dataset has fewer than 3 arena holdout wells; embedding skipped");
    }
  }

  b.tables.push_back(std::move(frontiers));
  b.tables.push_back(std::move(bests));
  b.tables.push_back(std::move(chance));
  b.tables.push_back(std::move(ttests));
  b.tables.push_back(std::move(fits));
  return b;
}

void write_report(const ReportBundle& bundle, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream out(fs::path(out_dir) / name, std::ios::binary);
    if (!out) throw InputError("cannot write " + (fs::path(out_dir) / name).string());
    out << content;
  };
  for (const auto& t : bundle.tables) write(t.name + ".tsv", render_table(t));
  for (const auto& [stem, p] : bundle.plots) write(stem + ".svg", render_svg(p));
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "report_provenance";
  j["metadata"] = bundle.metadata;
  j["provenance"] = bundle.provenance;
  j["warnings"] = bundle.warnings;
  write("provenance.json", j.dump(2) + "\n");
}

}  // namespace pheno
