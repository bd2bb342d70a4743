#include "pheno/train_protocols.hpp"

#include "pheno/errors.hpp"
#include "pheno/nn/losses.hpp"
#include "pheno/pheno_eval.hpp"
#include "pheno/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>

namespace pheno {

const char* to_string(Task t) {
  switch (t) {
    case Task::moa: return "moa";
    case Task::target: return "target";
    case Task::molecule: return "molecule";
    case Task::discovery: return "discovery";
  }
  return "?";
}

Task task_from_string(const std::string& s) {
  if (s == "moa") return Task::moa;
  if (s == "target") return Task::target;
  if (s == "molecule") return Task::molecule;
  if (s == "discovery") return Task::discovery;
  throw ConfigError("unknown task '" + s + "'");
}

const char* to_string(Nuisance f) {
  switch (f) {
    case Nuisance::well: return "well";
    case Nuisance::plate: return "plate";
    case Nuisance::batch: return "batch";
    case Nuisance::source: return "source";
  }
  return "?";
}

double AdversarialWeights::operator[](Nuisance f) const {
  switch (f) {
    case Nuisance::well: return well;
    case Nuisance::plate: return plate;
    case Nuisance::batch: return batch;
    case Nuisance::source: return source;
  }
  return 0.0;
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be > 0");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (adversary_steps < 1) throw ConfigError("adversary_steps must be >= 1");
  for (auto f : kNuisances)
    if (!(adversarial[f] >= 0)) throw ConfigError(std::string("adversarial weight for ") + to_string(f) + " must be >= 0");
}

StopDecision early_stopper(std::span<const double> history, int patience, Objective objective) {
  if (history.empty()) throw InputError("early_stopper needs a nonempty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    const bool better = objective == Objective::minimize ? history[i] < history[best] : history[i] > history[best];
    if (better) best = i;
  }
  StopDecision s;
  s.best_epoch = static_cast<int>(best) + 1;
  s.stop = static_cast<int>(history.size()) - s.best_epoch >= patience;
  return s;
}

int LabelSpace::index_of(int id) const {
  const auto it = std::lower_bound(ids.begin(), ids.end(), id);
  return it != ids.end() && *it == id ? static_cast<int>(it - ids.begin()) : -1;
}

int task_label_id(const ArenaDataset& d, const WellRecord& w, Task task) {
  if (w.pert_type != PertType::compound) return -1;
  const auto it = d.labels.find(w.pert_id);
  switch (task) {
    case Task::molecule: return w.pert_id;
    case Task::moa: return it == d.labels.end() ? -1 : it->second.moa_id;
    case Task::target: return it == d.labels.end() ? -1 : it->second.target_id;
    case Task::discovery: return -1;
  }
  return -1;
}

LabelSpace task_label_space(const ArenaDataset& d, Task task) {
  if (task == Task::discovery) throw ConfigError("discovery has no label space");
  std::set<int> ids;
  for (int c : d.arena_compounds) {
    WellRecord w;
    w.pert_type = PertType::compound;
    w.pert_id = c;
    ids.insert(task_label_id(d, w, task));
  }
  return {task, std::vector<int>(ids.begin(), ids.end())};
}

FitValidation carve_validation(const ArenaDataset& d, const std::vector<int>& wells, std::uint64_t seed) {
  std::map<std::pair<int, int>, std::vector<int>> groups;
  for (int i : wells) {
    const auto& w = d.wells[static_cast<std::size_t>(i)];
    groups[{static_cast<int>(w.pert_type), w.pert_id}].push_back(i);
  }
  std::set<int> held;
  for (const auto& [key, members] : groups) {
    if (key.first == static_cast<int>(PertType::control) || members.size() < 2) continue;
    Rng r(seed, "validation", hash_combine(static_cast<std::uint64_t>(key.first), static_cast<std::uint64_t>(key.second)));
    held.insert(members[static_cast<std::size_t>(r.below(members.size()))]);
  }
  FitValidation out;
  for (int i : wells) (held.count(i) ? out.validation : out.fit).push_back(i);
  return out;
}

double compose_adversarial_loss(double task_loss, const std::map<Nuisance, Matrix>& nuisance_logits,
                                const AdversarialWeights& lambdas) {
  double total = task_loss;
  for (const auto& [f, logits] : nuisance_logits) {
    const double lambda = lambdas[f];
    if (lambda < 0) throw ConfigError("adversarial weights must be >= 0");
    if (lambda == 0) continue;
    total += lambda * nn::uniform_cross_entropy<double>(logits).loss;
  }
  return total;
}

int nuisance_label(const ArenaDataset& d, const WellRecord& w, Nuisance f) {
  switch (f) {
    case Nuisance::well: return w.row * d.plate_cols + w.col;
    case Nuisance::plate: return w.plate;
    case Nuisance::batch: return w.batch;
    case Nuisance::source: return w.source;
  }
  return 0;
}

int nuisance_classes(const ArenaDataset& d, Nuisance f) {
  switch (f) {
    case Nuisance::well: return d.plate_rows * d.plate_cols;
    case Nuisance::plate: return d.n_plates;
    case Nuisance::batch: return d.n_batches;
    case Nuisance::source: return d.n_sources;
  }
  return 0;
}

std::uint64_t parameter_hash(const Backbone& b) {
  std::uint64_t h = fnv1a("backbone");
  auto add = [&h](const auto& m) {
    h = hash_combine(h, static_cast<std::uint64_t>(m.rows()));
    h = hash_combine(h, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) h = hash_combine(h, std::bit_cast<std::uint64_t>(m.data()[i]));
  };
  add(b.projection().weight);
  add(b.projection().bias);
  for (const auto& blk : b.blocks()) {
    add(blk.linear.weight);
    add(blk.linear.bias);
    add(blk.norm.gain);
    add(blk.norm.shift);
    add(blk.norm.running_mean);
    add(blk.norm.running_var);
  }
  return h;
}

namespace {

struct Supervision {
  Matrix x_fit;
  std::vector<int> y_fit;
  Matrix x_val;
  std::vector<int> y_val;
  std::map<Nuisance, std::vector<int>> nuisance_fit;
  std::map<Nuisance, int> nuisance_k;
};

enum class ValMetric { cross_entropy, topk };

int topk_for(int n_classes) { return std::min(10, n_classes); }

Matrix rows_of(const Matrix& x, const std::vector<int>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(idx[r]);
  return out;
}

std::vector<int> pick(const std::vector<int>& v, const std::vector<int>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(v[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<std::vector<int>> minibatches(int n, int batch_size, Rng rng) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  rng.shuffle(perm);
  const int bs = std::min(batch_size, n);
  std::vector<std::vector<int>> out;
  for (int start = 0; start < n; start += bs) {
    const int end = std::min(n, start + bs);
    out.emplace_back(perm.begin() + start, perm.begin() + end);
  }
  // batch norm needs two rows per batch
  if (out.size() > 1 && out.back().size() < 2) {
    out[out.size() - 2].insert(out[out.size() - 2].end(), out.back().begin(), out.back().end());
    out.pop_back();
  }
  return out;
}

struct Validation {
  double metric = 0.0;  // reported value
  double key = 0.0;     // early stopping key
};

// Top-k accuracy saturates on small label spaces, so its stopping key breaks
// ties by cross entropy: CE / (1 + CE) < 1 is scaled below the 1 / n
// resolution of the accuracy.
Validation validation_metric(const Backbone* bb, const ProbeHead& head, const Matrix& x, const std::vector<int>& y,
                             ValMetric kind) {
  const Matrix feats = bb ? bb->features(x) : x;
  const Matrix logits = head.logits(feats);
  const double ce = molecule_cce(logits, y);
  if (kind == ValMetric::cross_entropy) return {ce, ce};
  const double acc = topk_accuracy(logits, y, topk_for(head.n_classes()));
  const double resolution = 1.0 / (2.0 * static_cast<double>(y.size()));
  return {acc, acc - resolution * ce / (1.0 + ce)};
}

struct LoopResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

// Trains head (and backbone when given) with early stopping; leaves the
// best-epoch weights in place.
LoopResult train_loop(Backbone* bb, ProbeHead& head, const Supervision& s, const TrainConfig& tcfg, ValMetric kind,
                      const std::string& tag) {
  tcfg.validate();
  const int n = static_cast<int>(s.x_fit.rows());
  if (n < 2) throw InputError(tag + ": need at least 2 training wells, got " + std::to_string(n));
  const bool have_val = s.x_val.rows() > 0;
  const ValMetric metric = have_val ? kind : ValMetric::cross_entropy;
  const Objective objective = metric == ValMetric::topk ? Objective::maximize : Objective::minimize;

  nn::AdamWOptions opts;
  opts.lr = tcfg.lr;
  opts.weight_decay = tcfg.weight_decay;
  nn::AdamW<double> opt(opts);

  const Rng base(tcfg.seed, tag);
  std::map<Nuisance, ProbeHead> adv_heads;
  std::map<Nuisance, nn::AdamW<double>> adv_opts;
  if (bb) {
    for (const auto& [f, k] : s.nuisance_k) {
      adv_heads.emplace(f, ProbeHead(bb->width(), bb->width(), k, base.split(std::string("adv/") + to_string(f))));
      adv_opts.emplace(f, nn::AdamW<double>(opts));
    }
  }

  nn::ParamList<double> params;
  if (bb) params = bb->params();
  for (const auto& p : head.params("head")) params.push_back(p);

  LoopResult out;
  std::vector<double> curve;
  Backbone best_bb = bb ? *bb : Backbone();
  ProbeHead best_head = head;

  for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    int rows = 0;
    for (const auto& batch : minibatches(n, tcfg.batch_size, base.split("shuffle").split(static_cast<std::uint64_t>(epoch)))) {
      const Matrix xb = rows_of(s.x_fit, batch);
      const std::vector<int> yb = pick(s.y_fit, batch);
      if (bb) bb->zero_grad();
      head.zero_grad();

      nn::BackboneCache<double> bcache;
      const Matrix feats = bb ? bb->forward(xb, nn::Mode::train, bcache) : xb;

      // nuisance heads: one step towards predicting the true factor
      std::map<Nuisance, Matrix> adv_logits;
      for (auto& [f, nh] : adv_heads) {
        const std::vector<int> yf = pick(s.nuisance_fit.at(f), batch);
        for (int step = 0; step < tcfg.adversary_steps; ++step) {
          nh.zero_grad();
          nn::HeadCache<double> hc;
          const Matrix logits = nh.forward(feats, hc);
          nh.backward(hc, nn::softmax_cross_entropy<double>(logits, yf).grad);
          try {
            adv_opts.at(f).step(nh.params(std::string("adv.") + to_string(f)));
          } catch (const TrainingError& e) {
            throw TrainingError(tag + ": " + e.what() + " at epoch " + std::to_string(epoch), epoch, e.parameter());
          }
        }
      }

      nn::HeadCache<double> hcache;
      const Matrix logits = head.forward(feats, hcache);
      const auto task = nn::softmax_cross_entropy<double>(logits, yb);
      Matrix g_feat = head.backward(hcache, task.grad);

      // feature extractor: push every nuisance head towards uniform
      for (auto& [f, nh] : adv_heads) {
        nn::HeadCache<double> hc;
        adv_logits[f] = nh.forward(feats, hc);
        const auto u = nn::uniform_cross_entropy<double>(adv_logits[f]);
        g_feat += nh.backward(hc, (tcfg.adversarial[f] * u.grad).eval());
        nh.zero_grad();
      }
      const double loss = compose_adversarial_loss(task.loss, adv_logits, tcfg.adversarial);
      if (!std::isfinite(loss))
        throw TrainingError(tag + ": non-finite loss at epoch " + std::to_string(epoch), epoch);

      if (bb) bb->backward(bcache, g_feat);
      try {
        opt.step(params);
      } catch (const TrainingError& e) {
        throw TrainingError(tag + ": " + e.what() + " at epoch " + std::to_string(epoch), epoch, e.parameter());
      }
      if (bb) bb->mark_updated();
      loss_sum += loss * static_cast<double>(batch.size());
      rows += static_cast<int>(batch.size());
    }
    const double train_loss = loss_sum / rows;
    const Validation val =
        have_val ? validation_metric(bb, head, s.x_val, s.y_val, metric) : Validation{train_loss, train_loss};
    if (!std::isfinite(val.key))
      throw TrainingError(tag + ": non-finite validation metric at epoch " + std::to_string(epoch), epoch);
    out.history.push_back({epoch, train_loss, val.metric});
    curve.push_back(val.key);
    const StopDecision d = early_stopper(curve, tcfg.patience, objective);
    if (d.best_epoch == epoch) {
      if (bb) best_bb = *bb;
      best_head = head;
    }
    out.best_epoch = d.best_epoch;
    if (d.stop) break;
  }
  if (bb) {
    *bb = best_bb;
    bb->mark_updated();
  }
  head = best_head;
  return out;
}

nn::BackboneConfig resolve(nn::BackboneConfig cfg, const ArenaDataset& d) {
  if (cfg.d_in == 0) cfg.d_in = d.d_feat;
  if (cfg.d_in != d.d_feat)
    throw DimensionError("backbone d_in " + std::to_string(cfg.d_in) + " does not match dataset d_feat " +
                         std::to_string(d.d_feat));
  return cfg;
}

Supervision build_supervision(const ArenaDataset& d, const std::vector<int>& wells, const LabelSpace& space,
                              const TrainConfig& tcfg, const std::string& tag, bool with_nuisance) {
  const FitValidation fv = carve_validation(d, wells, hash_combine(tcfg.seed, fnv1a(tag)));
  auto labels_of = [&](const std::vector<int>& idx) {
    std::vector<int> y;
    for (int i : idx) {
      const int id = task_label_id(d, d.wells[static_cast<std::size_t>(i)], space.task);
      const int c = space.index_of(id);
      if (c < 0) throw InputError(tag + ": well " + std::to_string(i) + " has no class in the label space");
      y.push_back(c);
    }
    return y;
  };
  Supervision s;
  s.x_fit = d.features(fv.fit);
  s.y_fit = labels_of(fv.fit);
  s.x_val = d.features(fv.validation);
  s.y_val = labels_of(fv.validation);
  if (with_nuisance) {
    for (auto f : kNuisances) {
      if (tcfg.adversarial[f] <= 0) continue;
      const int k = nuisance_classes(d, f);
      if (k < 2) continue;
      s.nuisance_k[f] = k;
      auto& y = s.nuisance_fit[f];
      for (int i : fv.fit) y.push_back(nuisance_label(d, d.wells[static_cast<std::size_t>(i)], f));
    }
  }
  return s;
}

std::vector<int> compound_train_wells(const DatasetView& view, bool arena_only) {
  const ArenaDataset& d = *view.data;
  std::vector<int> out;
  for (int i : view.train_wells()) {
    const auto& w = d.wells[static_cast<std::size_t>(i)];
    if (w.pert_type != PertType::compound) continue;
    if (arena_only && !d.is_arena_compound(w.pert_id)) continue;
    out.push_back(i);
  }
  return out;
}

ValMetric metric_for(Task task) { return task == Task::molecule ? ValMetric::cross_entropy : ValMetric::topk; }

}  // namespace

TrainedModel train_ibp(const nn::BackboneConfig& cfg, const TrainConfig& tcfg, const DatasetView& view) {
  const ArenaDataset& d = *view.data;
  const std::vector<int> wells = compound_train_wells(view, false);
  std::set<int> molecules;
  for (int i : wells) molecules.insert(d.wells[static_cast<std::size_t>(i)].pert_id);
  if (molecules.size() < 2) throw InputError("train_ibp needs at least 2 molecules in the view");
  LabelSpace space{Task::molecule, std::vector<int>(molecules.begin(), molecules.end())};

  TrainedModel m;
  m.backbone = Backbone(resolve(cfg, d));
  ProbeHead head(m.backbone.width(), m.backbone.width(), space.n_classes(), Rng(tcfg.seed, "head/ibp"));
  const Supervision s = build_supervision(d, wells, space, tcfg, "ibp", true);
  const LoopResult r = train_loop(&m.backbone, head, s, tcfg, ValMetric::cross_entropy, "ibp");
  m.heads["ibp"] = std::move(head);
  m.label_spaces["ibp"] = std::move(space);
  m.history = r.history;
  m.best_epoch = r.best_epoch;
  m.frozen = true;
  return m;
}

TrainedModel train_task_supervised(const nn::BackboneConfig& cfg, const TrainConfig& tcfg, const DatasetView& view,
                                   Task task) {
  if (task == Task::discovery) throw ConfigError("discovery is zero-shot and cannot be trained directly");
  const ArenaDataset& d = *view.data;
  LabelSpace space = task_label_space(d, task);
  if (space.n_classes() < 2) throw InputError(std::string("task ") + to_string(task) + " has fewer than 2 classes");
  const std::string tag = std::string("task/") + to_string(task);

  TrainedModel m;
  m.backbone = Backbone(resolve(cfg, d));
  ProbeHead head(m.backbone.width(), m.backbone.width(), space.n_classes(), Rng(tcfg.seed, "head/" + tag));
  const Supervision s = build_supervision(d, compound_train_wells(view, true), space, tcfg, tag, true);
  const LoopResult r = train_loop(&m.backbone, head, s, tcfg, metric_for(task), tag);
  m.heads[to_string(task)] = std::move(head);
  m.label_spaces[to_string(task)] = std::move(space);
  m.history = r.history;
  m.best_epoch = r.best_epoch;
  return m;
}

namespace {

void score_holdout(const Backbone& bb, const ProbeHead& head, const LabelSpace& space, const DatasetView& view,
                   ProbeResult& r) {
  const ArenaDataset& d = *view.data;
  std::vector<int> idx, y;
  for (int i : view.holdout_wells()) {
    const auto& w = d.wells[static_cast<std::size_t>(i)];
    if (w.pert_type != PertType::compound || !d.is_arena_compound(w.pert_id)) continue;
    const int c = space.index_of(task_label_id(d, w, space.task));
    if (c < 0) continue;
    idx.push_back(i);
    y.push_back(c);
  }
  r.n_holdout = static_cast<int>(idx.size());
  if (idx.empty()) {
    r.warnings.push_back("no arena holdout wells to score");
    return;
  }
  const Matrix x = d.features(idx);
  if (!x.allFinite()) throw InputError("arena holdout wells contain non-finite features");
  const Matrix logits = head.logits(bb.features(x));
  const int k = topk_for(space.n_classes());
  r.holdout_topk = topk_accuracy(logits, y, k);
  r.holdout_cce = molecule_cce(logits, y);
  r.chance = chance_topk(label_histogram(y), k);
}

}  // namespace

ProbeResult fit_probe(const TrainedModel& model, Task task, const DatasetView& view, const TrainConfig& tcfg) {
  if (task == Task::discovery) throw ConfigError("discovery is evaluated zero-shot, not with a probe");
  const ArenaDataset& d = *view.data;
  const std::uint64_t before = parameter_hash(model.backbone);
  ProbeResult r;
  r.labels = task_label_space(d, task);
  const std::string tag = std::string("probe/") + to_string(task);

  const std::vector<int> wells = compound_train_wells(view, true);
  Supervision s = build_supervision(d, wells, r.labels, tcfg, tag, false);
  s.x_fit = model.backbone.features(s.x_fit);
  if (s.x_val.rows() > 0) s.x_val = model.backbone.features(s.x_val);

  std::set<int> seen(s.y_fit.begin(), s.y_fit.end());
  seen.insert(s.y_val.begin(), s.y_val.end());
  std::set<int> missing;
  for (int i : view.holdout_wells()) {
    const auto& w = d.wells[static_cast<std::size_t>(i)];
    if (w.pert_type != PertType::compound || !d.is_arena_compound(w.pert_id)) continue;
    const int c = r.labels.index_of(task_label_id(d, w, task));
    if (c >= 0 && !seen.count(c)) missing.insert(r.labels.ids[static_cast<std::size_t>(c)]);
  }
  if (!missing.empty())
    r.warnings.push_back(std::to_string(missing.size()) + " holdout classes have no probe-training wells");

  r.head = ProbeHead(model.backbone.width(), model.backbone.width(), r.labels.n_classes(), Rng(tcfg.seed, "head/" + tag));
  const LoopResult loop = train_loop(nullptr, r.head, s, tcfg, metric_for(task), tag);
  r.validation_metric = loop.history[static_cast<std::size_t>(loop.best_epoch - 1)].val_metric;
  if (parameter_hash(model.backbone) != before) throw TrainingError("frozen backbone changed during probe fitting");
  score_holdout(model.backbone, r.head, r.labels, view, r);
  return r;
}

NuisanceProbeResult fit_nuisance_probe(const TrainedModel& model, Nuisance f, const DatasetView& view,
                                       const TrainConfig& tcfg) {
  const ArenaDataset& d = *view.data;
  const int k = nuisance_classes(d, f);
  if (k < 2) throw InputError(std::string("nuisance ") + to_string(f) + " has fewer than 2 classes");
  const std::uint64_t before = parameter_hash(model.backbone);
  const std::string tag = std::string("nuisance/") + to_string(f);
  auto labels_of = [&](const std::vector<int>& idx) {
    std::vector<int> y;
    for (int i : idx) y.push_back(nuisance_label(d, d.wells[static_cast<std::size_t>(i)], f));
    return y;
  };

  const FitValidation fv = carve_validation(d, compound_train_wells(view, false), hash_combine(tcfg.seed, fnv1a(tag)));
  Supervision s;
  s.x_fit = model.backbone.features(d.features(fv.fit));
  s.y_fit = labels_of(fv.fit);
  s.x_val = model.backbone.features(d.features(fv.validation));
  s.y_val = labels_of(fv.validation);
  ProbeHead head(model.backbone.width(), model.backbone.width(), k, Rng(tcfg.seed, "head/" + tag));
  train_loop(nullptr, head, s, tcfg, ValMetric::cross_entropy, tag);
  if (parameter_hash(model.backbone) != before) throw TrainingError("frozen backbone changed during probe fitting");

  std::vector<int> eval;
  for (int i : view.holdout_wells())
    if (d.wells[static_cast<std::size_t>(i)].pert_type == PertType::compound) eval.push_back(i);
  NuisanceProbeResult r;
  r.n_eval = static_cast<int>(eval.size());
  if (eval.empty()) return r;
  const Matrix x = d.features(eval);
  if (!x.allFinite()) throw InputError("holdout wells contain non-finite features");
  const std::vector<int> y = labels_of(eval);
  r.accuracy = topk_accuracy(head.logits(model.backbone.features(x)), y, 1);
  r.chance = chance_topk(label_histogram(y), 1);
  return r;
}

ProbeResult evaluate_head(const TrainedModel& model, Task task, const DatasetView& view) {
  const auto it = model.heads.find(to_string(task));
  if (it == model.heads.end()) throw ConfigError(std::string("model has no head for task ") + to_string(task));
  ProbeResult r;
  r.head = it->second;
  r.labels = model.label_spaces.at(to_string(task));
  if (!model.history.empty()) r.validation_metric = model.history[static_cast<std::size_t>(model.best_epoch - 1)].val_metric;
  score_holdout(model.backbone, r.head, r.labels, view, r);
  return r;
}

namespace {

using nlohmann::json;

json matrix_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"row_major", std::move(data)}};
}

template <typename M>
void matrix_from(const json& j, M& m) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("row_major");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw InputError("checkpoint tensor size mismatch");
  m.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)].get<double>();
}

json head_json(const ProbeHead& h) {
  json layers = json::array();
  for (const auto& l : h.layers()) layers.push_back({{"weight", matrix_json(l.weight)}, {"bias", matrix_json(l.bias)}});
  return layers;
}

ProbeHead head_from(const json& j) {
  ProbeHead h;
  for (std::size_t l = 0; l < 3; ++l) {
    auto& layer = h.layers()[l];
    matrix_from(j.at(l).at("weight"), layer.weight);
    matrix_from(j.at(l).at("bias"), layer.bias);
    layer.zero_grad();
  }
  return h;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "checkpoint";
  j["byte_order"] = "little";
  j["config"] = {{"depth", c.config.depth}, {"width", c.config.width}, {"d_in", c.config.d_in}, {"seed", c.config.seed}};
  json blocks = json::array();
  for (const auto& b : c.backbone.blocks()) {
    blocks.push_back({{"weight", matrix_json(b.linear.weight)},
                      {"bias", matrix_json(b.linear.bias)},
                      {"gain", matrix_json(b.norm.gain)},
                      {"shift", matrix_json(b.norm.shift)},
                      {"running_mean", matrix_json(b.norm.running_mean)},
                      {"running_var", matrix_json(b.norm.running_var)}});
  }
  j["backbone"] = {{"proj_weight", matrix_json(c.backbone.projection().weight)},
                   {"proj_bias", matrix_json(c.backbone.projection().bias)},
                   {"blocks", std::move(blocks)}};
  json heads = json::object();
  for (const auto& [name, h] : c.heads) heads[name] = head_json(h);
  j["heads"] = std::move(heads);
  const auto& o = c.optimizer.options();
  json moments = json::object();
  for (const auto& [name, mv] : c.optimizer.state()) moments[name] = {{"m", matrix_json(mv.m)}, {"v", matrix_json(mv.v)}};
  j["optimizer"] = {{"lr", o.lr},          {"beta1", o.beta1}, {"beta2", o.beta2},
                    {"eps", o.eps},        {"weight_decay", o.weight_decay},
                    {"t", c.optimizer.step_count()}, {"moments", std::move(moments)}};
  j["epoch"] = c.epoch;
  j["rng_cursor"] = c.rng_cursor;
  std::ofstream out(path);
  if (!out) throw InputError("cannot write checkpoint " + path);
  out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read checkpoint " + path);
  try {
    const json j = json::parse(in);
    if (j.at("kind") != "checkpoint" || j.at("schema_version") != 1)
      throw InputError(path + ": not a version 1 checkpoint");
    Checkpoint c;
    const auto& cfg = j.at("config");
    c.config = {cfg.at("depth").get<int>(), cfg.at("width").get<int>(), cfg.at("d_in").get<int>(),
                cfg.at("seed").get<std::uint64_t>()};
    c.backbone = Backbone(c.config);
    const auto& bb = j.at("backbone");
    matrix_from(bb.at("proj_weight"), c.backbone.projection().weight);
    matrix_from(bb.at("proj_bias"), c.backbone.projection().bias);
    const auto& blocks = bb.at("blocks");
    if (blocks.size() != c.backbone.blocks().size()) throw InputError(path + ": block count does not match depth");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      auto& b = c.backbone.blocks()[i];
      matrix_from(blocks[i].at("weight"), b.linear.weight);
      matrix_from(blocks[i].at("bias"), b.linear.bias);
      matrix_from(blocks[i].at("gain"), b.norm.gain);
      matrix_from(blocks[i].at("shift"), b.norm.shift);
      matrix_from(blocks[i].at("running_mean"), b.norm.running_mean);
      matrix_from(blocks[i].at("running_var"), b.norm.running_var);
    }
    for (const auto& [name, h] : j.at("heads").items()) c.heads[name] = head_from(h);
    const auto& o = j.at("optimizer");
    nn::AdamWOptions opts{o.at("lr").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                          o.at("eps").get<double>(), o.at("weight_decay").get<double>()};
    c.optimizer = nn::AdamW<double>(opts);
    c.optimizer.set_step_count(o.at("t").get<std::int64_t>());
    for (const auto& [name, mv] : o.at("moments").items()) {
      auto& s = c.optimizer.state()[name];
      matrix_from(mv.at("m"), s.m);
      matrix_from(mv.at("v"), s.v);
    }
    c.epoch = j.at("epoch").get<int>();
    c.rng_cursor = j.at("rng_cursor").get<std::uint64_t>();
    return c;
  } catch (const json::exception& e) {
    throw InputError(path + ": malformed checkpoint: " + e.what());
  }
}

}  // namespace pheno
