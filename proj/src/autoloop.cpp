#include "dtnet/autoloop.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace dtnet::autoloop {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

bool is_classification(const ToyTask& t) { return t.loss == toy::LossKind::kLogistic; }

double get(const Config& c, const std::string& key, double fallback) {
  auto it = c.find(key);
  return it == c.end() ? fallback : it->second;
}

class ConstantModel : public Model {
 public:
  explicit ConstantModel(double v) : value_(v) {}
  double predict(std::span<const double>) const override { return value_; }

 private:
  double value_;
};

class LinearModel : public Model {
 public:
  LinearModel(ParamVector w, bool logistic) : w_(std::move(w)), logistic_(logistic) {}
  double predict(std::span<const double> row) const override {
    double z = w_.back();
    for (std::size_t j = 0; j < row.size(); ++j) z += w_[j] * row[j];
    return logistic_ ? sigmoid(z) : z;
  }

 private:
  ParamVector w_;
  bool logistic_;
};

// Regression tree over a flat node array. Leaves carry the output directly.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  double value = 0.0;
  int left = -1;
  int right = -1;
};

using LeafValue = std::function<double(std::span<const std::size_t>)>;

class TreeBuilder {
 public:
  TreeBuilder(const ToyTask& t, const std::vector<double>& target, std::size_t max_depth, std::size_t min_leaf,
              LeafValue leaf)
      : t_(t), y_(target), max_depth_(max_depth), min_leaf_(std::max<std::size_t>(min_leaf, 1)), leaf_(std::move(leaf)) {}

  std::vector<TreeNode> build() {
    std::vector<std::size_t> idx(t_.rows());
    std::iota(idx.begin(), idx.end(), 0);
    grow(idx, 0);
    return std::move(nodes_);
  }

 private:
  int grow(std::vector<std::size_t>& idx, std::size_t depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    int best_f = -1;
    double best_thr = 0.0;
    double best_sse = 0.0;
    if (depth < max_depth_ && idx.size() >= 2 * min_leaf_) {
      double sum = 0.0, sq = 0.0;
      for (auto i : idx) {
        sum += y_[i];
        sq += y_[i] * y_[i];
      }
      const double n = static_cast<double>(idx.size());
      best_sse = sq - sum * sum / n - 1e-12;
      std::vector<std::size_t> order = idx;
      for (std::size_t f = 0; f < t_.cols; ++f) {
        auto x = [&](std::size_t i) { return t_.inputs[i * t_.cols + f]; };
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          return x(a) != x(b) ? x(a) < x(b) : a < b;
        });
        double ls = 0.0, lq = 0.0;
        for (std::size_t k = 0; k + 1 < order.size(); ++k) {
          const double v = y_[order[k]];
          ls += v;
          lq += v * v;
          const std::size_t nl = k + 1, nr = order.size() - nl;
          if (nl < min_leaf_ || nr < min_leaf_) continue;
          if (x(order[k]) == x(order[k + 1])) continue;
          const double rs = sum - ls, rq = sq - lq;
          const double sse = (lq - ls * ls / static_cast<double>(nl)) + (rq - rs * rs / static_cast<double>(nr));
          if (sse < best_sse) {
            best_sse = sse;
            best_f = static_cast<int>(f);
            best_thr = 0.5 * (x(order[k]) + x(order[k + 1]));
          }
        }
      }
    }
    if (best_f < 0) {
      nodes_[id].value = leaf_(idx);
      return id;
    }
    std::vector<std::size_t> l, r;
    for (auto i : idx) (t_.inputs[i * t_.cols + best_f] <= best_thr ? l : r).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    nodes_[id].feature = best_f;
    nodes_[id].threshold = best_thr;
    const int li = grow(l, depth + 1);
    const int ri = grow(r, depth + 1);
    nodes_[id].left = li;
    nodes_[id].right = ri;
    return id;
  }

  const ToyTask& t_;
  const std::vector<double>& y_;
  std::size_t max_depth_;
  std::size_t min_leaf_;
  LeafValue leaf_;
  std::vector<TreeNode> nodes_;
};

double eval_tree(const std::vector<TreeNode>& nodes, std::span<const double> row) {
  int n = 0;
  while (nodes[n].feature >= 0) {
    n = row[nodes[n].feature] <= nodes[n].threshold ? nodes[n].left : nodes[n].right;
  }
  return nodes[n].value;
}

class TreeModel : public Model {
 public:
  explicit TreeModel(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}
  double predict(std::span<const double> row) const override { return eval_tree(nodes_, row); }

 private:
  std::vector<TreeNode> nodes_;
};

class BoostedModel : public Model {
 public:
  BoostedModel(double base, double shrinkage, std::vector<std::vector<TreeNode>> trees, bool logistic)
      : base_(base), shrinkage_(shrinkage), trees_(std::move(trees)), logistic_(logistic) {}
  double predict(std::span<const double> row) const override {
    double f = base_;
    for (const auto& t : trees_) f += shrinkage_ * eval_tree(t, row);
    return logistic_ ? sigmoid(f) : f;
  }

 private:
  double base_;
  double shrinkage_;
  std::vector<std::vector<TreeNode>> trees_;
  bool logistic_;
};

std::size_t as_count(double v, const char* key) {
  if (!(v >= 0.0) || v != std::floor(v)) throw std::invalid_argument(std::string("config ") + key + " must be a count");
  return static_cast<std::size_t>(v);
}

double mean_target(const ToyTask& t) {
  if (t.rows() == 0) throw std::invalid_argument("empty training set");
  return std::accumulate(t.targets.begin(), t.targets.end(), 0.0) / static_cast<double>(t.rows());
}

}  // namespace

void EvalSet::validate() const {
  task.validate();
  if (task.rows() == 0) throw std::invalid_argument("empty eval set");
  if (groups.size() != task.rows()) throw std::invalid_argument("groups must label every eval row");
}

std::string config_string(const Config& c) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [k, v] : c) {
    if (!first) os << ',';
    first = false;
    os << k << '=' << v;
  }
  return os.str();
}

double score(const Model& m, const EvalSet& eval) {
  const ToyTask& t = eval.task;
  if (eval.kind == ScoreKind::kNegativeMse) {
    double se = 0.0;
    for (std::size_t i = 0; i < t.rows(); ++i) {
      const double r = m.predict(t.row(i)) - t.targets[i];
      se += r * r;
    }
    return -se / static_cast<double>(t.rows());
  }
  std::size_t pos = 0, neg = 0, tp = 0, tn = 0;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const bool pred = m.predict(t.row(i)) >= 0.5;
    if (t.targets[i] >= 0.5) {
      ++pos;
      tp += pred ? 1 : 0;
    } else {
      ++neg;
      tn += pred ? 0 : 1;
    }
  }
  if (pos == 0) return static_cast<double>(tn) / static_cast<double>(neg);
  if (neg == 0) return static_cast<double>(tp) / static_cast<double>(pos);
  return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) + static_cast<double>(tn) / static_cast<double>(neg));
}

FailureModeReport error_analysis(const Model& m, const EvalSet& eval) {
  eval.validate();
  const ToyTask& t = eval.task;
  FailureModeReport r;
  r.errors.resize(t.rows());
  std::map<int, double> sums;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const double p = m.predict(t.row(i));
    double e;
    if (eval.kind == ScoreKind::kNegativeMse) {
      e = (p - t.targets[i]) * (p - t.targets[i]);
    } else {
      e = ((p >= 0.5) != (t.targets[i] >= 0.5)) ? 1.0 : 0.0;
    }
    r.errors[i] = e;
    sums[eval.groups[i]] += e;
    ++r.group_count[eval.groups[i]];
    r.overall_error += e;
  }
  r.overall_error /= static_cast<double>(t.rows());
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& [g, s] : sums) {
    const double rate = s / static_cast<double>(r.group_count[g]);
    r.group_error[g] = rate;
    lo = std::min(lo, rate);
    hi = std::max(hi, rate);
  }
  // Squared residuals have no natural scale, so their gap is taken relative
  // to the overall error.
  const double gap = eval.kind == ScoreKind::kNegativeMse ? (hi - lo) / std::max(r.overall_error, 1e-300) : hi - lo;
  if (r.overall_error == 0.0) {
    r.signature = "none";
  } else if (gap > kConcentrationGap) {
    r.signature = "concentrated";
  } else {
    r.signature = "uniform";
  }
  return r;
}

void ConvergenceParams::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (patience < 1) throw std::invalid_argument("patience must be at least 1");
}

bool convergence_check(std::span<const double> scores, const ConvergenceParams& p) {
  p.validate();
  if (scores.size() < p.patience + 1) return false;
  for (std::size_t k = scores.size() - p.patience; k < scores.size(); ++k) {
    if (!(scores[k] - scores[k - 1] < p.epsilon)) return false;
  }
  return true;
}

std::string Insight::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = version;
  j["strategy"] = strategy;
  j["config"] = config;
  j["signature"] = signature;
  j["score"] = score;
  j["margin"] = margin;
  j["improved"] = improved;
  return j.dump();
}

std::string VersionRecord::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = version;
  j["signature"] = signature;
  j["strategies"] = strategies;
  auto& tr = j["trials"] = nlohmann::ordered_json::array();
  for (const auto& t : trials) {
    tr.push_back({{"strategy", t.strategy},
                  {"config", config_string(t.config)},
                  {"eval_score", t.eval_score},
                  {"holdout_score", t.holdout_score}});
  }
  j["version_best_strategy"] = version_best_strategy;
  j["version_best_score"] = version_best_score;
  j["best_strategy"] = best_strategy;
  j["best_config"] = best_config;
  j["best_score"] = best_score;
  j["best_holdout"] = best_holdout;
  return j.dump(2);
}

std::vector<const Strategy*> default_designer(const FailureModeReport& report, const KnowledgeBase&,
                                              std::span<const Strategy> bank, std::size_t) {
  std::vector<std::pair<std::size_t, std::size_t>> ranked;  // (affinity rank, bank index)
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const auto& a = bank[i].addresses;
    const auto pos = static_cast<std::size_t>(std::find(a.begin(), a.end(), report.signature) - a.begin());
    ranked.emplace_back(pos, i);
  }
  std::stable_sort(ranked.begin(), ranked.end());
  const std::size_t n = std::min(bank.size(), std::clamp<std::size_t>(bank.size(), 3, 8));
  std::vector<const Strategy*> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back(&bank[ranked[k].second]);
  return out;
}

const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::kConverged: return "converged";
    case StopReason::kExhausted: return "exhausted";
    case StopReason::kBudget: return "budget";
  }
  return "unknown";
}

LoopResult run_autoresearch(const ToyTask& train, const EvalSet& eval, const EvalSet& holdout,
                            std::span<const Strategy> bank, const LoopParams& params,
                            const StrategyDesigner& designer) {
  if (bank.empty()) throw AutoloopError("empty strategy bank");
  params.convergence.validate();
  train.validate();
  eval.validate();
  holdout.validate();

  LoopResult res;
  res.best_model = fit_constant(train);
  res.best_strategy = "baseline";
  res.best_score = res.baseline_score = score(*res.best_model, eval);
  res.best_holdout = score(*res.best_model, holdout);
  res.scores.push_back(res.best_score);
  std::string best_config;
  std::set<std::string> tried;

  for (std::size_t v = 1; v <= params.max_versions; ++v) {
    VersionRecord rec;
    rec.version = v;
    const FailureModeReport report = error_analysis(*res.best_model, eval);
    rec.signature = report.signature;

    std::shared_ptr<const Model> version_model;
    Trial version_best;
    bool have = false;
    for (const Strategy* s : designer(report, res.knowledge, bank, v)) {
      rec.strategies.push_back(s->name);
      for (const Config& c : s->configs(v)) {
        if (!tried.insert(s->name + "|" + config_string(c)).second) continue;
        std::shared_ptr<const Model> m = s->fit(train, c);
        Trial t{s->name, c, score(*m, eval), score(*m, holdout)};
        if (!have || t.eval_score > version_best.eval_score) {
          version_best = t;
          version_model = m;
          have = true;
        }
        rec.trials.push_back(std::move(t));
      }
    }
    if (!have) {
      if (v == 1) throw AutoloopError("no strategy produced a configuration to try");
      res.stop = StopReason::kExhausted;
      break;
    }

    Insight ins;
    ins.version = v;
    ins.strategy = version_best.strategy;
    ins.config = config_string(version_best.config);
    ins.signature = report.signature;
    ins.score = version_best.eval_score;
    ins.margin = version_best.eval_score - res.best_score;
    ins.improved = version_best.eval_score > res.best_score;
    if (ins.improved) {
      res.best_model = version_model;
      res.best_strategy = version_best.strategy;
      res.best_score = version_best.eval_score;
      res.best_holdout = version_best.holdout_score;
      best_config = ins.config;
    }
    res.knowledge.append(std::move(ins));
    res.scores.push_back(res.best_score);

    rec.version_best_strategy = version_best.strategy;
    rec.version_best_score = version_best.eval_score;
    rec.best_strategy = res.best_strategy;
    rec.best_config = best_config;
    rec.best_score = res.best_score;
    rec.best_holdout = res.best_holdout;
    res.history.push_back(std::move(rec));

    if (convergence_check(res.scores, params.convergence)) {
      res.stop = StopReason::kConverged;
      break;
    }
  }
  return res;
}

std::unique_ptr<Model> fit_constant(const ToyTask& train) {
  const double m = mean_target(train);
  if (is_classification(train)) return std::make_unique<ConstantModel>(m >= 0.5 ? 1.0 : 0.0);
  return std::make_unique<ConstantModel>(m);
}

std::unique_ptr<Model> fit_linear(const ToyTask& train, const Config& cfg) {
  train.validate();
  ToyTask aug;
  aug.cols = train.cols + 1;
  aug.loss = train.loss;
  aug.targets = train.targets;
  aug.inputs.reserve(train.rows() * aug.cols);
  for (std::size_t i = 0; i < train.rows(); ++i) {
    const auto r = train.row(i);
    aug.inputs.insert(aug.inputs.end(), r.begin(), r.end());
    aug.inputs.push_back(1.0);
  }
  auto state = toy::InnerOptimizerState::for_size(aug.cols);
  state.learning_rate = get(cfg, "lr", 0.05);
  ParamVector w = toy::train(ParamVector(aug.cols, 0.0), aug, state, as_count(get(cfg, "steps", 100), "steps"));
  return std::make_unique<LinearModel>(std::move(w), is_classification(train));
}

std::unique_ptr<Model> fit_tree(const ToyTask& train, const Config& cfg) {
  train.validate();
  if (train.rows() == 0) throw std::invalid_argument("empty training set");
  const auto& y = train.targets;
  TreeBuilder b(train, y, as_count(get(cfg, "depth", 3), "depth"), as_count(get(cfg, "min_leaf", 5), "min_leaf"),
                [&y](std::span<const std::size_t> idx) {
                  double s = 0.0;
                  for (auto i : idx) s += y[i];
                  return s / static_cast<double>(idx.size());
                });
  return std::make_unique<TreeModel>(b.build());
}

std::unique_ptr<Model> fit_boosted(const ToyTask& train, const Config& cfg) {
  train.validate();
  const bool logistic = is_classification(train);
  const std::size_t rounds = as_count(get(cfg, "rounds", 50), "rounds");
  const std::size_t depth = as_count(get(cfg, "depth", 2), "depth");
  const double shrink = get(cfg, "shrinkage", 0.3);
  const std::size_t n = train.rows();
  const double prior = std::clamp(mean_target(train), 1e-6, 1.0 - 1e-6);
  const double base = logistic ? std::log(prior / (1.0 - prior)) : mean_target(train);

  std::vector<double> f(n, base), resid(n), hess(n, 1.0);
  std::vector<std::vector<TreeNode>> trees;
  for (std::size_t r = 0; r < rounds; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      if (logistic) {
        const double p = sigmoid(f[i]);
        resid[i] = train.targets[i] - p;
        hess[i] = p * (1.0 - p);
      } else {
        resid[i] = train.targets[i] - f[i];
      }
    }
    // Newton leaf values: sum of gradients over sum of hessians.
    TreeBuilder b(train, resid, depth, 5, [&](std::span<const std::size_t> idx) {
      double g = 0.0, h = 0.0;
      for (auto i : idx) {
        g += resid[i];
        h += hess[i];
      }
      return g / std::max(h, 1e-12);
    });
    trees.push_back(b.build());
    for (std::size_t i = 0; i < n; ++i) f[i] += shrink * eval_tree(trees.back(), train.row(i));
  }
  return std::make_unique<BoostedModel>(base, shrink, std::move(trees), logistic);
}

std::vector<Strategy> default_bank() {
  std::vector<Strategy> bank;
  bank.push_back({"constant",
                  [](std::size_t v) { return v == 1 ? std::vector<Config>{Config{}} : std::vector<Config>{}; },
                  [](const ToyTask& t, const Config&) { return fit_constant(t); },
                  {"none"}});
  bank.push_back({"linear",
                  [](std::size_t v) {
                    if (v > 6) return std::vector<Config>{};
                    const double steps = 25.0 * std::pow(2.0, static_cast<double>(v - 1));
                    return std::vector<Config>{{{"steps", steps}, {"lr", 0.05}}, {{"steps", steps}, {"lr", 0.2}}};
                  },
                  fit_linear,
                  {"uniform", "concentrated"}});
  bank.push_back({"tree",
                  [](std::size_t v) {
                    if (v > 8) return std::vector<Config>{};
                    return std::vector<Config>{{{"depth", static_cast<double>(v)}, {"min_leaf", 10}}};
                  },
                  fit_tree,
                  {"concentrated", "uniform"}});
  bank.push_back({"boosted",
                  [](std::size_t v) {
                    if (v > 7) return std::vector<Config>{};
                    const double rounds = 2.0 * std::pow(2.0, static_cast<double>(v - 1));
                    return std::vector<Config>{{{"rounds", rounds}, {"depth", 2}, {"shrinkage", 0.3}}};
                  },
                  fit_boosted,
                  {"concentrated", "uniform"}});
  return bank;
}

PivotData make_pivot_data(Rng& rng, std::size_t train_rows, std::size_t eval_rows, double threshold) {
  auto draw = [&](std::size_t rows, std::vector<int>* groups) {
    ToyTask t;
    t.cols = 3;
    t.loss = toy::LossKind::kLogistic;
    for (std::size_t i = 0; i < rows; ++i) {
      const double x0 = rng.normal(), x1 = rng.normal(), x2 = rng.normal();
      t.inputs.insert(t.inputs.end(), {x0, x1, x2});
      const bool twisted = x2 > threshold;
      const bool label = twisted ? (x0 * x1 > 0.0) : (x0 + 0.5 * x1 > 0.0);
      t.targets.push_back(label ? 1.0 : 0.0);
      if (groups) groups->push_back(twisted ? 1 : 0);
    }
    return t;
  };
  PivotData d;
  d.train = draw(train_rows, nullptr);
  d.eval.task = draw(eval_rows, &d.eval.groups);
  d.holdout.task = draw(eval_rows, &d.holdout.groups);
  return d;
}

namespace {

// Correct on the first k rows of each class; x0 is the rank within the class
// and x1 the label itself.
class ScriptedModel : public Model {
 public:
  explicit ScriptedModel(double k) : k_(k) {}
  double predict(std::span<const double> row) const override { return row[0] < k_ ? row[1] : 1.0 - row[1]; }

 private:
  double k_;
};

EvalSet scripted_eval(std::size_t half) {
  EvalSet e;
  e.task.cols = 2;
  e.task.loss = toy::LossKind::kLogistic;
  for (int label = 0; label < 2; ++label) {
    for (std::size_t i = 0; i < half; ++i) {
      e.task.inputs.insert(e.task.inputs.end(), {static_cast<double>(i), static_cast<double>(label)});
      e.task.targets.push_back(label);
      e.groups.push_back(label);
    }
  }
  return e;
}

}  // namespace

ScriptedSetup make_scripted(const std::vector<double>& scores, std::size_t half) {
  if (half == 0) throw std::invalid_argument("half must be positive");
  ScriptedSetup s;
  s.eval = scripted_eval(half);
  s.holdout = s.eval;
  s.train = s.eval.task;
  const auto h = static_cast<double>(half);
  s.bank.push_back({"scripted",
                    [scores, h](std::size_t v) {
                      if (v == 0 || v > scores.size()) return std::vector<Config>{};
                      return std::vector<Config>{{{"k", std::round(scores[v - 1] * h)}, {"v", static_cast<double>(v)}}};
                    },
                    [](const ToyTask&, const Config& c) { return std::make_unique<ScriptedModel>(c.at("k")); },
                    {"uniform", "concentrated", "none"}});
  return s;
}

}  // namespace dtnet::autoloop
