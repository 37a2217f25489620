#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtnet/random.hpp"
#include "dtnet/toy_model.hpp"

namespace dtnet::autoloop {

using toy::ToyTask;

enum class ScoreKind { kBalancedAccuracy, kNegativeMse };

/// Held-out labelled examples. `groups[i]` buckets row i for failure analysis.
struct EvalSet {
  ToyTask task;
  std::vector<int> groups;
  ScoreKind kind = ScoreKind::kBalancedAccuracy;

  void validate() const;
};

/// A fitted predictor. Classification models return P(y = 1).
class Model {
 public:
  virtual ~Model() = default;
  virtual double predict(std::span<const double> row) const = 0;
};

using Config = std::map<std::string, double>;
std::string config_string(const Config& c);

/// Balanced accuracy (threshold 0.5) or -MSE, depending on `eval.kind`.
double score(const Model& m, const EvalSet& eval);

struct FailureModeReport {
  std::vector<double> errors;  // 0/1 flags or squared residuals per row
  std::map<int, double> group_error;
  std::map<int, std::size_t> group_count;
  double overall_error = 0.0;
  std::string signature;  // "none", "uniform" or "concentrated"
};

/// Group error rates differing by more than this are "concentrated".
inline constexpr double kConcentrationGap = 0.15;

FailureModeReport error_analysis(const Model& m, const EvalSet& eval);

struct ConvergenceParams {
  double epsilon = 1e-3;
  std::size_t patience = 2;

  void validate() const;
};

/// True iff the last `patience` consecutive deltas are each < epsilon.
bool convergence_check(std::span<const double> scores, const ConvergenceParams& p);

/// Candidate configs for a strategy at a given version. An empty result means
/// the strategy has nothing new to try.
struct Strategy {
  std::string name;
  std::function<std::vector<Config>(std::size_t version)> configs;
  std::function<std::unique_ptr<Model>(const ToyTask& train, const Config& cfg)> fit;
  /// Failure signatures this strategy is meant to address, most relevant first.
  std::vector<std::string> addresses;
};

struct Insight {
  std::size_t version = 0;
  std::string strategy;
  std::string config;
  std::string signature;
  double score = 0.0;
  double margin = 0.0;  // over the previous best
  bool improved = false;

  std::string to_json() const;
};

/// Append-only list of per-version insights.
class KnowledgeBase {
 public:
  void append(Insight i) { entries_.push_back(std::move(i)); }
  const std::vector<Insight>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<Insight> entries_;
};

struct Trial {
  std::string strategy;
  Config config;
  double eval_score = 0.0;
  double holdout_score = 0.0;
};

struct VersionRecord {
  std::size_t version = 0;
  std::string signature;
  std::vector<std::string> strategies;
  std::vector<Trial> trials;
  std::string version_best_strategy;
  double version_best_score = 0.0;
  std::string best_strategy;  // best of all versions so far
  std::string best_config;
  double best_score = 0.0;
  double best_holdout = 0.0;

  std::string to_json() const;
};

/// Picks the strategies to run this version.
using StrategyDesigner = std::function<std::vector<const Strategy*>(
    const FailureModeReport&, const KnowledgeBase&, std::span<const Strategy> bank, std::size_t version)>;

/// Ranks the bank by how early the report's signature appears in each
/// strategy's `addresses` list (ties keep bank order), then takes
/// clamp(|bank|, 3, 8) capped by |bank|.
std::vector<const Strategy*> default_designer(const FailureModeReport& report, const KnowledgeBase& kb,
                                              std::span<const Strategy> bank, std::size_t version);

struct LoopParams {
  ConvergenceParams convergence;
  std::size_t max_versions = 20;
};

enum class StopReason { kConverged, kExhausted, kBudget };
const char* stop_reason_name(StopReason r);

struct LoopResult {
  std::shared_ptr<const Model> best_model;
  std::string best_strategy;
  double best_score = 0.0;
  double best_holdout = 0.0;
  double baseline_score = 0.0;
  std::vector<double> scores;  // baseline followed by best-so-far per version
  KnowledgeBase knowledge;
  std::vector<VersionRecord> history;
  StopReason stop = StopReason::kBudget;
};

class AutoloopError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Error-driven version loop. Version 0 is a constant predictor fitted to
/// `train`. Each version analyses the current best model on `eval`, asks the
/// designer for strategies, sweeps their configs and keeps the best model of
/// all versions by eval score. `holdout` is only reported, never used for
/// selection. Throws AutoloopError if no strategy yields any config in
/// version 1.
LoopResult run_autoresearch(const ToyTask& train, const EvalSet& eval, const EvalSet& holdout,
                            std::span<const Strategy> bank, const LoopParams& params,
                            const StrategyDesigner& designer = default_designer);

// Model families available to strategy banks.
std::unique_ptr<Model> fit_constant(const ToyTask& train);
/// Logistic or least-squares linear model with a bias, trained by full-batch
/// AdamW. Config keys: steps, lr.
std::unique_ptr<Model> fit_linear(const ToyTask& train, const Config& cfg);
/// CART tree. Config keys: depth, min_leaf.
std::unique_ptr<Model> fit_tree(const ToyTask& train, const Config& cfg);
/// Gradient-boosted trees. Config keys: rounds, depth, shrinkage.
std::unique_ptr<Model> fit_boosted(const ToyTask& train, const Config& cfg);

/// Constant, linear, tree and boosted strategies whose capacity grows with
/// the version number.
std::vector<Strategy> default_bank();

/// Classification data whose label is linear in (x0, x1) except in the
/// region x2 > threshold, where it follows sign(x0 * x1). Group = (x2 > threshold).
struct PivotData {
  ToyTask train;
  EvalSet eval;
  EvalSet holdout;
};
PivotData make_pivot_data(Rng& rng, std::size_t train_rows, std::size_t eval_rows, double threshold = 0.3);

/// A bank with one strategy whose version-v model scores exactly
/// round(scores[v-1] * half) / half on the eval set (balanced accuracy over
/// `half` rows per class). Used to replay score sequences through the loop.
struct ScriptedSetup {
  ToyTask train;
  EvalSet eval;
  EvalSet holdout;
  std::vector<Strategy> bank;
};
ScriptedSetup make_scripted(const std::vector<double>& scores, std::size_t half = 10000);

}  // namespace dtnet::autoloop
