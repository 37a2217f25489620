#include <cstdio>
#include <sstream>

#include "dtnet/autoloop.hpp"
#include "dtnet/runners.hpp"

namespace dtnet::scenario {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

AutoloopReport run_autoloop(const Scenario& s) {
  if (s.kind != Kind::kAutoloop) throw ScenarioError(s.name + ": not an autoloop scenario");
  const auto& p = s.autoloop;
  AutoloopReport rep;
  if (p.task == "scripted") {
    auto setup = autoloop::make_scripted(p.scripted_scores);
    rep.result = autoloop::run_autoresearch(setup.train, setup.eval, setup.holdout, setup.bank, p.loop);
  } else {
    Rng rng(s.seed);
    auto data = autoloop::make_pivot_data(rng, p.train_rows, p.eval_rows, p.threshold);
    const auto bank = autoloop::default_bank();
    rep.result = autoloop::run_autoresearch(data.train, data.eval, data.holdout, bank, p.loop);
  }
  const auto& r = rep.result;
  auto& f = rep.output.files;
  std::vector<std::string> violations;

  std::string csv =
      "version,signature,strategies,trials,version_best_strategy,version_best_score,best_strategy,best_score,"
      "best_holdout\n";
  csv += "0,,,0,baseline," + num(r.baseline_score) + ",baseline," + num(r.baseline_score) + ",\n";
  for (const auto& h : r.history) {
    std::string names;
    for (const auto& n : h.strategies) names += (names.empty() ? "" : ";") + n;
    csv += std::to_string(h.version) + "," + h.signature + "," + names + "," + std::to_string(h.trials.size()) + "," +
           h.version_best_strategy + "," + num(h.version_best_score) + "," + h.best_strategy + "," +
           num(h.best_score) + "," + num(h.best_holdout) + "\n";
    char name[48];
    std::snprintf(name, sizeof name, "autoloop/versions/v%03zu.json", h.version);
    f[name] = h.to_json() + "\n";
  }
  f["autoloop/history.csv"] = csv;
  std::string kb;
  for (const auto& i : r.knowledge.entries()) kb += i.to_json() + "\n";
  f["autoloop/knowledge.jsonl"] = kb;

  for (std::size_t i = 1; i < r.scores.size(); ++i) {
    if (r.scores[i] < r.scores[i - 1]) violations.push_back("best score decreased at version " + std::to_string(i));
  }
  if (r.stop == autoloop::StopReason::kConverged && r.scores.size() >= 2 &&
      r.scores.back() - r.scores[r.scores.size() - 2] >= p.loop.convergence.epsilon) {
    violations.push_back("loop stopped while the last improvement was at least epsilon");
  }

  auto& sum = rep.output.summary;
  sum["scenario"] = s.name;
  sum["kind"] = "autoloop";
  sum["seed"] = s.seed;
  sum["task"] = p.task;
  sum["versions"] = r.history.size();
  sum["stop"] = autoloop::stop_reason_name(r.stop);
  sum["baseline_score"] = r.baseline_score;
  sum["best_strategy"] = r.best_strategy;
  sum["best_score"] = r.best_score;
  sum["best_holdout"] = r.best_holdout;
  rep.output.violations = std::move(violations);
  return rep;
}

RunOutput run(const Scenario& s) {
  switch (s.kind) {
    case Kind::kDiloco: return run_diloco(s).output;
    case Kind::kStorage: return run_storage(s).output;
    case Kind::kLedger: return run_ledger(s).output;
    case Kind::kAutoloop: return run_autoloop(s).output;
  }
  throw ScenarioError("unknown scenario kind");
}

}  // namespace dtnet::scenario
