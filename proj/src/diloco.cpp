#include "dtnet/diloco.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace dtnet::diloco {

PseudoGradient pseudo_gradient(const ParamVector& theta_base, const ParamVector& theta_local,
                               PseudoGradientMeta meta) {
  if (theta_base.size() != theta_local.size()) {
    throw std::invalid_argument("pseudo_gradient: length mismatch");
  }
  PseudoGradient g;
  g.delta.resize(theta_base.size());
  for (std::size_t i = 0; i < theta_base.size(); ++i) g.delta[i] = theta_base[i] - theta_local[i];
  g.source = std::move(meta.source);
  g.inner_steps = meta.inner_steps;
  g.staleness = meta.staleness;
  g.local_loss = meta.local_loss;
  return g;
}

double staleness_factor(std::size_t staleness) { return 1.0 / (1.0 + static_cast<double>(staleness)); }

std::vector<ContributionWeight> normalize_weights(const std::vector<NodeId>& nodes,
                                                  const std::map<NodeId, double>& scores) {
  std::vector<ContributionWeight> out;
  double total = 0.0;
  for (const auto& n : nodes) {
    auto it = scores.find(n);
    const double s = it == scores.end() ? 0.0 : it->second;
    if (s < 0.0 || !std::isfinite(s)) throw std::invalid_argument("negative or non-finite score");
    out.push_back({n, s});
    total += s;
  }
  if (total == 0.0) {
    for (auto& w : out) w.weight = 1.0 / static_cast<double>(out.size());
  } else {
    for (auto& w : out) w.weight /= total;
  }
  return out;
}

std::pair<ParamVector, OuterOptimizerState> outer_update(const ParamVector& theta_base,
                                                         const std::vector<PseudoGradient>& grads,
                                                         const std::vector<ContributionWeight>& weights,
                                                         OuterOptimizerState state) {
  if (grads.empty()) throw std::invalid_argument("outer_update: empty gradient set");
  if (state.momentum_buffer.empty()) state.momentum_buffer.assign(theta_base.size(), 0.0);
  if (state.momentum_buffer.size() != theta_base.size()) {
    throw std::invalid_argument("outer_update: momentum buffer length mismatch");
  }

  std::map<NodeId, double> by_node;
  double total = 0.0;
  for (const auto& w : weights) {
    if (w.weight < 0.0) throw std::invalid_argument("outer_update: negative weight");
    by_node[w.node] = w.weight;
  }
  for (const auto& g : grads) {
    auto it = by_node.find(g.source);
    if (it == by_node.end()) throw std::invalid_argument("outer_update: missing weight for " + g.source);
    total += it->second;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw std::invalid_argument("outer_update: weights not normalized");

  ParamVector aggregate(theta_base.size(), 0.0);
  for (const auto& g : grads) {
    if (g.delta.size() != theta_base.size()) throw std::invalid_argument("outer_update: delta length mismatch");
    const double coeff = by_node.at(g.source) * staleness_factor(g.staleness);
    for (std::size_t i = 0; i < aggregate.size(); ++i) aggregate[i] += coeff * g.delta[i];
  }

  ParamVector next(theta_base.size());
  for (std::size_t i = 0; i < next.size(); ++i) {
    double& buf = state.momentum_buffer[i];
    buf = state.momentum * buf + aggregate[i];
    next[i] = theta_base[i] - state.learning_rate * (aggregate[i] + state.momentum * buf);
  }
  return {std::move(next), std::move(state)};
}

quant::TernaryTensor requantize_after_merge(const ParamVector& theta) { return quant::quantize_weights(theta); }

std::string MergeRecord::to_json_line() const {
  nlohmann::ordered_json j;
  j["round"] = round;
  j["participants"] = participants;
  j["weights"] = weights;
  j["pre_loss"] = pre_loss;
  j["post_loss"] = post_loss;
  j["merged_hash"] = merged_hash;
  j["ternary_hash"] = ternary_hash;
  return j.dump();
}

}  // namespace dtnet::diloco
