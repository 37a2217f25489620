#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dtnet/common.hpp"
#include "dtnet/quant.hpp"

namespace dtnet::diloco {

/// Delta = theta_base - theta_local for one node's H inner steps.
struct PseudoGradient {
  ParamVector delta;
  NodeId source;
  std::size_t inner_steps = 0;
  std::size_t staleness = 0;  // outer rounds since the base checkpoint
  double local_loss = 0.0;
};

struct PseudoGradientMeta {
  NodeId source;
  std::size_t inner_steps = 1;
  std::size_t staleness = 0;
  double local_loss = 0.0;
};

/// Outer SGD with Nesterov momentum. The recurrence is
///   buf   <- momentum * buf + aggregate
///   theta <- theta - lr * (aggregate + momentum * buf)
/// With momentum = 0 this is plain SGD on the aggregate.
struct OuterOptimizerState {
  ParamVector momentum_buffer;
  double learning_rate = 0.7;
  double momentum = 0.9;

  static OuterOptimizerState for_size(std::size_t n, double lr = 0.7, double momentum = 0.9) {
    return {ParamVector(n, 0.0), lr, momentum};
  }
};

struct ContributionWeight {
  NodeId node;
  double weight = 0.0;
};

PseudoGradient pseudo_gradient(const ParamVector& theta_base, const ParamVector& theta_local,
                               PseudoGradientMeta meta);

/// 1 / (1 + staleness).
double staleness_factor(std::size_t staleness);

/// Scales non-negative scores to sum to one. All-zero or empty scores fall back
/// to uniform weights over `nodes`.
std::vector<ContributionWeight> normalize_weights(const std::vector<NodeId>& nodes,
                                                  const std::map<NodeId, double>& scores);

/// aggregate = sum_i w_i * staleness_factor(s_i) * delta_i, then one Nesterov step.
/// Throws std::invalid_argument for an empty gradient set, a gradient without a
/// weight, mismatched lengths, or weights that do not sum to one.
std::pair<ParamVector, OuterOptimizerState> outer_update(const ParamVector& theta_base,
                                                         const std::vector<PseudoGradient>& grads,
                                                         const std::vector<ContributionWeight>& weights,
                                                         OuterOptimizerState state);

/// Servable ternary artifact for a merged checkpoint.
quant::TernaryTensor requantize_after_merge(const ParamVector& theta);

/// One line of the merge log.
struct MergeRecord {
  std::size_t round = 0;
  std::vector<NodeId> participants;
  std::vector<double> weights;
  double pre_loss = 0.0;
  double post_loss = 0.0;
  std::string merged_hash;    // hex digest of the float64 parameters
  std::string ternary_hash;   // hex digest of the requantized tensor

  std::string to_json_line() const;
};

}  // namespace dtnet::diloco
