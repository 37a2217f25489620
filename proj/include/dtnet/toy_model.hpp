#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "dtnet/common.hpp"
#include "dtnet/random.hpp"

namespace dtnet::toy {

enum class LossKind { kSquaredError, kLogistic };

/// Linear model data: `inputs` is row-major with `cols` features per row.
/// Logistic targets are 0/1 labels.
struct ToyTask {
  std::vector<double> inputs;
  std::size_t cols = 0;
  std::vector<double> targets;
  LossKind loss = LossKind::kSquaredError;

  std::size_t rows() const { return targets.size(); }
  std::span<const double> row(std::size_t i) const { return {inputs.data() + i * cols, cols}; }

  /// Throws std::invalid_argument when inputs and targets disagree.
  void validate() const;
};

/// Mean loss over rows: 0.5*(x.w - y)^2 or the logistic negative log-likelihood.
double loss(const ParamVector& w, const ToyTask& task);

/// Loss and its exact analytic gradient.
std::pair<double, ParamVector> loss_and_gradient(const ParamVector& w, const ToyTask& task);

/// Rows [begin, end) of a task.
ToyTask slice(const ToyTask& task, std::size_t begin, std::size_t end);

/// Concatenate tasks with equal width and loss kind.
ToyTask concat(std::span<const ToyTask> parts);

/// y = x.w_true + noise, x ~ N(0, 1).
ToyTask make_regression(Rng& rng, std::size_t rows, const ParamVector& w_true, double noise_std);

/// Labels drawn from sigmoid(x.w_true).
ToyTask make_classification(Rng& rng, std::size_t rows, const ParamVector& w_true);

/// AdamW state. Defaults follow the inner-loop configuration used for merging
/// experiments (beta2 = 0.98).
struct InnerOptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::size_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double weight_decay = 0.01;
  double epsilon = 1e-8;

  static InnerOptimizerState for_size(std::size_t n) {
    InnerOptimizerState s;
    s.first_moment.assign(n, 0.0);
    s.second_moment.assign(n, 0.0);
    return s;
  }
};

/// One bias-corrected AdamW step with decoupled weight decay:
///   w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + wd * w)
std::pair<ParamVector, InnerOptimizerState> inner_step(const ParamVector& w, const ParamVector& g,
                                                       InnerOptimizerState s);

/// Runs `steps` full-batch inner steps; returns the final parameters.
ParamVector train(ParamVector w, const ToyTask& task, InnerOptimizerState& state, std::size_t steps);

}  // namespace dtnet::toy
