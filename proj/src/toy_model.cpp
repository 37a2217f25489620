#include "dtnet/toy_model.hpp"

#include <cmath>
#include <stdexcept>

namespace dtnet::toy {

namespace {

double dot(std::span<const double> a, const ParamVector& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_dims(const ParamVector& w, const ToyTask& task) {
  task.validate();
  if (w.size() != task.cols) throw std::invalid_argument("parameter length does not match task width");
}

}  // namespace

void ToyTask::validate() const {
  if (cols == 0) throw std::invalid_argument("task has zero columns");
  if (inputs.size() != cols * targets.size()) {
    throw std::invalid_argument("input row count does not match target count");
  }
}

double loss(const ParamVector& w, const ToyTask& task) {
  check_dims(w, task);
  if (task.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < task.rows(); ++i) {
    const double z = dot(task.row(i), w);
    const double y = task.targets[i];
    total += task.loss == LossKind::kSquaredError ? 0.5 * (z - y) * (z - y) : softplus(z) - y * z;
  }
  return total / static_cast<double>(task.rows());
}

std::pair<double, ParamVector> loss_and_gradient(const ParamVector& w, const ToyTask& task) {
  check_dims(w, task);
  ParamVector grad(w.size(), 0.0);
  if (task.rows() == 0) return {0.0, grad};
  double total = 0.0;
  for (std::size_t i = 0; i < task.rows(); ++i) {
    const auto x = task.row(i);
    const double z = dot(x, w);
    const double y = task.targets[i];
    double residual;
    if (task.loss == LossKind::kSquaredError) {
      residual = z - y;
      total += 0.5 * residual * residual;
    } else {
      residual = sigmoid(z) - y;
      total += softplus(z) - y * z;
    }
    for (std::size_t j = 0; j < x.size(); ++j) grad[j] += residual * x[j];
  }
  const double inv_n = 1.0 / static_cast<double>(task.rows());
  for (double& g : grad) g *= inv_n;
  return {total * inv_n, grad};
}

ToyTask slice(const ToyTask& task, std::size_t begin, std::size_t end) {
  if (begin > end || end > task.rows()) throw std::out_of_range("slice bounds");
  ToyTask out;
  out.cols = task.cols;
  out.loss = task.loss;
  out.inputs.assign(task.inputs.begin() + static_cast<std::ptrdiff_t>(begin * task.cols),
                    task.inputs.begin() + static_cast<std::ptrdiff_t>(end * task.cols));
  out.targets.assign(task.targets.begin() + static_cast<std::ptrdiff_t>(begin),
                     task.targets.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

ToyTask concat(std::span<const ToyTask> parts) {
  if (parts.empty()) throw std::invalid_argument("concat of zero tasks");
  ToyTask out;
  out.cols = parts.front().cols;
  out.loss = parts.front().loss;
  for (const auto& p : parts) {
    if (p.cols != out.cols || p.loss != out.loss) throw std::invalid_argument("incompatible tasks");
    out.inputs.insert(out.inputs.end(), p.inputs.begin(), p.inputs.end());
    out.targets.insert(out.targets.end(), p.targets.begin(), p.targets.end());
  }
  return out;
}

ToyTask make_regression(Rng& rng, std::size_t rows, const ParamVector& w_true, double noise_std) {
  ToyTask t;
  t.cols = w_true.size();
  t.loss = LossKind::kSquaredError;
  t.inputs.reserve(rows * t.cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double y = 0.0;
    for (std::size_t j = 0; j < t.cols; ++j) {
      const double x = rng.normal();
      t.inputs.push_back(x);
      y += x * w_true[j];
    }
    t.targets.push_back(y + rng.normal(0.0, noise_std));
  }
  return t;
}

ToyTask make_classification(Rng& rng, std::size_t rows, const ParamVector& w_true) {
  ToyTask t;
  t.cols = w_true.size();
  t.loss = LossKind::kLogistic;
  for (std::size_t i = 0; i < rows; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < t.cols; ++j) {
      const double x = rng.normal();
      t.inputs.push_back(x);
      z += x * w_true[j];
    }
    t.targets.push_back(rng.uniform() < sigmoid(z) ? 1.0 : 0.0);
  }
  return t;
}

std::pair<ParamVector, InnerOptimizerState> inner_step(const ParamVector& w, const ParamVector& g,
                                                       InnerOptimizerState s) {
  if (g.size() != w.size() || s.first_moment.size() != w.size() || s.second_moment.size() != w.size()) {
    throw std::invalid_argument("inner_step: shape mismatch");
  }
  s.step += 1;
  const double t = static_cast<double>(s.step);
  const double bias1 = 1.0 - std::pow(s.beta1, t);
  const double bias2 = 1.0 - std::pow(s.beta2, t);
  ParamVector out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    s.first_moment[i] = s.beta1 * s.first_moment[i] + (1.0 - s.beta1) * g[i];
    s.second_moment[i] = s.beta2 * s.second_moment[i] + (1.0 - s.beta2) * g[i] * g[i];
    const double m_hat = s.first_moment[i] / bias1;
    const double v_hat = s.second_moment[i] / bias2;
    out[i] = w[i] - s.learning_rate * (m_hat / (std::sqrt(v_hat) + s.epsilon) + s.weight_decay * w[i]);
  }
  return {std::move(out), std::move(s)};
}

ParamVector train(ParamVector w, const ToyTask& task, InnerOptimizerState& state, std::size_t steps) {
  for (std::size_t k = 0; k < steps; ++k) {
    auto [l, g] = loss_and_gradient(w, task);
    (void)l;
    auto [next, next_state] = inner_step(w, g, std::move(state));
    w = std::move(next);
    state = std::move(next_state);
  }
  return w;
}

}  // namespace dtnet::toy
