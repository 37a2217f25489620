#include "dtnet/quant.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dtnet::quant {

void ExactSum::add(double x) {
  std::size_t i = 0;
  for (double y : partials_) {
    if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
    const double hi = x + y;
    const double lo = y - (hi - x);
    if (lo != 0.0) partials_[i++] = lo;
    x = hi;
  }
  partials_.resize(i);
  partials_.push_back(x);
}

double ExactSum::round() const {
  std::size_t n = partials_.size();
  if (n == 0) return 0.0;
  double hi = partials_[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials_[--n];
    hi = x + y;
    lo = y - (hi - x);
    if (lo != 0.0) break;
  }
  // Half-way case: the next partial decides the direction.
  if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

namespace {

// sign(multiplier * S - sum_k c_k * n), evaluated exactly.
int residual_sign(const ExactSum& sum, int multiplier, std::initializer_list<double> candidates,
                  double n) {
  ExactSum e;
  for (int m = 0; m < multiplier; ++m) {
    for (double p : sum.partials()) e.add(p);
  }
  for (double c : candidates) {
    const double hi = c * n;
    const double lo = std::fma(c, n, -hi);
    e.add(-hi);
    e.add(-lo);
  }
  const double r = e.round();
  return (r > 0.0) - (r < 0.0);
}

double next_up(double x) { return std::nextafter(x, std::numeric_limits<double>::infinity()); }
double next_down(double x) { return std::nextafter(x, -std::numeric_limits<double>::infinity()); }

std::int8_t round_clamp(double x, double lo, double hi) {
  return static_cast<std::int8_t>(std::clamp(std::round(x), lo, hi));
}

}  // namespace

double mean_abs(std::span<const double> x) {
  if (x.empty()) return 0.0;
  ExactSum sum;
  for (double v : x) sum.add(std::fabs(v));
  const double approx = sum.round();
  if (approx == 0.0) return 0.0;
  if (!std::isfinite(approx)) throw std::domain_error("mean_abs: sum overflows");

  const double n = static_cast<double>(x.size());
  // approx / n is within one ulp of the true mean; bracket it exactly.
  double q = approx / n;
  while (residual_sign(sum, 1, {q}, n) < 0) q = next_down(q);
  while (residual_sign(sum, 1, {next_up(q)}, n) >= 0) q = next_up(q);
  if (residual_sign(sum, 1, {q}, n) == 0) return q;

  const double up = next_up(q);
  const int side = residual_sign(sum, 2, {q, up}, n);
  if (side < 0) return q;
  if (side > 0) return up;
  return (std::bit_cast<std::uint64_t>(q) & 1u) == 0 ? q : up;
}

TernaryTensor quantize_weights(std::span<const double> w) {
  TernaryTensor out;
  out.values.resize(w.size(), 0);
  const double alpha = mean_abs(w);
  if (alpha == 0.0) {
    out.scale = kZeroScaleGuard;
    return out;
  }
  out.scale = alpha;
  for (std::size_t i = 0; i < w.size(); ++i) out.values[i] = round_clamp(w[i] / alpha, -1.0, 1.0);
  return out;
}

QuantActivations quantize_activations(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("quantize_activations: empty input");
  QuantActivations out;
  out.values.resize(x.size(), 0);
  double max_abs = 0.0;
  for (double v : x) max_abs = std::max(max_abs, std::fabs(v));
  if (max_abs == 0.0) {
    out.scale = kZeroScaleGuard;
    return out;
  }
  out.scale = 127.0 / max_abs;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.values[i] = round_clamp(x[i] * out.scale, -127.0, 127.0);
  }
  return out;
}

ParamVector dequantize(const TernaryTensor& t) {
  ParamVector out(t.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(t.values[i]) * t.scale;
  return out;
}

Digest32 hash_tensor(const TernaryTensor& t) {
  Sha256Stream s;
  s.update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(t.values.data()),
                                         t.values.size()));
  const auto bits = std::bit_cast<std::uint64_t>(t.scale);
  std::uint8_t le[8];
  for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(bits >> (8 * i));
  s.update(std::span<const std::uint8_t>(le, 8));
  return s.finish();
}

}  // namespace dtnet::quant
