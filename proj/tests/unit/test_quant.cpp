#include "doctest.h"

#include <stdexcept>
#include <cmath>
#include <vector>

#include "dtnet/quant.hpp"
#include "dtnet/random.hpp"

using namespace dtnet;
using namespace dtnet::quant;

namespace {

// Scalar reference: long double accumulation is enough to decide the
// correctly rounded mean for the small tensors used here.
double oracle_mean_abs(const std::vector<double>& w) {
  long double s = 0;
  for (double x : w) s += std::fabs(static_cast<long double>(x));
  return static_cast<double>(s / w.size());
}

std::int8_t oracle_round_clamp(double v, int lo, int hi) {
  double r = v >= 0 ? std::floor(v + 0.5) : -std::floor(-v + 0.5);
  if (r < lo) r = lo;
  if (r > hi) r = hi;
  return static_cast<std::int8_t>(r);
}

}  // namespace

TEST_CASE("ternary example vector") {
  std::vector<double> w{0.4, -0.2, 0.1, -0.5};
  auto t = quantize_weights(w);
  CHECK(t.values == std::vector<std::int8_t>{1, -1, 0, -1});
  CHECK(t.scale == oracle_mean_abs(w));
  CHECK(t.scale == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("zero tensors use the guard scale") {
  std::vector<double> z{0, 0, 0};
  auto t = quantize_weights(z);
  CHECK(t.values == std::vector<std::int8_t>{0, 0, 0});
  CHECK(t.scale == kZeroScaleGuard);
  auto a = quantize_activations(std::vector<double>{0, 0});
  CHECK(a.values == std::vector<std::int8_t>{0, 0});
}

TEST_CASE("constant tensors round trip exactly") {
  for (double c : {1e-300, 0.1, 0.3, 1.0 / 3.0, 7.25, 1e300}) {
    std::vector<double> w(5, c);
    auto t = quantize_weights(w);
    CHECK(t.scale == c);
    CHECK(t.values == std::vector<std::int8_t>(5, 1));
    CHECK(dequantize(t) == w);
  }
}

TEST_CASE("activation example and tie rounding") {
  auto a = quantize_activations(std::vector<double>{1.0, -0.5});
  CHECK(a.values == std::vector<std::int8_t>{127, -64});
  CHECK(a.scale == 127.0);
  auto s = quantize_activations(std::vector<double>{2.5});
  CHECK(s.values == std::vector<std::int8_t>{127});
}

TEST_CASE("dequantize definition") {
  TernaryTensor t{{1, -1, 0}, 0.5};
  CHECK(dequantize(t) == std::vector<double>{0.5, -0.5, 0.0});
}

TEST_CASE("random tensors match the scalar oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> w(1 + rng.below(40));
    for (auto& x : w) x = rng.normal(0, 1 + trial % 7);
    auto t = quantize_weights(w);
    REQUIRE(t.scale == oracle_mean_abs(w));
    for (std::size_t i = 0; i < w.size(); ++i) {
      REQUIRE(t.values[i] == oracle_round_clamp(w[i] / t.scale, -1, 1));
    }
    // Error bound: half a step inside the range, clamp loss outside it.
    auto d = dequantize(t);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double clamp_loss = std::max(0.0, std::fabs(w[i]) - 1.5 * t.scale);
      CHECK(std::fabs(d[i] - w[i]) <= t.scale / 2 + clamp_loss + 1e-12 * std::fabs(w[i]));
    }

    auto a = quantize_activations(w);
    double mx = 0;
    for (double x : w) mx = std::max(mx, std::fabs(x));
    REQUIRE(a.scale == 127.0 / mx);
    bool hit = false;
    for (std::size_t i = 0; i < w.size(); ++i) {
      REQUIRE(a.values[i] == oracle_round_clamp(w[i] * a.scale, -127, 127));
      hit = hit || std::abs(a.values[i]) == 127;
    }
    CHECK(hit);
  }
}

TEST_CASE("exact sum is correctly rounded") {
  ExactSum s;
  s.add(1e100);
  s.add(1.0);
  s.add(-1e100);
  CHECK(s.round() == 1.0);
  ExactSum t;
  for (int i = 0; i < 10; ++i) t.add(0.1);
  CHECK(t.round() == 1.0);
}

TEST_CASE("tensor hash depends on values and scale") {
  TernaryTensor a{{1, 0, -1}, 0.5};
  TernaryTensor b{{1, 0, -1}, 0.25};
  TernaryTensor c{{1, 0, 1}, 0.5};
  CHECK(hash_tensor(a) == hash_tensor(a));
  CHECK(hash_tensor(a) != hash_tensor(b));
  CHECK(hash_tensor(a) != hash_tensor(c));
}
