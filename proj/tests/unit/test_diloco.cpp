#include "doctest.h"

#include <stdexcept>
#include <cmath>

#include "dtnet/diloco.hpp"
#include "dtnet/random.hpp"

using namespace dtnet;
using namespace dtnet::diloco;

namespace {

PseudoGradient pg(const ParamVector& base, const ParamVector& local, const NodeId& id, std::size_t stale = 0) {
  return pseudo_gradient(base, local, {id, 1, stale, 0.0});
}

}  // namespace

TEST_CASE("pseudo-gradient is base minus local") {
  CHECK(pg({1, 2}, {0.5, 1.5}, "a").delta == ParamVector{0.5, 0.5});
  CHECK(pg({1, 2}, {1, 2}, "a").delta == ParamVector{0, 0});
  ParamVector base{3, -1, 0.25}, g{0.5, 0.25, -2};
  ParamVector local{base[0] - g[0], base[1] - g[1], base[2] - g[2]};
  CHECK(pg(base, local, "a").delta == g);
  CHECK_THROWS_AS(pg({1}, {1, 2}, "a"), std::invalid_argument);
}

TEST_CASE("staleness factor") {
  CHECK(staleness_factor(0) == 1.0);
  CHECK(staleness_factor(1) == 0.5);
  CHECK(staleness_factor(9) == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("symmetric FedAvg example") {
  ParamVector base{1, 1};
  std::vector<PseudoGradient> g{pg(base, {0, 0}, "a"), pg(base, {2, 2}, "b")};
  auto w = normalize_weights({"a", "b"}, {});
  auto [merged, st] = outer_update(base, g, w, OuterOptimizerState::for_size(2, 1.0, 0.0));
  CHECK(merged == ParamVector{1, 1});
}

TEST_CASE("single node FedAvg returns its local parameters") {
  ParamVector base{0.5, -3}, local{0.25, 4};
  auto [merged, st] = outer_update(base, {pg(base, local, "a")}, {{"a", 1.0}},
                                   OuterOptimizerState::for_size(2, 1.0, 0.0));
  CHECK(merged == local);
}

TEST_CASE("two Nesterov steps follow the closed form") {
  const double eta = 0.7, mu = 0.9;
  ParamVector base{0, 0}, a{1, -2};
  auto st = OuterOptimizerState::for_size(2, eta, mu);
  PseudoGradient g{a, "a", 1, 0, 0};
  auto [t1, s1] = outer_update(base, {g}, {{"a", 1.0}}, st);
  auto [t2, s2] = outer_update(t1, {g}, {{"a", 1.0}}, s1);
  for (std::size_t j = 0; j < 2; ++j) {
    // First step: eta*(1 + mu)*a. Second: eta*(1 + mu + mu^2)*a.
    CHECK(t1[j] == doctest::Approx(-eta * 1.9 * a[j]).epsilon(1e-14));
    CHECK(t2[j] - t1[j] == doctest::Approx(-eta * 2.71 * a[j]).epsilon(1e-14));
    CHECK(s2.momentum_buffer[j] == doctest::Approx(1.9 * a[j]).epsilon(1e-14));
  }
}

TEST_CASE("staleness is applied before momentum") {
  ParamVector base{0};
  PseudoGradient g{{2.0}, "a", 1, 1, 0};
  auto [t, s] = outer_update(base, {g}, {{"a", 1.0}}, OuterOptimizerState::for_size(1, 1.0, 0.5));
  CHECK(s.momentum_buffer[0] == 1.0);
  CHECK(t[0] == -1.5);
}

TEST_CASE("FedAvg reduction on random cases") {
  Rng rng(21);
  for (int c = 0; c < 100; ++c) {
    const std::size_t n = 1 + rng.below(6), d = 1 + rng.below(10);
    ParamVector base(d);
    for (auto& x : base) x = rng.normal();
    std::vector<PseudoGradient> grads;
    std::vector<ContributionWeight> w;
    std::vector<ParamVector> locals;
    for (std::size_t i = 0; i < n; ++i) {
      ParamVector local(d);
      for (auto& x : local) x = rng.normal();
      locals.push_back(local);
      grads.push_back(pg(base, local, "n" + std::to_string(i)));
      w.push_back({"n" + std::to_string(i), 1.0 / n});
    }
    auto [merged, st] = outer_update(base, grads, w, OuterOptimizerState::for_size(d, 1.0, 0.0));
    for (std::size_t j = 0; j < d; ++j) {
      double avg = 0;
      for (std::size_t i = 0; i < n; ++i) avg += locals[i][j] / n;
      CHECK(std::fabs(merged[j] - avg) <= 1e-12);
    }
  }
}

TEST_CASE("linearity in one delta and the zero fixed point") {
  ParamVector base{1, 2, 3};
  PseudoGradient a{{0.5, 1, -1}, "a", 1, 0, 0}, b{{1, 0, 2}, "b", 1, 0, 0};
  std::vector<ContributionWeight> w{{"a", 0.25}, {"b", 0.75}};
  auto st = OuterOptimizerState::for_size(3, 1.0, 0.0);
  auto m1 = outer_update(base, {a, b}, w, st).first;
  PseudoGradient a3 = a;
  for (auto& x : a3.delta) x *= 3;
  auto m3 = outer_update(base, {a3, b}, w, st).first;
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK((base[j] - m3[j]) - (base[j] - m1[j]) == doctest::Approx(2 * 0.25 * a.delta[j]));
  }
  PseudoGradient z{{0, 0, 0}, "a", 1, 0, 0};
  CHECK(outer_update(base, {z}, {{"a", 1.0}}, OuterOptimizerState::for_size(3)).first == base);
}

TEST_CASE("invalid aggregation inputs are rejected") {
  ParamVector base{0, 0};
  PseudoGradient a{{1, 1}, "a", 1, 0, 0};
  auto st = OuterOptimizerState::for_size(2);
  CHECK_THROWS_AS(outer_update(base, {}, {}, st), std::invalid_argument);
  CHECK_THROWS_AS(outer_update(base, {a}, {{"b", 1.0}}, st), std::invalid_argument);
  CHECK_THROWS_AS(outer_update(base, {a}, {{"a", 0.5}}, st), std::invalid_argument);
  PseudoGradient bad{{1}, "a", 1, 0, 0};
  CHECK_THROWS_AS(outer_update(base, {bad}, {{"a", 1.0}}, st), std::invalid_argument);
}

TEST_CASE("weights normalize scores or fall back to uniform") {
  auto w = normalize_weights({"a", "b"}, {{"a", 1.0}, {"b", 3.0}});
  CHECK(w[0].weight == 0.25);
  CHECK(w[1].weight == 0.75);
  auto u = normalize_weights({"a", "b", "c", "d"}, {{"a", 0.0}});
  for (const auto& x : u) CHECK(x.weight == 0.25);
}

TEST_CASE("merge record serializes one JSON line") {
  MergeRecord r;
  r.round = 3;
  r.participants = {"a", "b"};
  r.weights = {0.5, 0.5};
  auto line = r.to_json_line();
  CHECK(line.find('\n') == std::string::npos);
  CHECK(line.find("\"round\":3") != std::string::npos);
}
