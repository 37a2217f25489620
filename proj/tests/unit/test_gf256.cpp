#include "doctest.h"

#include <stdexcept>

#include "dtnet/gf256.hpp"
#include "dtnet/random.hpp"

using namespace dtnet;
using namespace dtnet::gf256;

namespace {

// Independent table oracle: x * 2^k built by repeated doubling with reduction.
Byte oracle_mul(Byte a, Byte b) {
  Byte acc = 0, x = a;
  for (int k = 0; k < 8; ++k) {
    if (b & (1u << k)) acc ^= x;
    x = static_cast<Byte>((x << 1) ^ ((x & 0x80) ? (kPolynomial & 0xFF) : 0));
  }
  return acc;
}

}  // namespace

TEST_CASE("named products") {
  CHECK(mul(2, 128) == 0x1D);
  for (int x = 0; x < 256; ++x) CHECK(mul(1, static_cast<Byte>(x)) == x);
}

TEST_CASE("table multiply matches both oracles on all pairs") {
  for (int a = 0; a < 256; ++a) {
    for (int b = 0; b < 256; ++b) {
      const auto x = static_cast<Byte>(a), y = static_cast<Byte>(b);
      REQUIRE(mul(x, y) == oracle_mul(x, y));
      REQUIRE(mul_slow(x, y) == mul(x, y));
    }
  }
}

TEST_CASE("every nonzero element has an inverse") {
  for (int a = 1; a < 256; ++a) {
    const auto x = static_cast<Byte>(a);
    REQUIRE(mul(x, inv(x)) == 1);
    REQUIRE(gf256::div(1, x) == inv(x));
  }
  CHECK_THROWS_AS(inv(0), std::domain_error);
}

TEST_CASE("field axioms on random triples") {
  Rng rng(2);
  for (int i = 0; i < 100000; ++i) {
    const auto a = static_cast<Byte>(rng.below(256)), b = static_cast<Byte>(rng.below(256)),
               c = static_cast<Byte>(rng.below(256));
    REQUIRE(mul(a, add(b, c)) == add(mul(a, b), mul(a, c)));
    REQUIRE(mul(a, mul(b, c)) == mul(mul(a, b), c));
    REQUIRE(mul(a, b) == mul(b, a));
  }
}

TEST_CASE("pow agrees with repeated multiplication") {
  for (int base = 0; base < 256; base += 17) {
    Byte acc = 1;
    for (unsigned e = 0; e < 20; ++e) {
      CHECK(gf256::pow(static_cast<Byte>(base), e) == acc);
      acc = mul(acc, static_cast<Byte>(base));
    }
  }
  // 2 generates the multiplicative group.
  CHECK(gf256::pow(2, 255) == 1);
  for (unsigned e = 1; e < 255; ++e) CHECK(gf256::pow(2, e) != 1);
}

TEST_CASE("matrix inversion") {
  Rng rng(4);
  int singular = 0;
  for (int t = 0; t < 200; ++t) {
    Matrix m(4, 4);
    for (auto& v : m.data) v = static_cast<Byte>(rng.below(256));
    Matrix inv_m;
    if (!invert(m, inv_m)) {
      ++singular;
      continue;
    }
    CHECK(m * inv_m == Matrix::identity(4));
    CHECK(inv_m * m == Matrix::identity(4));
  }
  CHECK(singular < 20);
  Matrix z(2, 2);
  Matrix out;
  CHECK_FALSE(invert(z, out));
}
