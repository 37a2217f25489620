#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace dtnet::gf256 {

/// Field polynomial x^8 + x^4 + x^3 + x^2 + 1.
inline constexpr unsigned kPolynomial = 0x11D;

using Byte = std::uint8_t;

inline constexpr Byte add(Byte a, Byte b) { return a ^ b; }

/// Carry-less multiply reduced mod kPolynomial, bit by bit. Slow; used to
/// build and check the log tables.
Byte mul_slow(Byte a, Byte b);

/// Log/antilog table multiply. Bit-identical to mul_slow.
Byte mul(Byte a, Byte b);

/// Multiplicative inverse. Throws std::domain_error for zero.
Byte inv(Byte a);

Byte div(Byte a, Byte b);

Byte pow(Byte base, unsigned exponent);

/// Row-major square or rectangular matrix over GF(2^8).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Byte> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0) {}

  Byte& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  Byte at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  static Matrix identity(std::size_t n);
  Matrix operator*(const Matrix& rhs) const;
  bool operator==(const Matrix&) const = default;
};

/// Gauss-Jordan inversion into `out`. Returns false when `m` is singular.
bool invert(const Matrix& m, Matrix& out);

}  // namespace dtnet::gf256
