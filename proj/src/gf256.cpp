#include "dtnet/gf256.hpp"

#include <stdexcept>

namespace dtnet::gf256 {

namespace {

struct Tables {
  std::array<Byte, 512> exp{};
  std::array<int, 256> log{};

  Tables() {
    // 2 generates the multiplicative group under 0x11D.
    Byte x = 1;
    for (int i = 0; i < 255; ++i) {
      exp[i] = x;
      log[x] = i;
      x = mul_slow(x, 2);
    }
    for (int i = 255; i < 512; ++i) exp[i] = exp[i - 255];
    log[0] = -1;
  }
};

const Tables& tables() {
  static const Tables t;
  return t;
}

}  // namespace

Byte mul_slow(Byte a, Byte b) {
  unsigned acc = 0;
  unsigned aa = a;
  for (unsigned bb = b; bb != 0; bb >>= 1) {
    if (bb & 1u) acc ^= aa;
    aa <<= 1;
    if (aa & 0x100u) aa ^= kPolynomial;
  }
  return static_cast<Byte>(acc);
}

Byte mul(Byte a, Byte b) {
  if (a == 0 || b == 0) return 0;
  const auto& t = tables();
  return t.exp[t.log[a] + t.log[b]];
}

Byte inv(Byte a) {
  if (a == 0) throw std::domain_error("gf256: zero has no inverse");
  const auto& t = tables();
  return t.exp[255 - t.log[a]];
}

Byte div(Byte a, Byte b) { return mul(a, inv(b)); }

Byte pow(Byte base, unsigned exponent) {
  Byte result = 1;
  for (unsigned i = 0; i < exponent; ++i) result = mul(result, base);
  return result;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1;
  return m;
}

Matrix Matrix::operator*(const Matrix& rhs) const {
  if (cols != rhs.rows) throw std::invalid_argument("gf256 matrix shape mismatch");
  Matrix out(rows, rhs.cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < cols; ++k) {
      const Byte a = at(i, k);
      if (a == 0) continue;
      for (std::size_t j = 0; j < rhs.cols; ++j) out.at(i, j) ^= mul(a, rhs.at(k, j));
    }
  }
  return out;
}

bool invert(const Matrix& m, Matrix& out) {
  if (m.rows != m.cols) throw std::invalid_argument("gf256: cannot invert a non-square matrix");
  const std::size_t n = m.rows;
  Matrix work = m;
  out = Matrix::identity(n);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    while (pivot < n && work.at(pivot, col) == 0) ++pivot;
    if (pivot == n) return false;
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(work.at(pivot, j), work.at(col, j));
        std::swap(out.at(pivot, j), out.at(col, j));
      }
    }
    const Byte scale = inv(work.at(col, col));
    for (std::size_t j = 0; j < n; ++j) {
      work.at(col, j) = mul(work.at(col, j), scale);
      out.at(col, j) = mul(out.at(col, j), scale);
    }
    for (std::size_t r = 0; r < n; ++r) {
      const Byte f = work.at(r, col);
      if (r == col || f == 0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        work.at(r, j) ^= mul(f, work.at(col, j));
        out.at(r, j) ^= mul(f, out.at(col, j));
      }
    }
  }
  return true;
}

}  // namespace dtnet::gf256
