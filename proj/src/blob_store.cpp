#include "dtnet/blob_store.hpp"

#include <bit>
#include <stdexcept>

namespace dtnet {

Bytes encode_params(const ParamVector& params) {
  Bytes out;
  out.reserve(params.size() * 8);
  for (double v : params) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return out;
}

ParamVector decode_params(const Bytes& bytes) {
  if (bytes.size() % 8 != 0) throw std::invalid_argument("parameter blob length is not a multiple of 8");
  ParamVector out(bytes.size() / 8);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[k * 8 + i]) << (8 * i);
    out[k] = std::bit_cast<double>(bits);
  }
  return out;
}

}  // namespace dtnet
