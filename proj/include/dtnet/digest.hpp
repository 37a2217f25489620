#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dtnet/common.hpp"

namespace dtnet {

using Bytes = std::vector<std::uint8_t>;
using Digest32 = std::array<std::uint8_t, 32>;

Digest32 sha256(std::span<const std::uint8_t> data);
Digest32 sha256(std::string_view text);

/// HMAC-SHA256 with an arbitrary-length key.
Digest32 hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> message);

std::string to_hex(std::span<const std::uint8_t> data);
Bytes from_hex(std::string_view hex);

/// Constant-time equality. Length mismatch returns false; the loop over bytes
/// never branches on their values.
bool timing_safe_equal(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// Digest of the little-endian IEEE-754 bytes of each parameter.
Digest32 hash_params(const ParamVector& params);

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

/// Incremental SHA-256 used for trace and file digests.
class Sha256Stream {
 public:
  Sha256Stream();
  ~Sha256Stream();
  Sha256Stream(const Sha256Stream&) = delete;
  Sha256Stream& operator=(const Sha256Stream&) = delete;

  void update(std::span<const std::uint8_t> data);
  void update(std::string_view text) { update(as_bytes(text)); }
  Digest32 finish();

 private:
  void* ctx_;
};

}  // namespace dtnet
