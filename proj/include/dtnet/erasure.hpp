#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "dtnet/common.hpp"
#include "dtnet/digest.hpp"
#include "dtnet/gf256.hpp"

namespace dtnet::erasure {

struct CodingParams {
  unsigned data_shards = 4;    // K
  unsigned parity_shards = 2;  // M

  unsigned total() const { return data_shards + parity_shards; }
  bool operator==(const CodingParams&) const = default;
};

enum class ShardKind : std::uint8_t { kData = 0, kParity = 1 };

struct Shard {
  std::uint8_t index = 0;
  ShardKind kind = ShardKind::kData;
  Bytes bytes;
  Digest32 blob_id{};  // SHA-256 of the original blob
  std::uint64_t original_length = 0;
  CodingParams params;
  std::set<NodeId> holders;
};

class ErasureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fewer than K usable shards.
class UnrecoverableError : public ErasureError {
 public:
  using ErasureError::ErasureError;
};

/// Throws std::invalid_argument unless 1 <= K, 1 <= M, K + M <= 255 and every
/// K x K submatrix of the systematic generator is invertible. Results are
/// cached per (K, M).
void validate(const CodingParams& p);

/// Entry (m, j) = (m + 1)^j over GF(2^8); M rows, K columns.
gf256::Matrix vandermonde_parity_matrix(const CodingParams& p);

/// Identity on top of the parity matrix: (K + M) x K.
gf256::Matrix generator_matrix(const CodingParams& p);

/// Splits the zero-padded blob into K data shards and appends M parity shards.
/// Throws std::invalid_argument for an empty blob.
std::vector<Shard> rs_encode(std::span<const std::uint8_t> blob, const CodingParams& p);

/// Rebuilds the blob from any K shards with distinct indices. Verifies the
/// result against the blob id.
Bytes rs_decode(std::span<const Shard> available, const CodingParams& p);

/// Re-derives one shard (data or parity) from any K others.
Shard rebuild_shard(std::span<const Shard> available, const CodingParams& p, std::uint8_t index);

// Shard file layout, all integers little-endian:
//   0   4  magic "DTRS"
//   4   1  format version (1)
//   5   1  K
//   6   1  M
//   7   1  shard index
//   8   1  kind (0 data, 1 parity)
//   9   7  reserved, zero
//   16  8  original blob length
//   24  8  shard payload length
//   32  32 blob id (SHA-256 of the original blob)
//   64  .. payload
inline constexpr std::size_t kShardHeaderSize = 64;
inline constexpr std::uint8_t kShardFormatVersion = 1;

Bytes encode_shard_file(const Shard& s);

/// Throws ErasureError on a bad magic, version, or length.
Shard decode_shard_file(std::span<const std::uint8_t> file);

}  // namespace dtnet::erasure
