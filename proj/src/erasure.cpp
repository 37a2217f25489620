#include "dtnet/erasure.hpp"

#include <algorithm>
#include <cstring>
#include <map>
#include <mutex>
#include <string>
#include <utility>

namespace dtnet::erasure {

namespace {

double choose(unsigned n, unsigned k) {
  double r = 1.0;
  for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Calls f(subset) for every k-subset of {0..n-1}, stopping if f returns false.
template <typename F>
bool for_each_subset(unsigned n, unsigned k, F&& f) {
  std::vector<unsigned> idx(k);
  for (unsigned i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    if (!f(idx)) return false;
    int i = static_cast<int>(k) - 1;
    while (i >= 0 && idx[i] == n - k + static_cast<unsigned>(i)) --i;
    if (i < 0) return true;
    ++idx[i];
    for (unsigned j = static_cast<unsigned>(i) + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

// A K x K submatrix of [I; P] built from rows R is invertible iff the minor of
// P on (parity rows in R) x (data columns missing from R) is. Checking every
// square minor of P covers every loss pattern.
bool all_minors_invertible(const CodingParams& p) {
  const auto parity = vandermonde_parity_matrix(p);
  const unsigned max_size = std::min(p.data_shards, p.parity_shards);
  for (unsigned s = 1; s <= max_size; ++s) {
    const bool ok = for_each_subset(p.parity_shards, s, [&](const std::vector<unsigned>& rows) {
      return for_each_subset(p.data_shards, s, [&](const std::vector<unsigned>& cols) {
        gf256::Matrix minor(s, s), unused;
        for (unsigned r = 0; r < s; ++r)
          for (unsigned c = 0; c < s; ++c) minor.at(r, c) = parity.at(rows[r], cols[c]);
        return gf256::invert(minor, unused);
      });
    });
    if (!ok) return false;
  }
  return true;
}

void put_le64(Bytes& out, std::size_t offset, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[offset + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_le64(std::span<const std::uint8_t> in, std::size_t offset) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
  return v;
}

struct Selection {
  std::vector<const Shard*> shards;  // exactly K, sorted by index
  std::size_t shard_len = 0;
};

Selection select_shards(std::span<const Shard> available, const CodingParams& p) {
  std::map<unsigned, const Shard*> by_index;
  const Shard* first = nullptr;
  for (const auto& s : available) {
    if (s.index >= p.total()) throw ErasureError("shard index " + std::to_string(s.index) + " out of range");
    if (first == nullptr) first = &s;
    if (s.bytes.size() != first->bytes.size()) throw ErasureError("shards have inconsistent lengths");
    if (s.blob_id != first->blob_id || s.original_length != first->original_length) {
      throw ErasureError("shards belong to different blobs");
    }
    by_index.emplace(s.index, &s);
  }
  if (by_index.size() < p.data_shards) {
    throw UnrecoverableError("need " + std::to_string(p.data_shards) + " distinct shards, have " +
                             std::to_string(by_index.size()));
  }
  Selection sel;
  sel.shard_len = first->bytes.size();
  for (const auto& [idx, s] : by_index) {
    if (sel.shards.size() == p.data_shards) break;
    sel.shards.push_back(s);
  }
  return sel;
}

// Recovers the K data shards from the selection.
std::vector<Bytes> recover_data(const Selection& sel, const CodingParams& p) {
  const unsigned k = p.data_shards;
  std::vector<Bytes> data(k);
  bool systematic = true;
  for (unsigned i = 0; i < k; ++i) systematic = systematic && sel.shards[i]->index == i;
  if (systematic) {
    for (unsigned i = 0; i < k; ++i) data[i] = sel.shards[i]->bytes;
    return data;
  }

  const auto gen = generator_matrix(p);
  gf256::Matrix sub(k, k), decode;
  for (unsigned r = 0; r < k; ++r)
    for (unsigned c = 0; c < k; ++c) sub.at(r, c) = gen.at(sel.shards[r]->index, c);
  if (!gf256::invert(sub, decode)) throw ErasureError("decode matrix is singular");

  for (unsigned j = 0; j < k; ++j) {
    data[j].assign(sel.shard_len, 0);
    for (unsigned r = 0; r < k; ++r) {
      const gf256::Byte coeff = decode.at(j, r);
      if (coeff == 0) continue;
      const auto& src = sel.shards[r]->bytes;
      for (std::size_t b = 0; b < sel.shard_len; ++b) data[j][b] ^= gf256::mul(coeff, src[b]);
    }
  }
  return data;
}

Bytes parity_row(const gf256::Matrix& parity, unsigned m, const std::vector<Bytes>& data) {
  Bytes out(data.front().size(), 0);
  for (unsigned j = 0; j < data.size(); ++j) {
    const gf256::Byte coeff = parity.at(m, j);
    for (std::size_t b = 0; b < out.size(); ++b) out[b] ^= gf256::mul(coeff, data[j][b]);
  }
  return out;
}

}  // namespace

void validate(const CodingParams& p) {
  if (p.data_shards < 1 || p.parity_shards < 1) throw std::invalid_argument("K and M must be positive");
  if (p.total() > 255) throw std::invalid_argument("K + M must not exceed 255");

  static std::mutex mu;
  static std::map<std::pair<unsigned, unsigned>, bool> cache;
  std::lock_guard lock(mu);
  const auto key = std::make_pair(p.data_shards, p.parity_shards);
  auto it = cache.find(key);
  if (it == cache.end()) {
    double work = 0.0;
    for (unsigned s = 1; s <= std::min(p.data_shards, p.parity_shards); ++s) {
      work += choose(p.parity_shards, s) * choose(p.data_shards, s);
    }
    if (work > 2e6) {
      throw std::invalid_argument("K=" + std::to_string(p.data_shards) + ", M=" + std::to_string(p.parity_shards) +
                                  " is too large to verify every loss pattern");
    }
    it = cache.emplace(key, all_minors_invertible(p)).first;
  }
  if (!it->second) {
    throw std::invalid_argument("K=" + std::to_string(p.data_shards) + ", M=" + std::to_string(p.parity_shards) +
                                " has a singular decode submatrix");
  }
}

gf256::Matrix vandermonde_parity_matrix(const CodingParams& p) {
  gf256::Matrix m(p.parity_shards, p.data_shards);
  for (unsigned r = 0; r < p.parity_shards; ++r) {
    for (unsigned j = 0; j < p.data_shards; ++j) {
      m.at(r, j) = gf256::pow(static_cast<gf256::Byte>(r + 1), j);
    }
  }
  return m;
}

gf256::Matrix generator_matrix(const CodingParams& p) {
  const auto parity = vandermonde_parity_matrix(p);
  gf256::Matrix g(p.total(), p.data_shards);
  for (unsigned i = 0; i < p.data_shards; ++i) g.at(i, i) = 1;
  for (unsigned r = 0; r < p.parity_shards; ++r)
    for (unsigned j = 0; j < p.data_shards; ++j) g.at(p.data_shards + r, j) = parity.at(r, j);
  return g;
}

std::vector<Shard> rs_encode(std::span<const std::uint8_t> blob, const CodingParams& p) {
  validate(p);
  if (blob.empty()) throw std::invalid_argument("rs_encode: empty blob");
  const unsigned k = p.data_shards;
  const std::size_t shard_len = (blob.size() + k - 1) / k;
  const Digest32 blob_id = sha256(blob);

  std::vector<Bytes> data(k, Bytes(shard_len, 0));
  for (unsigned j = 0; j < k; ++j) {
    const std::size_t begin = j * shard_len;
    if (begin >= blob.size()) break;
    const std::size_t n = std::min(shard_len, blob.size() - begin);
    std::memcpy(data[j].data(), blob.data() + begin, n);
  }

  const auto parity = vandermonde_parity_matrix(p);
  std::vector<Shard> out;
  out.reserve(p.total());
  for (unsigned i = 0; i < p.total(); ++i) {
    Shard s;
    s.index = static_cast<std::uint8_t>(i);
    s.kind = i < k ? ShardKind::kData : ShardKind::kParity;
    s.bytes = i < k ? data[i] : parity_row(parity, i - k, data);
    s.blob_id = blob_id;
    s.original_length = blob.size();
    s.params = p;
    out.push_back(std::move(s));
  }
  return out;
}

Bytes rs_decode(std::span<const Shard> available, const CodingParams& p) {
  validate(p);
  const auto sel = select_shards(available, p);
  const auto data = recover_data(sel, p);
  const std::uint64_t original = sel.shards.front()->original_length;
  if (original > sel.shard_len * p.data_shards) throw ErasureError("original length exceeds shard capacity");

  Bytes blob;
  blob.reserve(sel.shard_len * p.data_shards);
  for (const auto& d : data) blob.insert(blob.end(), d.begin(), d.end());
  blob.resize(original);
  if (sha256(blob) != sel.shards.front()->blob_id) throw ErasureError("decoded blob does not match its id");
  return blob;
}

Shard rebuild_shard(std::span<const Shard> available, const CodingParams& p, std::uint8_t index) {
  validate(p);
  if (index >= p.total()) throw std::invalid_argument("rebuild_shard: index out of range");
  const auto sel = select_shards(available, p);
  const auto data = recover_data(sel, p);
  Shard s;
  s.index = index;
  s.kind = index < p.data_shards ? ShardKind::kData : ShardKind::kParity;
  s.bytes = index < p.data_shards ? data[index]
                                  : parity_row(vandermonde_parity_matrix(p), index - p.data_shards, data);
  s.blob_id = sel.shards.front()->blob_id;
  s.original_length = sel.shards.front()->original_length;
  s.params = p;
  return s;
}

Bytes encode_shard_file(const Shard& s) {
  Bytes out(kShardHeaderSize + s.bytes.size(), 0);
  std::memcpy(out.data(), "DTRS", 4);
  out[4] = kShardFormatVersion;
  out[5] = static_cast<std::uint8_t>(s.params.data_shards);
  out[6] = static_cast<std::uint8_t>(s.params.parity_shards);
  out[7] = s.index;
  out[8] = static_cast<std::uint8_t>(s.kind);
  put_le64(out, 16, s.original_length);
  put_le64(out, 24, s.bytes.size());
  std::memcpy(out.data() + 32, s.blob_id.data(), 32);
  std::copy(s.bytes.begin(), s.bytes.end(), out.begin() + kShardHeaderSize);
  return out;
}

Shard decode_shard_file(std::span<const std::uint8_t> file) {
  if (file.size() < kShardHeaderSize) throw ErasureError("shard file shorter than its header");
  if (std::memcmp(file.data(), "DTRS", 4) != 0) throw ErasureError("bad shard magic");
  if (file[4] != kShardFormatVersion) throw ErasureError("unsupported shard format version");
  Shard s;
  s.params.data_shards = file[5];
  s.params.parity_shards = file[6];
  s.index = file[7];
  if (file[8] > 1) throw ErasureError("bad shard kind");
  s.kind = static_cast<ShardKind>(file[8]);
  s.original_length = get_le64(file, 16);
  const std::uint64_t len = get_le64(file, 24);
  if (file.size() != kShardHeaderSize + len) throw ErasureError("shard payload length mismatch");
  std::memcpy(s.blob_id.data(), file.data() + 32, 32);
  s.bytes.assign(file.begin() + kShardHeaderSize, file.end());
  if (s.index >= s.params.total()) throw ErasureError("shard index out of range");
  if ((s.index < s.params.data_shards) != (s.kind == ShardKind::kData)) throw ErasureError("shard kind/index mismatch");
  return s;
}

}  // namespace dtnet::erasure
