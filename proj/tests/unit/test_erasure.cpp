#include "doctest.h"

#include <stdexcept>
#include <algorithm>

#include "dtnet/erasure.hpp"
#include "dtnet/random.hpp"

using namespace dtnet;
using namespace dtnet::erasure;

namespace {

Bytes random_blob(Rng& rng, std::size_t n) {
  Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng.below(256));
  return b;
}

std::vector<Shard> without(const std::vector<Shard>& all, std::initializer_list<int> drop) {
  std::vector<Shard> out;
  for (const auto& s : all) {
    if (std::find(drop.begin(), drop.end(), s.index) == drop.end()) out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("default parity matrix rows") {
  auto p = vandermonde_parity_matrix({4, 2});
  CHECK(p.rows == 2);
  CHECK(p.cols == 4);
  for (int j = 0; j < 4; ++j) CHECK(p.at(0, j) == 1);
  CHECK(p.at(1, 0) == 1);
  CHECK(p.at(1, 1) == 2);
  CHECK(p.at(1, 2) == 4);
  CHECK(p.at(1, 3) == 8);
  auto g = generator_matrix({4, 2});
  CHECK(g.rows == 6);
}

TEST_CASE("parity shard zero is the XOR of the data shards") {
  Rng rng(1);
  auto blob = random_blob(rng, 4096 + 3);
  auto shards = rs_encode(blob, {4, 2});
  REQUIRE(shards.size() == 6);
  for (std::size_t i = 0; i < shards[4].bytes.size(); ++i) {
    CHECK(shards[4].bytes[i] ==
          (shards[0].bytes[i] ^ shards[1].bytes[i] ^ shards[2].bytes[i] ^ shards[3].bytes[i]));
  }
}

TEST_CASE("data shards are verbatim padded slices") {
  Rng rng(2);
  auto blob = random_blob(rng, 1001);
  auto shards = rs_encode(blob, {4, 2});
  const std::size_t len = shards[0].bytes.size();
  CHECK(len == 251);
  Bytes joined;
  for (int i = 0; i < 4; ++i) {
    CHECK(shards[i].kind == ShardKind::kData);
    joined.insert(joined.end(), shards[i].bytes.begin(), shards[i].bytes.end());
  }
  CHECK(std::equal(blob.begin(), blob.end(), joined.begin()));
  for (std::size_t i = blob.size(); i < joined.size(); ++i) CHECK(joined[i] == 0);
  CHECK(shards[5].kind == ShardKind::kParity);
  CHECK(shards[0].original_length == 1001);
}

TEST_CASE("all-zero blob encodes to zero shards") {
  Bytes blob(64, 0);
  for (const auto& s : rs_encode(blob, {4, 2})) {
    CHECK(std::all_of(s.bytes.begin(), s.bytes.end(), [](auto b) { return b == 0; }));
  }
}

TEST_CASE("every two-shard loss decodes") {
  Rng rng(3);
  auto blob = random_blob(rng, 1024);
  auto shards = rs_encode(blob, {4, 2});
  int combos = 0;
  for (int i = 0; i < 6; ++i) {
    for (int j = i + 1; j < 6; ++j) {
      CHECK(rs_decode(without(shards, {i, j}), {4, 2}) == blob);
      ++combos;
    }
  }
  CHECK(combos == 15);
  CHECK(rs_decode(without(shards, {4, 5}), {4, 2}) == blob);
}

TEST_CASE("fewer than K shards is unrecoverable") {
  Rng rng(4);
  auto blob = random_blob(rng, 100);
  auto shards = rs_encode(blob, {4, 2});
  CHECK_THROWS_AS(rs_decode(without(shards, {0, 1, 2}), {4, 2}), UnrecoverableError);
}

TEST_CASE("K-1 shards do not determine the blob") {
  // Two blobs that differ only in data shard 3 share shards 0..2.
  Rng rng(5);
  auto a = random_blob(rng, 400);
  auto b = a;
  b[399] ^= 0x5A;
  auto sa = rs_encode(a, {4, 2});
  auto sb = rs_encode(b, {4, 2});
  for (int i = 0; i < 3; ++i) CHECK(sa[i].bytes == sb[i].bytes);
  CHECK(a != b);
}

TEST_CASE("rebuild_shard re-derives any index") {
  Rng rng(6);
  auto blob = random_blob(rng, 777);
  auto shards = rs_encode(blob, {4, 2});
  for (std::uint8_t idx = 0; idx < 6; ++idx) {
    auto others = without(shards, {idx, (idx + 1) % 6});
    auto s = rebuild_shard(others, {4, 2}, idx);
    CHECK(s.bytes == shards[idx].bytes);
    CHECK(s.kind == shards[idx].kind);
  }
}

TEST_CASE("random loss patterns across shapes") {
  Rng rng(7);
  for (CodingParams p : {CodingParams{4, 2}, CodingParams{3, 3}, CodingParams{6, 2}, CodingParams{1, 2}}) {
    for (int t = 0; t < 100; ++t) {
      auto blob = random_blob(rng, 1 + rng.below(3000));
      auto shards = rs_encode(blob, p);
      rng.shuffle(shards.begin(), shards.end());
      shards.resize(p.data_shards + rng.below(p.parity_shards + 1));
      REQUIRE(rs_decode(shards, p) == blob);
    }
  }
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(validate({0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(validate({4, 0}), std::invalid_argument);
  CHECK_THROWS_AS(validate({200, 56}), std::invalid_argument);
  CHECK_NOTHROW(validate({4, 2}));
  // The plain Vandermonde parity block is not MDS for every shape.
  CHECK_THROWS_AS(validate({10, 4}), std::invalid_argument);
  CHECK_THROWS_AS(rs_encode(Bytes{}, {4, 2}), std::invalid_argument);
}

TEST_CASE("shard file round trip and header layout") {
  Rng rng(8);
  auto blob = random_blob(rng, 300);
  auto shards = rs_encode(blob, {4, 2});
  auto file = encode_shard_file(shards[5]);
  REQUIRE(file.size() == kShardHeaderSize + shards[5].bytes.size());
  CHECK(std::string(file.begin(), file.begin() + 4) == "DTRS");
  CHECK(file[4] == kShardFormatVersion);
  CHECK(file[5] == 4);
  CHECK(file[6] == 2);
  CHECK(file[7] == 5);
  CHECK(file[8] == 1);
  CHECK(file[16] == (300 & 0xFF));
  CHECK(file[17] == (300 >> 8));
  auto back = decode_shard_file(file);
  CHECK(back.bytes == shards[5].bytes);
  CHECK(back.blob_id == shards[5].blob_id);
  CHECK(back.index == 5);
  auto bad = file;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_shard_file(bad), ErasureError);
  bad = file;
  bad.pop_back();
  CHECK_THROWS_AS(decode_shard_file(bad), ErasureError);
}

TEST_CASE("tampered shards fail the blob id check") {
  Rng rng(9);
  auto blob = random_blob(rng, 512);
  auto shards = rs_encode(blob, {4, 2});
  shards[0].bytes[0] ^= 1;
  CHECK_THROWS_AS(rs_decode(without(shards, {4, 5}), {4, 2}), ErasureError);
}
