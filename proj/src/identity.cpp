#include "dtnet/identity.hpp"

#include <openssl/bn.h>
#include <openssl/ec.h>
#include <openssl/obj_mac.h>

#include <cstring>
#include <memory>

namespace dtnet::identity {

namespace {

struct BnDeleter {
  void operator()(BIGNUM* p) const { BN_clear_free(p); }
};
struct CtxDeleter {
  void operator()(BN_CTX* p) const { BN_CTX_free(p); }
};
struct PointDeleter {
  void operator()(EC_POINT* p) const { EC_POINT_free(p); }
};
using Bn = std::unique_ptr<BIGNUM, BnDeleter>;
using Ctx = std::unique_ptr<BN_CTX, CtxDeleter>;
using Point = std::unique_ptr<EC_POINT, PointDeleter>;

Bn bn() {
  Bn b(BN_new());
  if (!b) throw std::bad_alloc();
  return b;
}

Bn bn_from(std::span<const std::uint8_t> be) {
  Bn b(BN_bin2bn(be.data(), static_cast<int>(be.size()), nullptr));
  if (!b) throw std::bad_alloc();
  return b;
}

void bn_to32(const BIGNUM* b, std::uint8_t* out) {
  if (BN_bn2binpad(b, out, 32) != 32) throw std::runtime_error("scalar does not fit in 32 bytes");
}

// secp256k1 group with its order and field prime; immutable after construction.
struct Curve {
  EC_GROUP* group;
  Bn order;
  Bn half_order;
  Bn prime;

  Curve() : group(EC_GROUP_new_by_curve_name(NID_secp256k1)), order(bn()), half_order(bn()), prime(bn()) {
    if (group == nullptr) throw std::runtime_error("secp256k1 unavailable");
    Ctx ctx(BN_CTX_new());
    EC_GROUP_get_order(group, order.get(), ctx.get());
    BN_rshift1(half_order.get(), order.get());
    EC_GROUP_get_curve(group, prime.get(), nullptr, nullptr, ctx.get());
  }
  ~Curve() { EC_GROUP_free(group); }
  Curve(const Curve&) = delete;
  Curve& operator=(const Curve&) = delete;
};

const Curve& curve() {
  static const Curve c;
  return c;
}

Point new_point() {
  Point p(EC_POINT_new(curve().group));
  if (!p) throw std::bad_alloc();
  return p;
}

PublicKey compress(const EC_POINT* p, BN_CTX* ctx) {
  PublicKey out{};
  if (EC_POINT_point2oct(curve().group, p, POINT_CONVERSION_COMPRESSED, out.data(), out.size(), ctx) != out.size()) {
    throw std::runtime_error("point compression failed");
  }
  return out;
}

bool valid_scalar(const BIGNUM* x) { return !BN_is_zero(x) && !BN_is_negative(x) && BN_cmp(x, curve().order.get()) < 0; }

// RFC 6979 section 3.2 with HMAC-SHA256 and a 256-bit order.
class NonceGenerator {
 public:
  NonceGenerator(const std::array<std::uint8_t, 32>& secret, const Digest32& digest) {
    Ctx ctx(BN_CTX_new());
    Bn h = bn_from(digest);
    BN_nnmod(h.get(), h.get(), curve().order.get(), ctx.get());
    std::uint8_t h1[32];
    bn_to32(h.get(), h1);

    v_.fill(0x01);
    k_.fill(0x00);
    for (std::uint8_t tag : {std::uint8_t{0x00}, std::uint8_t{0x01}}) {
      Bytes msg(v_.begin(), v_.end());
      msg.push_back(tag);
      msg.insert(msg.end(), secret.begin(), secret.end());
      msg.insert(msg.end(), h1, h1 + 32);
      k_ = hmac_sha256(k_, msg);
      v_ = hmac_sha256(k_, v_);
    }
  }

  Bn next() {
    while (true) {
      if (!first_) {
        Bytes msg(v_.begin(), v_.end());
        msg.push_back(0x00);
        k_ = hmac_sha256(k_, msg);
        v_ = hmac_sha256(k_, v_);
      }
      first_ = false;
      v_ = hmac_sha256(k_, v_);
      Bn k = bn_from(v_);
      if (valid_scalar(k.get())) return k;
    }
  }

 private:
  Digest32 k_{};
  Digest32 v_{};
  bool first_ = true;
};

struct ParsedSig {
  Bn r;
  Bn s;
  int recid;
};

std::optional<ParsedSig> parse(const CompactSignature& sig) {
  ParsedSig p{bn_from(std::span(sig.data(), 32)), bn_from(std::span(sig.data() + 32, 32)), sig[64]};
  if (p.recid > 3 || !valid_scalar(p.r.get()) || !valid_scalar(p.s.get())) return std::nullopt;
  // High-s signatures are malleable twins; only the low form is accepted.
  if (BN_cmp(p.s.get(), curve().half_order.get()) > 0) return std::nullopt;
  return p;
}

}  // namespace

SigningKey::SigningKey(const std::array<std::uint8_t, 32>& secret) : secret_(secret) {
  Bn d = bn_from(secret_);
  if (!valid_scalar(d.get())) throw std::invalid_argument("secret scalar out of range");
}

PublicKey SigningKey::public_key() const {
  Ctx ctx(BN_CTX_new());
  Bn d = bn_from(secret_);
  Point q = new_point();
  if (EC_POINT_mul(curve().group, q.get(), d.get(), nullptr, nullptr, ctx.get()) != 1) {
    throw std::runtime_error("public key derivation failed");
  }
  return compress(q.get(), ctx.get());
}

CompactSignature SigningKey::sign_digest(const Digest32& digest) const {
  const auto& c = curve();
  Ctx ctx(BN_CTX_new());
  Bn d = bn_from(secret_);
  Bn e = bn_from(digest);
  NonceGenerator nonces(secret_, digest);
  Bn x = bn(), y = bn(), r = bn(), s = bn(), kinv = bn(), tmp = bn();
  Point big_r = new_point();

  while (true) {
    Bn k = nonces.next();
    EC_POINT_mul(c.group, big_r.get(), k.get(), nullptr, nullptr, ctx.get());
    EC_POINT_get_affine_coordinates(c.group, big_r.get(), x.get(), y.get(), ctx.get());
    BN_nnmod(r.get(), x.get(), c.order.get(), ctx.get());
    if (BN_is_zero(r.get())) continue;
    int recid = (BN_is_odd(y.get()) ? 1 : 0) | (BN_cmp(x.get(), c.order.get()) >= 0 ? 2 : 0);

    // s = k^-1 (e + r d) mod n
    BN_mod_inverse(kinv.get(), k.get(), c.order.get(), ctx.get());
    BN_mod_mul(tmp.get(), r.get(), d.get(), c.order.get(), ctx.get());
    BN_mod_add(tmp.get(), tmp.get(), e.get(), c.order.get(), ctx.get());
    BN_mod_mul(s.get(), kinv.get(), tmp.get(), c.order.get(), ctx.get());
    if (BN_is_zero(s.get())) continue;
    if (BN_cmp(s.get(), c.half_order.get()) > 0) {
      BN_sub(s.get(), c.order.get(), s.get());
      recid ^= 1;
    }

    CompactSignature out{};
    bn_to32(r.get(), out.data());
    bn_to32(s.get(), out.data() + 32);
    out[64] = static_cast<std::uint8_t>(recid);
    return out;
  }
}

NodeId derive_node_id(std::span<const std::uint8_t> compressed_pubkey) {
  if (compressed_pubkey.size() != 33) {
    throw std::invalid_argument("compressed public key must be 33 bytes, got " +
                                std::to_string(compressed_pubkey.size()));
  }
  return "node-" + to_hex(sha256(compressed_pubkey)).substr(0, 16);
}

NodeIdentity identity_from_secret(const std::array<std::uint8_t, 32>& secret) {
  SigningKey key(secret);
  const PublicKey pub = key.public_key();
  return NodeIdentity{pub, derive_node_id(pub), std::move(key)};
}

NodeIdentity generate_identity(Rng& rng) {
  while (true) {
    std::array<std::uint8_t, 32> secret{};
    for (std::size_t i = 0; i < secret.size(); i += 8) {
      const std::uint64_t w = rng.next_u64();
      for (int b = 0; b < 8; ++b) secret[i + b] = static_cast<std::uint8_t>(w >> (8 * b));
    }
    Bn d = bn_from(secret);
    if (valid_scalar(d.get())) return identity_from_secret(secret);
  }
}

Digest32 request_digest(const NodeId& node_id, std::int64_t timestamp) {
  return sha256(node_id + ":" + std::to_string(timestamp));
}

std::optional<PublicKey> recover_public_key(const Digest32& digest, const CompactSignature& sig) {
  const auto& c = curve();
  auto parsed = parse(sig);
  if (!parsed) return std::nullopt;
  Ctx ctx(BN_CTX_new());

  Bn x = bn();
  BN_copy(x.get(), parsed->r.get());
  if (parsed->recid & 2) BN_add(x.get(), x.get(), c.order.get());
  if (BN_cmp(x.get(), c.prime.get()) >= 0) return std::nullopt;

  Point big_r = new_point();
  if (EC_POINT_set_compressed_coordinates(c.group, big_r.get(), x.get(), parsed->recid & 1, ctx.get()) != 1) {
    return std::nullopt;
  }

  // Q = r^-1 (s R - e G)
  Bn e = bn_from(digest), rinv = bn(), u1 = bn(), u2 = bn();
  BN_mod_inverse(rinv.get(), parsed->r.get(), c.order.get(), ctx.get());
  BN_nnmod(e.get(), e.get(), c.order.get(), ctx.get());
  BN_mod_sub(u1.get(), c.order.get(), e.get(), c.order.get(), ctx.get());
  BN_mod_mul(u1.get(), u1.get(), rinv.get(), c.order.get(), ctx.get());
  BN_mod_mul(u2.get(), parsed->s.get(), rinv.get(), c.order.get(), ctx.get());
  Point q = new_point();
  if (EC_POINT_mul(c.group, q.get(), u1.get(), big_r.get(), u2.get(), ctx.get()) != 1) return std::nullopt;
  if (EC_POINT_is_at_infinity(c.group, q.get())) return std::nullopt;
  return compress(q.get(), ctx.get());
}

bool verify_digest(const PublicKey& key, const Digest32& digest, const CompactSignature& sig) {
  const auto& c = curve();
  auto parsed = parse(sig);
  if (!parsed) return false;
  Ctx ctx(BN_CTX_new());
  Point q = new_point();
  if (EC_POINT_oct2point(c.group, q.get(), key.data(), key.size(), ctx.get()) != 1) return false;

  Bn e = bn_from(digest), w = bn(), u1 = bn(), u2 = bn(), x = bn();
  BN_mod_inverse(w.get(), parsed->s.get(), c.order.get(), ctx.get());
  BN_mod_mul(u1.get(), e.get(), w.get(), c.order.get(), ctx.get());
  BN_mod_mul(u2.get(), parsed->r.get(), w.get(), c.order.get(), ctx.get());
  Point p = new_point();
  if (EC_POINT_mul(c.group, p.get(), u1.get(), q.get(), u2.get(), ctx.get()) != 1) return false;
  if (EC_POINT_is_at_infinity(c.group, p.get())) return false;
  EC_POINT_get_affine_coordinates(c.group, p.get(), x.get(), nullptr, ctx.get());
  BN_nnmod(x.get(), x.get(), c.order.get(), ctx.get());
  return BN_cmp(x.get(), parsed->r.get()) == 0;
}

SignedRequest sign_request(const NodeIdentity& id, std::int64_t timestamp, AuthMode mode,
                           std::span<const std::uint8_t> cluster_secret) {
  SignedRequest req;
  req.node_id = id.node_id;
  req.timestamp = timestamp;
  req.mode = mode;
  const Digest32 digest = request_digest(id.node_id, timestamp);
  if (mode == AuthMode::kWallet) {
    const auto sig = id.key.sign_digest(digest);
    req.signature.assign(sig.begin(), sig.end());
  } else {
    if (cluster_secret.empty()) throw MissingSecretError("cluster mode requires a shared secret");
    const auto tag = hmac_sha256(cluster_secret, digest);
    req.signature.assign(tag.begin(), tag.end());
  }
  return req;
}

const char* reject_reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::kStale: return "stale";
    case RejectReason::kBinding: return "binding";
    case RejectReason::kBadSignature: return "signature";
    case RejectReason::kMac: return "mac";
    case RejectReason::kMalformed: return "malformed";
    case RejectReason::kNoSecret: return "no-secret";
  }
  return "?";
}

Verdict verify_request(const SignedRequest& req, std::int64_t now, std::span<const std::uint8_t> cluster_secret) {
  const std::int64_t skew = now - req.timestamp;
  if (skew > kFreshnessWindowSeconds || skew < -kFreshnessWindowSeconds) return {RejectReason::kStale};
  const Digest32 digest = request_digest(req.node_id, req.timestamp);

  if (req.mode == AuthMode::kWallet) {
    if (req.signature.size() != 65) return {RejectReason::kMalformed};
    CompactSignature sig{};
    std::memcpy(sig.data(), req.signature.data(), sig.size());
    const auto key = recover_public_key(digest, sig);
    if (!key) return {RejectReason::kBadSignature};
    if (!verify_digest(*key, digest, sig)) return {RejectReason::kBadSignature};
    if (derive_node_id(*key) != req.node_id) return {RejectReason::kBinding};
    return {};
  }

  if (cluster_secret.empty()) return {RejectReason::kNoSecret};
  if (req.signature.size() != 32) return {RejectReason::kMalformed};
  const auto expected = hmac_sha256(cluster_secret, digest);
  if (!timing_safe_equal(expected, req.signature)) return {RejectReason::kMac};
  return {};
}

}  // namespace dtnet::identity
