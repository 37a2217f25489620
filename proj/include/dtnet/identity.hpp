#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include "dtnet/common.hpp"
#include "dtnet/digest.hpp"
#include "dtnet/random.hpp"

namespace dtnet::identity {

using PublicKey = std::array<std::uint8_t, 33>;  // SEC1 compressed point
using CompactSignature = std::array<std::uint8_t, 65>;  // r || s || recovery id

inline constexpr std::int64_t kFreshnessWindowSeconds = 300;

/// Owns a secp256k1 secret scalar. Not copyable out as bytes except through
/// export_secret(), which exists for golden-vector tooling.
class SigningKey {
 public:
  /// Throws std::invalid_argument unless 0 < secret < n.
  explicit SigningKey(const std::array<std::uint8_t, 32>& secret);

  PublicKey public_key() const;

  /// Deterministic (RFC 6979) ECDSA over a 32-byte digest, low-s normalized,
  /// with the recovery id in the last byte.
  CompactSignature sign_digest(const Digest32& digest) const;

  const std::array<std::uint8_t, 32>& export_secret() const { return secret_; }

 private:
  std::array<std::uint8_t, 32> secret_;
};

struct NodeIdentity {
  PublicKey public_key{};
  NodeId node_id;
  SigningKey key;
};

/// "node-" + first 16 hex chars of SHA-256(pubkey). Only the length of the
/// encoding is checked. Throws std::invalid_argument unless it is 33 bytes.
NodeId derive_node_id(std::span<const std::uint8_t> compressed_pubkey);

NodeIdentity identity_from_secret(const std::array<std::uint8_t, 32>& secret);

/// Samples a valid secret from the generator.
NodeIdentity generate_identity(Rng& rng);

/// SHA-256 over the ASCII bytes "<nodeId>:<decimal timestamp>".
Digest32 request_digest(const NodeId& node_id, std::int64_t timestamp);

/// Recovers the signer's compressed key; nullopt if the signature is invalid.
std::optional<PublicKey> recover_public_key(const Digest32& digest, const CompactSignature& sig);

/// Plain ECDSA verification of the r || s part against a known key.
bool verify_digest(const PublicKey& key, const Digest32& digest, const CompactSignature& sig);

enum class AuthMode { kWallet, kClusterHmac };

struct SignedRequest {
  NodeId node_id;
  std::int64_t timestamp = 0;  // seconds since epoch
  AuthMode mode = AuthMode::kWallet;
  Bytes signature;
};

class MissingSecretError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Wallet mode signs with the node key; cluster mode tags the digest with
/// HMAC-SHA256 under the shared secret (MissingSecretError if it is empty).
SignedRequest sign_request(const NodeIdentity& id, std::int64_t timestamp, AuthMode mode,
                           std::span<const std::uint8_t> cluster_secret = {});

enum class RejectReason { kStale, kBinding, kBadSignature, kMac, kMalformed, kNoSecret };

const char* reject_reason_name(RejectReason r);

struct Verdict {
  std::optional<RejectReason> reject;
  bool accepted() const { return !reject.has_value(); }
};

/// Rejects when |now - timestamp| > 300 s. Wallet mode then recovers the key,
/// verifies the signature and requires derive_node_id(key) == node_id. Cluster
/// mode recomputes the tag and compares in constant time.
Verdict verify_request(const SignedRequest& req, std::int64_t now,
                       std::span<const std::uint8_t> cluster_secret = {});

}  // namespace dtnet::identity
