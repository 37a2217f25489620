#pragma once

#include <map>
#include <optional>
#include <string>

#include "dtnet/digest.hpp"

namespace dtnet {

/// Hash-keyed blob store standing in for content-addressed pinning.
/// The key of a blob is the hex SHA-256 of its bytes.
class BlobStore {
 public:
  std::string put(Bytes bytes) {
    std::string key = to_hex(sha256(bytes));
    blobs_.emplace(key, std::move(bytes));
    return key;
  }

  std::optional<Bytes> get(const std::string& key) const {
    auto it = blobs_.find(key);
    if (it == blobs_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const std::string& key) const { return blobs_.contains(key); }
  std::size_t size() const { return blobs_.size(); }

  /// Logical labels ("latest.pt") pointing at content keys.
  void promote(const std::string& label, const std::string& key) { labels_[label] = key; }
  std::optional<std::string> resolve(const std::string& label) const {
    auto it = labels_.find(label);
    if (it == labels_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::map<std::string, Bytes> blobs_;
  std::map<std::string, std::string> labels_;
};

/// Float64 little-endian encoding of a parameter vector, and its inverse.
Bytes encode_params(const ParamVector& params);
ParamVector decode_params(const Bytes& bytes);

}  // namespace dtnet
