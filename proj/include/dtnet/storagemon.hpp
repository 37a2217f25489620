#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dtnet/common.hpp"
#include "dtnet/erasure.hpp"

namespace dtnet::storage {

enum class Tier { kClaudeSession, kGpuCompute, kStorageNode, kCpuOnly, kMobileLight };

const char* tier_name(Tier t);
std::optional<Tier> parse_tier(std::string_view name);

/// Every tier except mobile_light stores shards (and therefore needs SSD).
inline bool is_storage_tier(Tier t) { return t != Tier::kMobileLight; }

struct ProvisioningThresholds {
  double min_read_mbps = 100.0;
  double min_write_mbps = 50.0;
};

struct NodeRecord {
  NodeId id;
  Tier tier = Tier::kMobileLight;
  double read_mbps = 0.0;
  double write_mbps = 0.0;
  SimTime last_heartbeat{0};
  std::string region;
  std::int64_t bond = 0;
};

/// Storage tiers that miss either throughput threshold are demoted to
/// mobile_light. mobile_light nodes stay where they are.
Tier provision_check(const NodeRecord& node, const ProvisioningThresholds& th = {});

inline constexpr SimDuration kStaleAfter = seconds(120);
inline constexpr SimDuration kCycleInterval = seconds(30);

class UnknownNodeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class NodeRegistry {
 public:
  explicit NodeRegistry(ProvisioningThresholds th = {}, SimDuration stale_after = kStaleAfter)
      : thresholds_(th), stale_after_(stale_after) {}

  /// Registers the node after provisioning; returns the tier it ends up with.
  Tier register_node(NodeRecord rec);

  /// last_heartbeat = max(last_heartbeat, now).
  const NodeRecord& heartbeat(const NodeId& id, SimTime now);

  /// Stale strictly after the threshold: now - last_heartbeat > stale_after.
  bool is_stale(const NodeId& id, SimTime now) const;

  const NodeRecord& get(const NodeId& id) const;
  bool contains(const NodeId& id) const { return nodes_.contains(id); }
  const std::map<NodeId, NodeRecord>& nodes() const { return nodes_; }
  std::vector<NodeId> live_nodes(SimTime now) const;

 private:
  ProvisioningThresholds thresholds_;
  SimDuration stale_after_;
  std::map<NodeId, NodeRecord> nodes_;
};

enum class RepairPriority { kCritical = 0, kHigh = 1, kNormal = 2 };
const char* priority_name(RepairPriority p);

struct ShardRef {
  std::string blob;  // hex blob id
  std::uint8_t index = 0;
  auto operator<=>(const ShardRef&) const = default;
};

struct RepairTask {
  ShardRef shard;
  RepairPriority priority = RepairPriority::kNormal;
  SimTime enqueued{0};
};

/// Three FIFO lanes drained critical -> high -> normal. A shard appears at
/// most once; re-pushing at a more urgent priority moves it up.
class RepairQueue {
 public:
  void push(const RepairTask& task);
  std::optional<RepairTask> pop();
  bool contains(const ShardRef& ref) const { return where_.contains(ref); }
  std::size_t size() const { return where_.size(); }
  std::size_t size(RepairPriority p) const { return lanes_[static_cast<int>(p)].size(); }
  bool empty() const { return where_.empty(); }

 private:
  std::deque<RepairTask> lanes_[3];
  std::map<ShardRef, RepairPriority> where_;
};

struct DaemonConfig {
  SimDuration cycle = kCycleInterval;
  std::size_t min_replicas = 3;
  std::size_t max_replicas = 5;
  std::size_t rate_limit = 4;  // replications per cycle
};

struct DaemonAction {
  SimTime at{0};
  std::string kind;  // stale, replicate, reconstruct, deferred, failed, lost
  std::string blob;
  int shard = -1;
  NodeId source;
  NodeId target;
  std::string priority;

  std::string to_json_line() const;
};

/// Carries out a replicate/reconstruct action on the data plane. Returns
/// false if the transfer did not land (for example the target is down).
using ActionExecutor = std::function<bool(const DaemonAction&)>;

/// The 30-second replication and repair loop over shard holder metadata.
class ReplicationDaemon {
 public:
  ReplicationDaemon(NodeRegistry& registry, DaemonConfig cfg = {}) : registry_(registry), cfg_(cfg) {}

  void track_blob(const std::string& blob, const erasure::CodingParams& params,
                  const std::map<std::uint8_t, std::set<NodeId>>& holders);

  /// Nodes that have held a shard and whose last heartbeat is more than
  /// 120 s old. They are dropped from every holder set and the shards they
  /// held are queued for repair. Repeating a sweep returns the same set.
  std::set<NodeId> liveness_sweep(SimTime now);

  /// One daemon pass: sweep, queue under-replicated shards, then process at
  /// most rate_limit tasks in priority order.
  std::vector<DaemonAction> replication_cycle(SimTime now, const ActionExecutor& exec);

  /// Priority of a blob given how many of its shard indices still have a
  /// live holder: exactly K -> critical, K+1 -> high, otherwise normal.
  /// nullopt when fewer than K survive.
  std::optional<RepairPriority> priority_for(const std::string& blob, SimTime now) const;

  std::set<NodeId> live_holders(const ShardRef& ref, SimTime now) const;
  std::size_t surviving_shards(const std::string& blob, SimTime now) const;
  const RepairQueue& queue() const { return queue_; }
  RepairQueue& queue() { return queue_; }
  const DaemonConfig& config() const { return cfg_; }
  std::vector<ShardRef> shards() const;

 private:
  struct BlobInfo {
    erasure::CodingParams params;
    std::map<std::uint8_t, std::set<NodeId>> holders;
  };

  std::optional<NodeId> choose_target(const ShardRef& ref, SimTime now) const;
  std::size_t load(const NodeId& node) const;

  NodeRegistry& registry_;
  DaemonConfig cfg_;
  std::map<std::string, BlobInfo> blobs_;
  std::set<NodeId> known_holders_;
  RepairQueue queue_;
};

}  // namespace dtnet::storage
