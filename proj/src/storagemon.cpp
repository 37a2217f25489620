#include "dtnet/storagemon.hpp"

#include <algorithm>
#include <tuple>

#include "json.hpp"

namespace dtnet::storage {

const char* tier_name(Tier t) {
  switch (t) {
    case Tier::kClaudeSession: return "claude_session";
    case Tier::kGpuCompute: return "gpu_compute";
    case Tier::kStorageNode: return "storage_node";
    case Tier::kCpuOnly: return "cpu_only";
    case Tier::kMobileLight: return "mobile_light";
  }
  return "unknown";
}

std::optional<Tier> parse_tier(std::string_view name) {
  for (Tier t : {Tier::kClaudeSession, Tier::kGpuCompute, Tier::kStorageNode, Tier::kCpuOnly, Tier::kMobileLight}) {
    if (name == tier_name(t)) return t;
  }
  return std::nullopt;
}

Tier provision_check(const NodeRecord& node, const ProvisioningThresholds& th) {
  if (!is_storage_tier(node.tier)) return node.tier;
  if (node.read_mbps < th.min_read_mbps || node.write_mbps < th.min_write_mbps) return Tier::kMobileLight;
  return node.tier;
}

Tier NodeRegistry::register_node(NodeRecord rec) {
  rec.tier = provision_check(rec, thresholds_);
  const Tier t = rec.tier;
  nodes_[rec.id] = std::move(rec);
  return t;
}

const NodeRecord& NodeRegistry::heartbeat(const NodeId& id, SimTime now) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw UnknownNodeError("heartbeat from unknown node " + id);
  it->second.last_heartbeat = std::max(it->second.last_heartbeat, now);
  return it->second;
}

bool NodeRegistry::is_stale(const NodeId& id, SimTime now) const {
  return now - get(id).last_heartbeat > stale_after_;
}

const NodeRecord& NodeRegistry::get(const NodeId& id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw UnknownNodeError("unknown node " + id);
  return it->second;
}

std::vector<NodeId> NodeRegistry::live_nodes(SimTime now) const {
  std::vector<NodeId> out;
  for (const auto& [id, rec] : nodes_) {
    if (now - rec.last_heartbeat <= stale_after_) out.push_back(id);
  }
  return out;
}

const char* priority_name(RepairPriority p) {
  switch (p) {
    case RepairPriority::kCritical: return "critical";
    case RepairPriority::kHigh: return "high";
    case RepairPriority::kNormal: return "normal";
  }
  return "?";
}

void RepairQueue::push(const RepairTask& task) {
  auto it = where_.find(task.shard);
  if (it != where_.end()) {
    if (static_cast<int>(task.priority) >= static_cast<int>(it->second)) return;
    auto& lane = lanes_[static_cast<int>(it->second)];
    lane.erase(std::find_if(lane.begin(), lane.end(), [&](const RepairTask& t) { return t.shard == task.shard; }));
  }
  lanes_[static_cast<int>(task.priority)].push_back(task);
  where_[task.shard] = task.priority;
}

std::optional<RepairTask> RepairQueue::pop() {
  for (auto& lane : lanes_) {
    if (lane.empty()) continue;
    RepairTask t = lane.front();
    lane.pop_front();
    where_.erase(t.shard);
    return t;
  }
  return std::nullopt;
}

std::string DaemonAction::to_json_line() const {
  nlohmann::ordered_json j;
  j["t_ms"] = at.count();
  j["action"] = kind;
  if (!blob.empty()) j["blob"] = blob;
  if (shard >= 0) j["shard"] = shard;
  if (!source.empty()) j["source"] = source;
  if (!target.empty()) j["target"] = target;
  if (!priority.empty()) j["priority"] = priority;
  return j.dump();
}

void ReplicationDaemon::track_blob(const std::string& blob, const erasure::CodingParams& params,
                                   const std::map<std::uint8_t, std::set<NodeId>>& holders) {
  BlobInfo info;
  info.params = params;
  for (std::uint8_t i = 0; i < params.total(); ++i) info.holders[i];
  for (const auto& [idx, nodes] : holders) {
    info.holders[idx] = nodes;
    known_holders_.insert(nodes.begin(), nodes.end());
  }
  blobs_[blob] = std::move(info);
}

std::set<NodeId> ReplicationDaemon::live_holders(const ShardRef& ref, SimTime now) const {
  std::set<NodeId> out;
  auto b = blobs_.find(ref.blob);
  if (b == blobs_.end()) return out;
  auto h = b->second.holders.find(ref.index);
  if (h == b->second.holders.end()) return out;
  for (const auto& n : h->second) {
    if (registry_.contains(n) && !registry_.is_stale(n, now)) out.insert(n);
  }
  return out;
}

std::size_t ReplicationDaemon::surviving_shards(const std::string& blob, SimTime now) const {
  std::size_t n = 0;
  const auto& info = blobs_.at(blob);
  for (const auto& [idx, holders] : info.holders) {
    if (!live_holders({blob, idx}, now).empty()) ++n;
  }
  return n;
}

std::optional<RepairPriority> ReplicationDaemon::priority_for(const std::string& blob, SimTime now) const {
  const auto& info = blobs_.at(blob);
  const std::size_t surviving = surviving_shards(blob, now);
  if (surviving < info.params.data_shards) return std::nullopt;
  if (surviving == info.params.data_shards) return RepairPriority::kCritical;
  if (surviving == info.params.data_shards + 1) return RepairPriority::kHigh;
  return RepairPriority::kNormal;
}

std::vector<ShardRef> ReplicationDaemon::shards() const {
  std::vector<ShardRef> out;
  for (const auto& [blob, info] : blobs_)
    for (const auto& [idx, holders] : info.holders) out.push_back({blob, idx});
  return out;
}

std::set<NodeId> ReplicationDaemon::liveness_sweep(SimTime now) {
  std::set<NodeId> stale;
  for (const auto& n : known_holders_) {
    if (!registry_.contains(n) || registry_.is_stale(n, now)) stale.insert(n);
  }
  for (auto& [blob, info] : blobs_) {
    const auto prio = priority_for(blob, now);
    for (auto& [idx, holders] : info.holders) {
      const auto dropped = std::erase_if(holders, [&](const NodeId& n) { return stale.contains(n); });
      if (dropped > 0 && prio) queue_.push({{blob, idx}, *prio, now});
    }
  }
  return stale;
}

std::size_t ReplicationDaemon::load(const NodeId& node) const {
  std::size_t n = 0;
  for (const auto& [blob, info] : blobs_)
    for (const auto& [idx, holders] : info.holders) n += holders.contains(node) ? 1 : 0;
  return n;
}

std::optional<NodeId> ReplicationDaemon::choose_target(const ShardRef& ref, SimTime now) const {
  const auto& holders = blobs_.at(ref.blob).holders.at(ref.index);
  std::set<std::string> regions;
  for (const auto& h : live_holders(ref, now)) regions.insert(registry_.get(h).region);

  std::optional<NodeId> best;
  std::tuple<int, std::size_t, NodeId> best_key;
  for (const auto& [id, rec] : registry_.nodes()) {
    if (!is_storage_tier(rec.tier) || registry_.is_stale(id, now) || holders.contains(id)) continue;
    // New region first, then the least loaded node, then id order.
    auto key = std::make_tuple(regions.contains(rec.region) ? 1 : 0, load(id), id);
    if (!best || key < best_key) {
      best = id;
      best_key = key;
    }
  }
  return best;
}

std::vector<DaemonAction> ReplicationDaemon::replication_cycle(SimTime now, const ActionExecutor& exec) {
  std::vector<DaemonAction> actions;
  for (const auto& n : liveness_sweep(now)) actions.push_back({now, "stale", {}, -1, {}, n, {}});

  for (const auto& [blob, info] : blobs_) {
    const auto prio = priority_for(blob, now);
    if (!prio) {
      actions.push_back({now, "lost", blob, -1, {}, {}, {}});
      continue;
    }
    for (const auto& [idx, holders] : info.holders) {
      if (live_holders({blob, idx}, now).size() < cfg_.min_replicas) queue_.push({{blob, idx}, *prio, now});
    }
  }

  std::vector<RepairTask> carry;
  std::size_t issued = 0;
  while (issued < cfg_.rate_limit) {
    auto task = queue_.pop();
    if (!task) break;
    const auto& ref = task->shard;
    auto& info = blobs_.at(ref.blob);
    const auto live = live_holders(ref, now);
    if (live.size() >= cfg_.min_replicas || live.size() >= cfg_.max_replicas) continue;

    DaemonAction a{now, {}, ref.blob, ref.index, {}, {}, priority_name(task->priority)};
    const auto target = choose_target(ref, now);
    if (!target) {
      a.kind = "deferred";
      actions.push_back(a);
      carry.push_back(*task);
      continue;
    }
    a.target = *target;
    if (!live.empty()) {
      a.kind = "replicate";
      a.source = *live.begin();
    } else if (surviving_shards(ref.blob, now) >= info.params.data_shards) {
      a.kind = "reconstruct";
    } else {
      actions.push_back({now, "lost", ref.blob, ref.index, {}, {}, a.priority});
      continue;
    }
    ++issued;
    if (exec(a)) {
      info.holders[ref.index].insert(*target);
      known_holders_.insert(*target);
    } else {
      a.kind = "failed";
    }
    actions.push_back(a);
    if (live_holders(ref, now).size() < cfg_.min_replicas) carry.push_back(*task);
  }
  for (const auto& t : carry) queue_.push(t);
  return actions;
}

}  // namespace dtnet::storage
