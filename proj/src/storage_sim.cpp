#include <algorithm>
#include <sstream>

#include "dtnet/erasure.hpp"
#include "dtnet/runners.hpp"
#include "dtnet/simnet.hpp"
#include "dtnet/storagemon.hpp"

namespace dtnet::scenario {

namespace {

using storage::DaemonAction;
using storage::ShardRef;

const NodeId kMonitor = "monitor";

class StorageRun {
 public:
  explicit StorageRun(const Scenario& s)
      : s_(s), p_(s.storage), sim_(s.seed, s.network), rng_(s.seed ^ 0x5851f42d4c957f2dULL),
        registry_(p_.thresholds), daemon_(registry_, p_.daemon) {}

  StorageReport run() {
    StorageReport rep;
    for (const auto& n : s_.nodes) {
      storage::NodeRecord rec;
      rec.id = n.id;
      rec.tier = n.tier;
      rec.read_mbps = n.read_mbps;
      rec.write_mbps = n.write_mbps;
      rec.region = n.region;
      rec.bond = n.bond;
      const auto tier = registry_.register_node(rec);
      if (tier != n.tier) {
        rep.demoted.push_back(n.id);
        log({SimTime{0}, "demoted", {}, -1, {}, n.id, storage::tier_name(tier)});
      }
      if (storage::is_storage_tier(tier)) eligible_.push_back(n.id);
    }
    if (eligible_.empty()) throw ScenarioError(s_.name + ": no storage-eligible nodes");

    place_blobs();

    sim_.add_node(kMonitor, [this](sim::Simulator& sim, const NodeId& from, const sim::Message& m) {
      if (m.kind == "heartbeat") registry_.heartbeat(from, sim.now());
    });
    for (const auto& n : s_.nodes) {
      sim_.add_node(n.id, [](sim::Simulator&, const NodeId&, const sim::Message&) {});
      schedule_heartbeat(n.id, SimDuration{0});
    }
    for (const auto& f : s_.failures) {
      sim_.schedule(f.down_at, "down:" + f.node, [this, f](sim::Simulator&) { take_down(f.node, !f.up_at); });
      if (f.up_at) {
        sim_.schedule(*f.up_at, "up:" + f.node, [this, id = f.node](sim::Simulator& sim) {
          sim.set_down(id, false);
          log({sim.now(), "node_up", {}, -1, {}, id, {}});
        });
      }
    }
    for (std::size_t k = 0; k < p_.random_failures; ++k) {
      sim_.schedule(p_.failure_start + p_.failure_spacing * static_cast<std::int64_t>(k), "inject",
                    [this](sim::Simulator&) { inject_failure(); });
    }
    schedule_cycle();
    sim_.run_until(p_.duration);
    finished_ = true;

    finish(rep);
    return rep;
  }

 private:
  void log(const DaemonAction& a) { actions_ += a.to_json_line() + "\n"; }

  void place_blobs() {
    const auto& c = p_.coding;
    for (std::size_t b = 0; b < p_.blobs; ++b) {
      const std::size_t span = p_.max_blob_bytes - p_.min_blob_bytes + 1;
      Bytes blob(p_.min_blob_bytes + rng_.below(span));
      for (auto& x : blob) x = static_cast<std::uint8_t>(rng_.next_u64());
      auto shards = erasure::rs_encode(blob, c);
      const std::string id = to_hex(shards.front().blob_id);
      std::map<std::uint8_t, std::set<NodeId>> holders;
      for (auto& sh : shards) {
        const NodeId& node = eligible_[(b * c.total() + sh.index) % eligible_.size()];
        holders[sh.index].insert(node);
        data_[node][{id, sh.index}] = sh;
      }
      daemon_.track_blob(id, c, holders);
      originals_[id] = std::move(blob);
    }
  }

  void schedule_heartbeat(const NodeId& id, SimDuration delay) {
    sim_.schedule(delay, "heartbeat:" + id, [this, id](sim::Simulator& sim) {
      if (finished_) return;
      if (!sim.is_down(id)) sim.send(id, kMonitor, {"heartbeat", nlohmann::json::object()});
      schedule_heartbeat(id, p_.heartbeat_interval);
    });
  }

  void take_down(const NodeId& id, bool permanent) {
    sim_.set_down(id, true);
    down_since_[id] = sim_.now();
    if (permanent) data_.erase(id);
    log({sim_.now(), permanent ? "node_lost" : "node_down", {}, -1, {}, id, {}});
  }

  // Shard indices of `blob` that some up node still holds.
  std::set<std::uint8_t> available(const std::string& blob, const NodeId& excluding = {}) const {
    std::set<std::uint8_t> out;
    for (const auto& [node, held] : data_) {
      if (node == excluding || sim_.is_down(node)) continue;
      for (auto it = held.lower_bound({blob, 0}); it != held.end() && it->first.blob == blob; ++it) {
        out.insert(it->first.index);
      }
    }
    return out;
  }

  // Picks a live storage node whose loss keeps every blob at most M shards
  // short, so failures between sweeps never exceed the code's tolerance.
  void inject_failure() {
    std::vector<NodeId> candidates;
    std::size_t up = 0;
    for (const auto& id : eligible_) {
      if (!sim_.is_down(id)) {
        candidates.push_back(id);
        ++up;
      }
    }
    if (up <= p_.daemon.min_replicas) return;
    rng_.shuffle(candidates.begin(), candidates.end());
    for (const auto& id : candidates) {
      bool safe = true;
      for (const auto& [blob, bytes] : originals_) {
        if (p_.coding.total() - available(blob, id).size() > p_.coding.parity_shards) {
          safe = false;
          break;
        }
      }
      if (!safe) continue;
      ++injected_;
      take_down(id, true);
      return;
    }
  }

  bool execute(const DaemonAction& a) {
    if (sim_.is_down(a.target)) return false;
    const ShardRef ref{a.blob, static_cast<std::uint8_t>(a.shard)};
    if (a.kind == "replicate") {
      if (sim_.is_down(a.source)) return false;
      auto node = data_.find(a.source);
      if (node == data_.end()) return false;
      auto sh = node->second.find(ref);
      if (sh == node->second.end()) return false;
      data_[a.target][ref] = sh->second;
      return true;
    }
    // reconstruct: gather one copy of every other available index.
    std::map<std::uint8_t, erasure::Shard> pool;
    for (const auto& [node, held] : data_) {
      if (sim_.is_down(node)) continue;
      for (auto it = held.lower_bound({a.blob, 0}); it != held.end() && it->first.blob == a.blob; ++it) {
        pool.emplace(it->first.index, it->second);
      }
    }
    if (pool.size() < p_.coding.data_shards) return false;
    std::vector<erasure::Shard> shards;
    for (auto& [idx, sh] : pool) shards.push_back(sh);
    try {
      data_[a.target][ref] = erasure::rebuild_shard(shards, p_.coding, ref.index);
    } catch (const erasure::ErasureError&) {
      return false;
    }
    return true;
  }

  void schedule_cycle() {
    sim_.schedule(p_.daemon.cycle, "cycle", [this](sim::Simulator& sim) {
      const auto actions = daemon_.replication_cycle(sim.now(), [this](const DaemonAction& a) { return execute(a); });
      std::size_t stale = 0;
      for (const auto& a : actions) {
        log(a);
        if (a.kind == "stale") {
          ++stale;
          auto d = down_since_.find(a.target);
          const SimTime last = registry_.get(a.target).last_heartbeat;
          if (sim.now() - last <= storage::kStaleAfter) {
            violations_.push_back("node " + a.target + " marked stale within 120 s of its last heartbeat");
          }
          if (d != down_since_.end() && !detected_.contains(a.target)) {
            detected_[a.target] = sim.now() - d->second;
          }
        }
      }
      record_cycle(actions.size(), stale);
      schedule_cycle();
    });
  }

  std::pair<std::size_t, std::size_t> replica_range() const {
    std::size_t lo = SIZE_MAX, hi = 0;
    for (const auto& ref : daemon_.shards()) {
      const std::size_t n = daemon_.live_holders(ref, sim_.now()).size();
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    return {lo == SIZE_MAX ? 0 : lo, hi};
  }

  std::size_t decodable() const {
    std::size_t n = 0;
    for (const auto& [blob, bytes] : originals_) n += available(blob).size() >= p_.coding.data_shards ? 1 : 0;
    return n;
  }

  void record_cycle(std::size_t actions, std::size_t stale) {
    const auto [lo, hi] = replica_range();
    const std::size_t dec = decodable();
    if (dec < originals_.size()) {
      violations_.push_back("t=" + std::to_string(sim_.now().count()) + "ms: " +
                            std::to_string(originals_.size() - dec) + " blob(s) not decodable");
    }
    std::ostringstream row;
    row << sim_.now().count() << ',' << registry_.live_nodes(sim_.now()).size() << ',' << stale << ',' << actions << ','
        << daemon_.queue().size() << ',' << lo << ',' << hi << ',' << dec << '\n';
    metrics_ += row.str();
  }

  void finish(StorageReport& rep) {
    rep.blobs = originals_.size();
    for (const auto& [blob, original] : originals_) {
      std::map<std::uint8_t, erasure::Shard> pool;
      for (const auto& [node, held] : data_) {
        if (sim_.is_down(node)) continue;
        for (auto it = held.lower_bound({blob, 0}); it != held.end() && it->first.blob == blob; ++it) {
          pool.emplace(it->first.index, it->second);
        }
      }
      std::vector<erasure::Shard> shards;
      for (auto& [idx, sh] : pool) shards.push_back(sh);
      try {
        if (erasure::rs_decode(shards, p_.coding) == original) {
          ++rep.decodable_blobs;
          continue;
        }
      } catch (const erasure::ErasureError&) {
      }
      violations_.push_back("blob " + blob.substr(0, 16) + " not recoverable at end of run");
    }
    const auto [lo, hi] = replica_range();
    rep.min_replicas = lo;
    rep.max_replicas = hi;
    if (lo < p_.daemon.min_replicas || hi > p_.daemon.max_replicas) {
      violations_.push_back("replica counts " + std::to_string(lo) + ".." + std::to_string(hi) + " outside [" +
                            std::to_string(p_.daemon.min_replicas) + ", " + std::to_string(p_.daemon.max_replicas) +
                            "]");
    }
    rep.injected_failures = injected_;
    rep.trace_digest = sim_.trace_digest();

    rep.output.files["storage/actions.jsonl"] = actions_;
    rep.output.files["storage/cycles.csv"] =
        "t_ms,live_nodes,stale,actions,queued,min_replicas,max_replicas,decodable_blobs\n" + metrics_;
    std::string det = "node,detection_latency_ms\n";
    for (const auto& [node, lat] : detected_) det += node + "," + std::to_string(lat.count()) + "\n";
    rep.output.files["storage/stale_detection.csv"] = det;

    auto& sum = rep.output.summary;
    sum["scenario"] = s_.name;
    sum["kind"] = "storage";
    sum["seed"] = s_.seed;
    sum["blobs"] = rep.blobs;
    sum["decodable_blobs"] = rep.decodable_blobs;
    sum["min_replicas"] = lo;
    sum["max_replicas"] = hi;
    sum["demoted"] = rep.demoted;
    sum["injected_failures"] = injected_;
    sum["trace_digest"] = rep.trace_digest;
    rep.output.violations = violations_;
  }

  const Scenario& s_;
  const StorageParams& p_;
  sim::Simulator sim_;
  Rng rng_;
  storage::NodeRegistry registry_;
  storage::ReplicationDaemon daemon_;
  std::vector<NodeId> eligible_;
  std::map<NodeId, std::map<ShardRef, erasure::Shard>> data_;
  std::map<std::string, Bytes> originals_;
  std::map<NodeId, SimTime> down_since_;
  std::map<NodeId, SimDuration> detected_;
  std::size_t injected_ = 0;
  bool finished_ = false;
  std::string actions_;
  std::string metrics_;
  std::vector<std::string> violations_;
};

}  // namespace

StorageReport run_storage(const Scenario& s) {
  if (s.kind != Kind::kStorage) throw ScenarioError(s.name + ": not a storage scenario");
  StorageRun run(s);
  return run.run();
}

}  // namespace dtnet::scenario
