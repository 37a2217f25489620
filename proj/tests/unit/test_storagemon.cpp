#include "doctest.h"

#include "dtnet/random.hpp"
#include "dtnet/storagemon.hpp"

using namespace dtnet;
using namespace dtnet::storage;

namespace {

NodeRecord node(const NodeId& id, const std::string& region, Tier tier = Tier::kStorageNode) {
  return {id, tier, 200.0, 100.0, SimTime{0}, region, 0};
}

const ActionExecutor kAlwaysLands = [](const DaemonAction&) { return true; };

}  // namespace

TEST_CASE("provisioning thresholds") {
  auto r = node("x", "eu");
  r.read_mbps = 150;
  r.write_mbps = 80;
  CHECK(provision_check(r) == Tier::kStorageNode);
  r.read_mbps = 99;
  CHECK(provision_check(r) == Tier::kMobileLight);
  r.read_mbps = 150;
  r.write_mbps = 49;
  CHECK(provision_check(r) == Tier::kMobileLight);
  r.read_mbps = 100;
  r.write_mbps = 50;
  CHECK(provision_check(r) == Tier::kStorageNode);
  r.tier = Tier::kMobileLight;
  CHECK(provision_check(r) == Tier::kMobileLight);
  NodeRegistry reg;
  r.tier = Tier::kGpuCompute;
  r.read_mbps = 10;
  CHECK(reg.register_node(r) == Tier::kMobileLight);
  CHECK(reg.get("x").tier == Tier::kMobileLight);
}

TEST_CASE("staleness is strictly after 120 s") {
  NodeRegistry reg;
  reg.register_node(node("a", "eu"));
  reg.heartbeat("a", seconds(10));
  CHECK_FALSE(reg.is_stale("a", seconds(10)));
  CHECK_FALSE(reg.is_stale("a", seconds(130)));
  CHECK(reg.is_stale("a", seconds(130) + SimDuration{1}));
  CHECK(reg.is_stale("a", seconds(131)));
  // Heartbeats never move the clock backwards.
  reg.heartbeat("a", seconds(5));
  CHECK(reg.get("a").last_heartbeat == seconds(10));
  CHECK_THROWS_AS(reg.heartbeat("ghost", seconds(1)), UnknownNodeError);
}

TEST_CASE("sweep finds stale holders and is idempotent") {
  NodeRegistry reg;
  for (auto id : {"a", "b", "c", "d", "e", "f"}) reg.register_node(node(id, id));
  ReplicationDaemon d(reg);
  d.track_blob("blob", {4, 2}, {{0, {"a"}}, {1, {"b"}}, {2, {"c"}}, {3, {"d"}}, {4, {"e"}}, {5, {"f"}}});
  for (auto id : {"a", "b", "c", "d", "e", "f"}) reg.heartbeat(id, seconds(100));
  CHECK(d.liveness_sweep(seconds(200)).empty());
  for (auto id : {"a", "b", "c", "d"}) reg.heartbeat(id, seconds(200));
  const auto first = d.liveness_sweep(seconds(221));
  CHECK(first == std::set<NodeId>{"e", "f"});
  CHECK(d.liveness_sweep(seconds(221)) == first);
  CHECK(d.priority_for("blob", seconds(221)) == RepairPriority::kCritical);
  CHECK(d.queue().size(RepairPriority::kCritical) == 2);
}

TEST_CASE("priority mapping by surviving shards") {
  NodeRegistry reg;
  for (auto id : {"a", "b", "c", "d", "e", "f"}) reg.register_node(node(id, "r"));
  ReplicationDaemon d(reg);
  d.track_blob("blob", {4, 2}, {{0, {"a"}}, {1, {"b"}}, {2, {"c"}}, {3, {"d"}}, {4, {"e"}}, {5, {"f"}}});
  const auto t = seconds(500);
  for (auto id : {"a", "b", "c", "d", "e", "f"}) reg.heartbeat(id, t);
  CHECK(d.priority_for("blob", t) == RepairPriority::kNormal);
  reg.heartbeat("a", t + seconds(200));
  reg.heartbeat("b", t + seconds(200));
  reg.heartbeat("c", t + seconds(200));
  reg.heartbeat("d", t + seconds(200));
  reg.heartbeat("e", t + seconds(200));
  CHECK(d.priority_for("blob", t + seconds(200)) == RepairPriority::kHigh);
  reg.heartbeat("a", t + seconds(400));
  reg.heartbeat("b", t + seconds(400));
  reg.heartbeat("c", t + seconds(400));
  reg.heartbeat("d", t + seconds(400));
  CHECK(d.priority_for("blob", t + seconds(400)) == RepairPriority::kCritical);
  reg.heartbeat("a", t + seconds(600));
  CHECK_FALSE(d.priority_for("blob", t + seconds(600)).has_value());
}

TEST_CASE("replication targets a new region") {
  NodeRegistry reg;
  reg.register_node(node("n1", "r1"));
  reg.register_node(node("n2", "r2"));
  reg.register_node(node("n3", "r3"));
  reg.register_node(node("n4", "r1"));
  ReplicationDaemon d(reg);
  d.track_blob("blob", {1, 1}, {{0, {"n1", "n2"}}, {1, {"n1", "n2", "n4"}}});
  auto actions = d.replication_cycle(SimTime{0}, kAlwaysLands);
  std::vector<DaemonAction> rep;
  for (const auto& a : actions)
    if (a.kind == "replicate") rep.push_back(a);
  REQUIRE(rep.size() == 1);
  CHECK(rep[0].shard == 0);
  CHECK(rep[0].target == "n3");
  CHECK(d.live_holders({"blob", 0}, SimTime{0}).size() == 3);
}

TEST_CASE("shards at the cap are left alone") {
  NodeRegistry reg;
  for (auto id : {"a", "b", "c", "d", "e", "f"}) reg.register_node(node(id, id));
  ReplicationDaemon d(reg);
  d.track_blob("blob", {1, 1}, {{0, {"a", "b", "c", "d", "e"}}, {1, {"a", "b", "c", "d", "e"}}});
  CHECK(d.replication_cycle(SimTime{0}, kAlwaysLands).empty());
}

TEST_CASE("rate limit processes four tasks per cycle") {
  NodeRegistry reg;
  for (int i = 0; i < 8; ++i) reg.register_node(node("n" + std::to_string(i), "r" + std::to_string(i)));
  ReplicationDaemon d(reg);
  std::map<std::uint8_t, std::set<NodeId>> holders;
  for (std::uint8_t i = 0; i < 10; ++i) holders[i] = {"n0", "n1"};
  d.track_blob("blob", {5, 5}, holders);
  auto actions = d.replication_cycle(SimTime{0}, kAlwaysLands);
  CHECK(actions.size() == 4);
  CHECK(d.queue().size() == 6);
  d.replication_cycle(seconds(30), kAlwaysLands);
  d.replication_cycle(seconds(60), kAlwaysLands);
  CHECK(d.queue().empty());
  for (const auto& ref : d.shards()) {
    const auto n = d.live_holders(ref, seconds(60)).size();
    CHECK(n >= 3);
    CHECK(n <= 5);
  }
}

TEST_CASE("failed transfers are retried") {
  NodeRegistry reg;
  for (auto id : {"a", "b", "c", "d"}) reg.register_node(node(id, id));
  ReplicationDaemon d(reg);
  d.track_blob("blob", {1, 1}, {{0, {"a"}}, {1, {"a", "b", "c"}}});
  auto first = d.replication_cycle(SimTime{0}, [](const DaemonAction&) { return false; });
  REQUIRE_FALSE(first.empty());
  CHECK(first[0].kind == "failed");
  CHECK(d.queue().size() == 1);
  d.replication_cycle(seconds(30), kAlwaysLands);
  d.replication_cycle(seconds(60), kAlwaysLands);
  CHECK(d.live_holders({"blob", 0}, seconds(60)).size() == 3);
}

TEST_CASE("lost shards are reconstructed from the survivors") {
  NodeRegistry reg;
  for (auto id : {"a", "b", "c", "d", "e", "f", "g", "h"}) reg.register_node(node(id, id));
  ReplicationDaemon d(reg);
  d.track_blob("blob", {4, 2}, {{0, {"a"}}, {1, {"b"}}, {2, {"c"}}, {3, {"d"}}, {4, {"e"}}, {5, {"f"}}});
  for (auto id : {"a", "b", "c", "d", "g", "h"}) reg.heartbeat(id, seconds(200));
  auto actions = d.replication_cycle(seconds(200), kAlwaysLands);
  int reconstruct = 0;
  for (const auto& a : actions) {
    if (a.kind == "reconstruct") {
      ++reconstruct;
      CHECK(a.priority == "critical");
      CHECK((a.shard == 4 || a.shard == 5));
    }
  }
  CHECK(reconstruct == 2);
  CHECK(d.surviving_shards("blob", seconds(200)) == 6);
}

TEST_CASE("repair queue drains by priority and deduplicates") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    RepairQueue q;
    std::map<ShardRef, RepairPriority> best;
    for (int i = 0; i < 30; ++i) {
      ShardRef ref{"b" + std::to_string(rng.below(3)), static_cast<std::uint8_t>(rng.below(4))};
      auto p = static_cast<RepairPriority>(rng.below(3));
      q.push({ref, p, SimTime{i}});
      auto it = best.find(ref);
      if (it == best.end() || p < it->second) best[ref] = p;
    }
    CHECK(q.size() == best.size());
    int last = 0;
    while (auto t = q.pop()) {
      const int p = static_cast<int>(t->priority);
      CHECK(p >= last);
      CHECK(t->priority == best.at(t->shard));
      last = p;
    }
  }
}

TEST_CASE("tier names round trip") {
  for (Tier t : {Tier::kClaudeSession, Tier::kGpuCompute, Tier::kStorageNode, Tier::kCpuOnly, Tier::kMobileLight}) {
    CHECK(parse_tier(tier_name(t)) == t);
  }
  CHECK_FALSE(parse_tier("quantum").has_value());
}
