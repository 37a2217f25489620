#include "doctest.h"

#include <stdexcept>
#include <filesystem>

#include "dtnet/runners.hpp"
#include "dtnet/scenario.hpp"

using namespace dtnet;
using namespace dtnet::scenario;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_scenario(text, "t.yaml");
  } catch (const ScenarioError& e) {
    return e.what();
  }
  return {};
}

std::filesystem::path scenario_path(const std::string& name) {
  return std::filesystem::path(DTNET_SCENARIO_DIR) / name;
}

}  // namespace

TEST_CASE("minimal scenario with defaults") {
  auto s = parse_scenario("name: x\nkind: diloco\nseed: 7\nnodes:\n  - {id: a}\n  - {id: b}\n");
  CHECK(s.name == "x");
  CHECK(s.kind == Kind::kDiloco);
  CHECK(s.seed == 7);
  CHECK(s.nodes.size() == 2);
  CHECK(s.diloco.rounds == 30);
  CHECK(s.diloco.inner_steps == 20);
  CHECK(s.ledger.rewards.daily_cap == 144 * s.ledger.rewards.pool_per_epoch);
}

TEST_CASE("diagnostics carry line and column") {
  CHECK(error_of("name: x\nkind: diloco\nseed: 1\nnodes:\n  - {id: a}\nbogus: 3\n") ==
        "t.yaml:6:1: unknown key 'bogus'");
  CHECK(error_of("name: x\nkind: warp\nseed: 1\n") == "t.yaml:2:7: unknown kind 'warp'");
  CHECK(error_of("name: x\nkind: diloco\nseed: 1\nnodes:\n  - {id: a}\ndiloco:\n  rounds: many\n") ==
        "t.yaml:7:11: key 'diloco.rounds' has the wrong type");
  CHECK(error_of("name: x\nkind: diloco\nseed: 1\nnodes:\n  - {id: a}\ndiloco:\n  roundz: 3\n") ==
        "t.yaml:7:3: unknown key 'diloco.roundz'");
  CHECK(error_of("name: x\nkind: diloco\nnodes:\n  - {id: a}\n").find("missing required key 'seed'") !=
        std::string::npos);
  CHECK(error_of("name: [unclosed\n").rfind("t.yaml:", 0) == 0);
}

TEST_CASE("semantic validation") {
  const std::string head = "name: x\nkind: storage\nseed: 1\nnodes:\n  - {id: a}\n";
  CHECK(error_of(head + "network:\n  drop_probability: 1.5\n").find("must lie in [0, 1]") != std::string::npos);
  CHECK(error_of(head + "failures:\n  - {node: zz, down_s: 1}\n").find("unknown node 'zz'") != std::string::npos);
  CHECK(error_of(head + "storage:\n  min_replicas: 6\n  max_replicas: 5\n").find("replica bounds") !=
        std::string::npos);
  CHECK(error_of(head + "storage:\n  data_shards: 250\n  parity_shards: 10\n").find("invalid coding") !=
        std::string::npos);
  CHECK(error_of("name: x\nkind: storage\nseed: 1\nnodes:\n  - {id: a}\n  - {id: a}\n").find("duplicate node id") !=
        std::string::npos);
  CHECK(error_of("name: x\nkind: ledger\nseed: 1\nnodes:\n  - {id: a}\nrewards:\n  quorum: {q: 4, n: 3}\n")
            .find("invalid rewards") != std::string::npos);
}

TEST_CASE("reward section is exact") {
  auto s = parse_scenario(
      "name: x\nkind: ledger\nseed: 1\nnodes:\n  - {id: a, tier: claude_session, bond: 100}\n"
      "rewards:\n  pool_per_epoch: 500\n  tier_multipliers: {cpu_only: 0.35}\n"
      "  slash_schedule: {liveness_fault: 0.2}\n");
  CHECK(s.ledger.rewards.pool_per_epoch == 500);
  CHECK(s.ledger.rewards.daily_cap == 144 * 500);
  CHECK(s.ledger.rewards.tier_multipliers.at(storage::Tier::kCpuOnly) == ledger::Rational(7, 20));
  CHECK(s.ledger.rewards.slash_schedule.at("liveness_fault") == ledger::Rational(1, 5));
  CHECK(s.nodes[0].bond == 100);
}

TEST_CASE("shipped scenarios parse") {
  for (const auto& e : std::filesystem::directory_iterator(DTNET_SCENARIO_DIR)) {
    CAPTURE(e.path().string());
    CHECK_NOTHROW(load_scenario(e.path()));
  }
  CHECK_THROWS_AS(load_scenario(scenario_path("does_not_exist.yaml")), ScenarioError);
}

TEST_CASE("zero-round diloco run writes only the baseline") {
  auto out = run(load_scenario(scenario_path("diloco_zero.yaml")));
  CHECK(out.violations.empty());
  CHECK(out.files.size() == 1);
  CHECK(out.files.contains("diloco/baseline.csv"));
}

TEST_CASE("reruns are byte-identical") {
  for (auto name : {"diloco_dropout.yaml", "storage_failures.yaml", "ledger_default.yaml", "autoloop_stopping.yaml"}) {
    CAPTURE(name);
    auto s = load_scenario(scenario_path(name));
    auto a = run(s);
    auto b = run(s);
    CHECK(a.digest() == b.digest());
    CHECK(a.files == b.files);
    CHECK(a.violations.empty());
  }
}

TEST_CASE("seed changes the run") {
  auto s = load_scenario(scenario_path("ledger_default.yaml"));
  auto a = run(s).digest();
  s.seed += 1;
  CHECK(run(s).digest() != a);
}

TEST_CASE("ledger scenario replays its invariants") {
  auto rep = run_ledger(load_scenario(scenario_path("ledger_default.yaml")));
  CHECK(rep.conservation_ok);
  CHECK(rep.chain_ok);
  CHECK(rep.settled > 0);
  CHECK(rep.output.violations.empty());
}

TEST_CASE("storage scenario reaches the replica targets") {
  auto rep = run_storage(load_scenario(scenario_path("storage_failures.yaml")));
  CHECK(rep.decodable_blobs == rep.blobs);
  CHECK(rep.min_replicas >= 3);
  CHECK(rep.max_replicas <= 5);
  CHECK(rep.demoted == std::vector<NodeId>{"slow-read", "slow-write"});
}

TEST_CASE("autoloop scenario reproduces the stopping example") {
  auto rep = run_autoloop(load_scenario(scenario_path("autoloop_stopping.yaml")));
  CHECK(rep.result.stop == autoloop::StopReason::kConverged);
  CHECK(rep.result.history.size() == 4);
}

TEST_CASE("run output digest covers names and contents") {
  RunOutput a;
  a.files["x"] = "1";
  RunOutput b;
  b.files["y"] = "1";
  RunOutput c;
  c.files["x"] = "2";
  CHECK(a.digest() != b.digest());
  CHECK(a.digest() != c.digest());
}
