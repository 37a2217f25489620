#pragma once

#include "dtnet/autoloop.hpp"
#include "dtnet/scenario.hpp"

namespace dtnet::scenario {

struct DilocoReport {
  RunOutput output;
  double final_loss = 0.0;        // pooled training loss of the last base
  double centralized_loss = 0.0;  // equal-step centralized run on pooled data
  std::size_t merged_rounds = 0;
  std::size_t failed_rounds = 0;
  std::vector<std::size_t> participants;  // gradients merged per round, 0 if failed
  std::string trace_digest;
};

/// Leader-rotated DiLoCo rounds over the simulated network. Peers train on
/// IID shards of one synthetic regression task.
DilocoReport run_diloco(const Scenario& s);

struct StorageReport {
  RunOutput output;
  std::size_t blobs = 0;
  std::size_t decodable_blobs = 0;
  std::size_t min_replicas = 0;  // over all shards at the end of the run
  std::size_t max_replicas = 0;
  std::vector<NodeId> demoted;  // storage nodes provisioned down to mobile_light
  std::size_t injected_failures = 0;
  std::string trace_digest;
};

/// Heartbeats, failure injection and the replication daemon over real shard
/// bytes held per node.
StorageReport run_storage(const Scenario& s);

struct LedgerReport {
  RunOutput output;
  std::size_t settled = 0;
  std::size_t carried = 0;
  std::size_t deferred = 0;
  std::size_t slashes = 0;
  bool conservation_ok = true;
  bool chain_ok = true;
};

/// Randomized contributions, settlements, commit-reveal tasks and data
/// registrations with invariant replay after every epoch.
LedgerReport run_ledger(const Scenario& s);

struct AutoloopReport {
  RunOutput output;
  autoloop::LoopResult result;
};

AutoloopReport run_autoloop(const Scenario& s);

/// Dispatches on the scenario kind.
RunOutput run(const Scenario& s);

}  // namespace dtnet::scenario
