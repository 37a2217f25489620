#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "dtnet/autoloop.hpp"
#include "dtnet/common.hpp"
#include "dtnet/erasure.hpp"
#include "dtnet/ledger.hpp"
#include "dtnet/simnet.hpp"
#include "dtnet/storagemon.hpp"

namespace dtnet::scenario {

/// Carries "source:line:column: message" for configuration problems.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Kind { kDiloco, kStorage, kLedger, kAutoloop };
const char* kind_name(Kind k);

struct NodeSpec {
  NodeId id;
  storage::Tier tier = storage::Tier::kGpuCompute;
  std::string region = "default";
  double read_mbps = 0.0;
  double write_mbps = 0.0;
  double speed = 1.0;  // inner steps run at step_time / speed
  ledger::Units bond = 0;
};

/// The node is down during [down_at, up_at).
struct FailureSpec {
  NodeId node;
  SimTime down_at{0};
  std::optional<SimTime> up_at;
};

struct DilocoParams {
  std::uint64_t rounds = 30;
  std::size_t inner_steps = 20;
  SimDuration step_time{50};
  SimDuration round_deadline = seconds(30);
  SimDuration ack_window{500};
  SimDuration check_interval{500};
  SimDuration heartbeat_interval = seconds(1);
  SimDuration peer_timeout = seconds(3);
  std::size_t features = 8;
  std::size_t rows_per_node = 256;
  std::size_t test_rows = 1024;
  double noise_std = 0.1;
  double inner_lr = 0.01;
  double outer_lr = 0.7;
  double outer_momentum = 0.9;
};

struct StorageParams {
  std::size_t blobs = 8;
  std::size_t min_blob_bytes = 1024;
  std::size_t max_blob_bytes = 65536;
  erasure::CodingParams coding;
  storage::DaemonConfig daemon;
  storage::ProvisioningThresholds thresholds;
  SimDuration heartbeat_interval = seconds(10);
  SimDuration duration = seconds(3600);
  std::size_t random_failures = 0;
  SimTime failure_start = seconds(900);
  SimDuration failure_spacing = seconds(300);
};

struct LedgerParams {
  ledger::LedgerConfig rewards;
  std::uint64_t epochs = 144;
  double participation = 0.8;
  std::size_t commit_tasks_per_epoch = 2;
  double mismatch_probability = 0.05;
  std::size_t data_records = 4;
  double challenge_probability = 0.5;
};

struct AutoloopParams {
  std::string task = "pivot";  // "pivot" or "scripted"
  std::size_t train_rows = 2000;
  std::size_t eval_rows = 1000;
  double threshold = 0.3;
  std::vector<double> scripted_scores;
  autoloop::LoopParams loop;
};

/// A scenario and its seed fully determine a run.
struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  Kind kind = Kind::kDiloco;
  std::vector<NodeSpec> nodes;
  sim::LinkPolicy network;
  std::vector<FailureSpec> failures;
  DilocoParams diloco;
  StorageParams storage;
  LedgerParams ledger;
  AutoloopParams autoloop;
};

/// Parses YAML text. `source` names the text in diagnostics.
Scenario parse_scenario(const std::string& text, const std::string& source = "<scenario>");
Scenario load_scenario(const std::filesystem::path& path);

/// Files produced by a scenario run, keyed by relative path.
struct RunOutput {
  std::map<std::string, std::string> files;
  std::vector<std::string> violations;
  nlohmann::ordered_json summary;

  /// SHA-256 over every (name, content) pair in name order, hex.
  std::string digest() const;
  /// Writes every file under `dir`, creating subdirectories.
  void write(const std::filesystem::path& dir) const;
};

}  // namespace dtnet::scenario
