#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "dtnet/common.hpp"
#include "dtnet/digest.hpp"
#include "dtnet/storagemon.hpp"

namespace dtnet::ledger {

using Rational = boost::multiprecision::cpp_rational;
using Units = std::int64_t;  // integer reward units

/// Parses "3", "0.25", "-1.5" or "1/3" exactly.
Rational parse_decimal(std::string_view text);
std::string to_string(const Rational& r);

/// 3.0 / 1.0 / 0.3 / 0.3 / 0.1 for claude_session .. mobile_light.
std::map<storage::Tier, Rational> default_tier_multipliers();

class LedgerError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Weights for combining the three contribution axes (data quality, training
/// compute, model quality). Non-negative, summing to one.
struct AxisWeights {
  Rational data_quality{1, 3};
  Rational training_compute{1, 3};
  Rational model_quality{1, 3};
};

Rational combine_axes(const Rational& data_quality, const Rational& training_compute, const Rational& model_quality,
                      const AxisWeights& w = {});

struct LedgerConfig {
  SimDuration epoch_length = seconds(600);
  Units pool_per_epoch = 1000;
  Units daily_cap = 144 * 1000;
  std::map<storage::Tier, Rational> tier_multipliers = default_tier_multipliers();
  std::map<std::string, Rational> slash_schedule = {
      {"fraudulent_approval", Rational(1)},
      {"mismatched_reveal", Rational(1, 2)},
      {"inaccurate_data", Rational(3, 10)},
      {"liveness_fault", Rational(1, 10)},
  };
  SimDuration challenge_window = seconds(3600);
  unsigned quorum_approvals = 2;  // q of ...
  unsigned quorum_panel = 3;      // ... n notary votes uphold a challenge
  Units notary_min_bond = 100;
  AxisWeights axis_weights;

  /// Throws std::invalid_argument for out-of-range values.
  void validate() const;
};

/// Largest-remainder apportionment of `pool` in proportion to `weights`.
/// Sum of the result equals `pool` when the total weight is positive. Ties in
/// the fractional part go to the smaller node id.
std::map<NodeId, Units> apportion(Units pool, const std::map<NodeId, Rational>& weights);

/// Exact quotas pool * w_i / sum_j w_j.
std::map<NodeId, Rational> exact_quotas(Units pool, const std::map<NodeId, Rational>& weights);

enum class SettlementStatus { kSettled, kCarried, kDeferred, kRejected };
const char* settlement_status_name(SettlementStatus s);

struct EpochLedger {
  std::uint64_t epoch = 0;
  Units pool = 0;
  std::map<NodeId, Rational> contributions;
  std::map<NodeId, Units> rewards;
  bool settled = false;
};

struct SettlementResult {
  SettlementStatus status = SettlementStatus::kRejected;
  Units pool = 0;
  std::map<NodeId, Units> rewards;
  std::map<NodeId, Rational> exact;
};

struct EmissionCounter {
  std::uint64_t day = 0;
  Units emitted = 0;
  Units cap = 0;
};

enum class CommitStatus { kPending, kRevealedOk, kSlashed };
const char* commit_status_name(CommitStatus s);

struct CommitRecord {
  NodeId node;
  Digest32 commitment{};
  SimTime committed_at{0};
  std::optional<std::pair<Bytes, Bytes>> revealed;  // (result, nonce)
  CommitStatus status = CommitStatus::kPending;
};

enum class RevealOutcome { kAccepted, kSlashed, kTooEarly };

struct SlashEvent {
  NodeId node;
  Rational rate;
  Units amount = 0;
  std::string reason;
};

enum class RegistrationStatus { kPending, kConfirmed, kRejected };

struct DataRegistration {
  std::string record_id;
  NodeId contributor;
  SimTime window_end{0};
  bool challenged = false;
  std::map<NodeId, bool> votes;  // notary -> upholds challenge
  RegistrationStatus status = RegistrationStatus::kPending;
};

/// Append-only event log. Each line carries the digest of the previous line.
class EventLog {
 public:
  void append(const std::string& type, nlohmann::ordered_json data);
  const std::vector<std::string>& lines() const { return lines_; }
  const std::string& head() const { return head_; }

  /// Recomputes the chain; false on any edited, dropped or reordered line.
  static bool verify(const std::vector<std::string>& lines);

 private:
  std::vector<std::string> lines_;
  std::string head_ = std::string(64, '0');
};

/// Single-writer incentive ledger: contributions, epoch settlement under a
/// daily emission cap, bonds, slashing, commit-reveal and data registration.
class Ledger {
 public:
  explicit Ledger(LedgerConfig cfg = {});

  const LedgerConfig& config() const { return cfg_; }
  std::uint64_t epoch_at(SimTime t) const;
  std::uint64_t day_at(SimTime t) const;

  /// Throws LedgerError if the epoch is settled or delta < 0.
  void record_contribution(std::uint64_t epoch, const NodeId& node, const Rational& delta);

  /// R_i = pool * T_i C_i / sum_j T_j C_j with largest-remainder rounding.
  /// `tiers` maps every contributing node to its multiplier. The emission day
  /// is taken from `now`. A second call for a settled epoch returns kRejected.
  SettlementResult settle_epoch(std::uint64_t epoch, const std::map<NodeId, Rational>& tiers, SimTime now);

  const EpochLedger& epoch(std::uint64_t e);
  const std::map<std::uint64_t, EpochLedger>& epochs() const { return epochs_; }
  Units carried_pool() const { return carry_; }
  EmissionCounter emission(std::uint64_t day) const;
  const std::map<std::uint64_t, Units>& emitted_by_day() const { return emitted_; }

  void post_bond(const NodeId& node, Units amount);
  Units bond(const NodeId& node) const;
  Units balance(const NodeId& node) const;

  /// Burns floor(rate * bond). Throws std::invalid_argument unless
  /// 0.1 <= rate <= 1.
  SlashEvent slash(const NodeId& node, const Rational& rate, const std::string& reason);
  /// Looks the rate up in the configured schedule.
  SlashEvent slash_for(const NodeId& node, const std::string& offense);
  const std::vector<SlashEvent>& slashes() const { return slashes_; }

  /// Commit-reveal. Commits are accepted strictly before `close`; reveals at
  /// or after it.
  void open_commit_round(const std::string& task, SimTime close);
  void commit(const std::string& task, const NodeId& node, const Digest32& commitment, SimTime now);
  RevealOutcome reveal(const std::string& task, const NodeId& node, const Bytes& result, const Bytes& nonce,
                       SimTime now);
  const CommitRecord& commit_record(const std::string& task, const NodeId& node) const;

  /// Data registration with a notary-adjudicated challenge window.
  void register_notary(const NodeId& notary);
  void register_data(const std::string& record_id, const NodeId& contributor, SimTime now);
  void challenge(const std::string& record_id, SimTime now);
  void notary_vote(const std::string& record_id, const NodeId& notary, bool uphold, SimTime now);
  RegistrationStatus finalize_registration(const std::string& record_id, SimTime now);
  const DataRegistration& registration(const std::string& record_id) const;

  const EventLog& log() const { return log_; }

 private:
  EpochLedger& open_epoch(std::uint64_t e);

  LedgerConfig cfg_;
  std::map<std::uint64_t, EpochLedger> epochs_;
  std::map<std::uint64_t, Units> emitted_;
  Units carry_ = 0;
  std::map<NodeId, Units> bonds_;
  std::map<NodeId, Units> balances_;
  std::vector<SlashEvent> slashes_;
  std::map<std::string, SimTime> commit_close_;
  std::map<std::string, std::map<NodeId, CommitRecord>> commits_;
  std::set<NodeId> notaries_;
  std::map<std::string, DataRegistration> registrations_;
  EventLog log_;
};

/// Commitment H(result || nonce).
Digest32 commitment(const Bytes& result, const Bytes& nonce);

struct IcResult {
  bool holds = false;
  double left = 0.0;    // s*B + gamma*R / (1 - gamma)
  double margin = 0.0;  // left - G
};

/// Incentive compatibility: s*B + sum_{t>=1} gamma^t R > G. Throws
/// std::invalid_argument unless gamma in (0, 1) and B, R, G >= 0.
IcResult ic_check(double bond, double slash_rate, double gamma, double reward, double attack_gain);

struct SybilReport {
  Rational unsplit_exact;
  Rational split_exact;
  Units unsplit_units = 0;
  Units split_units = 0;
  Units unsplit_bond_capital = 0;
  Units split_bond_capital = 0;
};

/// Settles the same pool twice: once with the attacker as one identity and
/// once with its contribution split equally over k identities of the same tier.
SybilReport sybil_compare(Units pool, const Rational& tier, const Rational& contribution, unsigned k,
                          const std::map<NodeId, std::pair<Rational, Rational>>& others, Units bond_per_identity);

/// Total reward across the identities in `ids` for one settlement.
Units sybil_total(Units pool, const std::map<NodeId, Rational>& weights, const std::vector<NodeId>& ids);

}  // namespace dtnet::ledger
