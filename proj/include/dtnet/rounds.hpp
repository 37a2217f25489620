#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtnet/blob_store.hpp"
#include "dtnet/common.hpp"
#include "dtnet/diloco.hpp"

namespace dtnet::rounds {

enum class Phase { kAnnounced, kCollecting, kMerging, kComplete, kFailed };

const char* phase_name(Phase p);

struct RoundAnnouncement {
  std::uint64_t round = 0;
  std::size_t inner_steps = 0;
  SimTime issued_at{0};
  SimTime deadline{0};
  std::string base_hash;  // content key of the base checkpoint
  NodeId leader;
};

struct GradientReadySignal {
  std::uint64_t round = 0;
  NodeId node;
  std::string gradient_hash;
  std::string content_address;
  double local_loss = 0.0;
};

/// Leader-side collection state for one round.
struct RoundState {
  std::uint64_t round = 0;
  Phase phase = Phase::kAnnounced;
  std::size_t collected = 0;
  std::size_t needed = 1;
  std::set<NodeId> accepted;   // peers that acknowledged, plus the leader
  std::set<NodeId> collected_from;
  std::set<NodeId> eligible;
  NodeId leader;
  SimTime deadline{0};
  std::size_t merges = 0;
};

struct PhaseTransition {
  std::uint64_t round = 0;
  Phase phase = Phase::kAnnounced;
  std::size_t collected = 0;
  std::size_t needed = 0;
  SimTime at{0};

  std::string to_json_line() const;
};

class RoundError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class SignalOutcome { kCounted, kDuplicate, kWrongRound, kUnknownSender, kClosed };

/// sorted(eligible)[round mod N]. Throws std::invalid_argument on an empty set.
NodeId elect_leader(const std::set<NodeId>& eligible, std::uint64_t round);

/// The round state machine owned by one node. Only the elected leader's
/// instance ever holds a live round. Copyable so model checkers can branch it.
class RoundCoordinator {
 public:
  explicit RoundCoordinator(NodeId self) : self_(std::move(self)) {}

  /// Creates collection state, then returns the message to broadcast. Throws
  /// RoundError if `self` is not the leader for `round` or the round was
  /// already announced.
  RoundAnnouncement announce(std::uint64_t round, std::size_t inner_steps, SimTime now, SimTime deadline,
                             std::string base_hash, const std::set<NodeId>& eligible);

  /// Records a peer acknowledgement while the round is still Announced.
  bool acknowledge(const NodeId& peer, std::uint64_t round);

  /// Counts a signal from an eligible node once. A signal from a node that
  /// has not acknowledged yet also counts as its acknowledgement.
  SignalOutcome accept_signal(const GradientReadySignal& sig);

  /// needed = |accepted|, never below 1. Unreachable peers are simply absent
  /// from `reachable`. Moves Announced -> Collecting; no-op in later phases.
  void update_round_needed(const std::set<NodeId>& reachable, SimTime now);

  /// Collecting and collected >= needed: enters Merging and returns true once.
  bool try_begin_merge(SimTime now);
  void complete_merge(SimTime now);

  /// Marks the round Failed if the deadline has passed without a merge.
  bool expire(SimTime now);

  const std::optional<RoundState>& state() const { return state_; }
  const NodeId& self() const { return self_; }
  const std::vector<PhaseTransition>& transitions() const { return transitions_; }

 private:
  void transition(Phase p, SimTime now);

  NodeId self_;
  std::optional<RoundState> state_;
  std::optional<std::uint64_t> last_announced_;
  std::vector<PhaseTransition> transitions_;
};

struct MergeOutcome {
  ParamVector merged;
  std::string content_key;
  diloco::MergeRecord record;
};

/// When the coordinator is ready, runs the outer update over the collected
/// gradients, stores the result under its content key, promotes it to
/// "latest.pt", and completes the round. Otherwise returns nullopt.
std::optional<MergeOutcome> maybe_merge(RoundCoordinator& coord, const ParamVector& base,
                                        const std::vector<diloco::PseudoGradient>& grads,
                                        const std::vector<diloco::ContributionWeight>& weights,
                                        diloco::OuterOptimizerState& outer, BlobStore& store, SimTime now);

struct NextRound {
  std::uint64_t round = 0;
  NodeId leader;
  std::string base_hash;
  bool leader_excluded = false;  // the previous leader missed its own deadline
};

/// Next round after a Complete or Failed round. A Failed round keeps the old
/// base. If the leader never contributed its own gradient it is left out of
/// this one election. Throws RoundError for a round still in progress.
NextRound advance(const RoundState& finished, const std::set<NodeId>& eligible, std::string merged_or_old_base);

}  // namespace dtnet::rounds
