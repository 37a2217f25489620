#include "dtnet/rounds.hpp"

#include <algorithm>
#include <iterator>

#include "json.hpp"

namespace dtnet::rounds {

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::kAnnounced: return "announced";
    case Phase::kCollecting: return "collecting";
    case Phase::kMerging: return "merging";
    case Phase::kComplete: return "complete";
    case Phase::kFailed: return "failed";
  }
  return "unknown";
}

std::string PhaseTransition::to_json_line() const {
  nlohmann::ordered_json j;
  j["round"] = round;
  j["phase"] = phase_name(phase);
  j["collected"] = collected;
  j["needed"] = needed;
  j["t_ms"] = at.count();
  return j.dump();
}

NodeId elect_leader(const std::set<NodeId>& eligible, std::uint64_t round) {
  if (eligible.empty()) throw std::invalid_argument("elect_leader: empty eligible set");
  auto it = eligible.begin();
  std::advance(it, static_cast<std::ptrdiff_t>(round % eligible.size()));
  return *it;
}

RoundAnnouncement RoundCoordinator::announce(std::uint64_t round, std::size_t inner_steps, SimTime now,
                                             SimTime deadline, std::string base_hash,
                                             const std::set<NodeId>& eligible) {
  if (!eligible.contains(self_) || elect_leader(eligible, round) != self_) {
    throw RoundError("announce: " + self_ + " is not the leader of round " + std::to_string(round));
  }
  if (last_announced_ && *last_announced_ >= round) {
    throw RoundError("announce: round " + std::to_string(round) + " already announced");
  }
  if (deadline <= now) throw RoundError("announce: deadline must be after announcement time");

  // Collection state exists before anything is broadcast, so a peer that
  // answers within the same tick is still counted.
  RoundState s;
  s.round = round;
  s.phase = Phase::kAnnounced;
  s.leader = self_;
  s.eligible = eligible;
  s.accepted = {self_};
  s.needed = eligible.size();
  s.deadline = deadline;
  state_ = std::move(s);
  last_announced_ = round;
  transition(Phase::kAnnounced, now);

  RoundAnnouncement a;
  a.round = round;
  a.inner_steps = inner_steps;
  a.issued_at = now;
  a.deadline = deadline;
  a.base_hash = std::move(base_hash);
  a.leader = self_;
  return a;
}

bool RoundCoordinator::acknowledge(const NodeId& peer, std::uint64_t round) {
  if (!state_ || state_->round != round || state_->phase != Phase::kAnnounced) return false;
  if (!state_->eligible.contains(peer)) return false;
  return state_->accepted.insert(peer).second;
}

SignalOutcome RoundCoordinator::accept_signal(const GradientReadySignal& sig) {
  if (!state_ || sig.round != state_->round) return SignalOutcome::kWrongRound;
  if (state_->phase != Phase::kAnnounced && state_->phase != Phase::kCollecting) return SignalOutcome::kClosed;
  if (!state_->eligible.contains(sig.node)) return SignalOutcome::kUnknownSender;
  if (!state_->collected_from.insert(sig.node).second) return SignalOutcome::kDuplicate;
  // A gradient that overtakes its sender's ack still counts as an ack.
  if (state_->accepted.insert(sig.node).second && state_->phase == Phase::kCollecting) {
    state_->needed = state_->accepted.size();
  }
  state_->collected = state_->collected_from.size();
  return SignalOutcome::kCounted;
}

void RoundCoordinator::update_round_needed(const std::set<NodeId>& reachable, SimTime now) {
  if (!state_ || (state_->phase != Phase::kAnnounced && state_->phase != Phase::kCollecting)) return;
  std::set<NodeId> accepted{self_};
  for (const auto& n : reachable) {
    if (state_->accepted.contains(n)) accepted.insert(n);
  }
  // A peer whose gradient already arrived was reachable by definition.
  accepted.insert(state_->collected_from.begin(), state_->collected_from.end());
  const std::size_t needed = std::max<std::size_t>(1, accepted.size());
  const bool changed = accepted != state_->accepted || needed != state_->needed ||
                       state_->phase == Phase::kAnnounced;
  state_->accepted = std::move(accepted);
  state_->needed = needed;
  if (changed) transition(Phase::kCollecting, now);
}

bool RoundCoordinator::try_begin_merge(SimTime now) {
  if (!state_ || state_->phase != Phase::kCollecting || state_->collected < state_->needed) return false;
  transition(Phase::kMerging, now);
  return true;
}

void RoundCoordinator::complete_merge(SimTime now) {
  if (!state_ || state_->phase != Phase::kMerging) throw RoundError("complete_merge outside Merging");
  state_->merges += 1;
  transition(Phase::kComplete, now);
}

bool RoundCoordinator::expire(SimTime now) {
  if (!state_ || now < state_->deadline) return false;
  if (state_->phase != Phase::kAnnounced && state_->phase != Phase::kCollecting) return false;
  transition(Phase::kFailed, now);
  return true;
}

void RoundCoordinator::transition(Phase p, SimTime now) {
  state_->phase = p;
  transitions_.push_back({state_->round, p, state_->collected, state_->needed, now});
}

std::optional<MergeOutcome> maybe_merge(RoundCoordinator& coord, const ParamVector& base,
                                        const std::vector<diloco::PseudoGradient>& grads,
                                        const std::vector<diloco::ContributionWeight>& weights,
                                        diloco::OuterOptimizerState& outer, BlobStore& store, SimTime now) {
  if (!coord.try_begin_merge(now)) return std::nullopt;
  const auto& st = *coord.state();

  std::vector<diloco::PseudoGradient> used;
  for (const auto& g : grads) {
    if (st.collected_from.contains(g.source)) used.push_back(g);
  }
  if (used.empty()) throw RoundError("maybe_merge: no collected gradients available");

  // Renormalize over the gradients actually merged.
  std::vector<NodeId> ids;
  std::map<NodeId, double> scores;
  for (const auto& g : used) ids.push_back(g.source);
  for (const auto& w : weights) scores[w.node] = w.weight;
  auto merge_weights = diloco::normalize_weights(ids, scores);

  auto [merged, next_outer] = diloco::outer_update(base, used, merge_weights, outer);
  outer = std::move(next_outer);

  MergeOutcome out;
  out.content_key = store.put(encode_params(merged));
  store.promote("latest.pt", out.content_key);
  out.record.round = st.round;
  for (const auto& w : merge_weights) {
    out.record.participants.push_back(w.node);
    out.record.weights.push_back(w.weight);
  }
  out.record.merged_hash = to_hex(hash_params(merged));
  out.record.ternary_hash = to_hex(quant::hash_tensor(diloco::requantize_after_merge(merged)));
  out.merged = std::move(merged);
  coord.complete_merge(now);
  return out;
}

NextRound advance(const RoundState& finished, const std::set<NodeId>& eligible, std::string merged_or_old_base) {
  if (finished.phase != Phase::kComplete && finished.phase != Phase::kFailed) {
    throw RoundError("advance: round " + std::to_string(finished.round) + " still in progress");
  }
  NextRound next;
  next.round = finished.round + 1;
  next.base_hash = std::move(merged_or_old_base);
  std::set<NodeId> pool = eligible;
  if (finished.phase == Phase::kFailed && !finished.collected_from.contains(finished.leader) &&
      pool.size() > 1) {
    pool.erase(finished.leader);
    next.leader_excluded = true;
  }
  next.leader = elect_leader(pool, next.round);
  return next;
}

}  // namespace dtnet::rounds
