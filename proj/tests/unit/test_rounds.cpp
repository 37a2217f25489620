#include "doctest.h"

#include "dtnet/rounds.hpp"

using namespace dtnet;
using namespace dtnet::rounds;

namespace {

const std::set<NodeId> kABC{"a", "b", "c"};

GradientReadySignal sig(std::uint64_t round, const NodeId& n) { return {round, n, "h", "addr", 0.0}; }

}  // namespace

TEST_CASE("leader rotation") {
  std::vector<NodeId> got;
  for (std::uint64_t r = 0; r < 6; ++r) got.push_back(elect_leader(kABC, r));
  CHECK(got == std::vector<NodeId>{"a", "b", "c", "a", "b", "c"});
  CHECK(elect_leader(kABC, 5) == "c");
  CHECK(elect_leader({"solo"}, 12345) == "solo");
  CHECK_THROWS_AS(elect_leader({}, 0), std::invalid_argument);
}

TEST_CASE("only the leader announces, once per round") {
  RoundCoordinator b("b");
  CHECK_THROWS_AS(b.announce(0, 20, SimTime{0}, seconds(30), "base", kABC), RoundError);
  RoundCoordinator a("a");
  a.announce(0, 20, SimTime{0}, seconds(30), "base", kABC);
  CHECK_THROWS_AS(a.announce(0, 20, SimTime{0}, seconds(30), "base", kABC), RoundError);
}

TEST_CASE("signal in the same tick as the broadcast is counted") {
  RoundCoordinator a("a");
  a.announce(0, 1, SimTime{0}, seconds(30), "base", kABC);
  CHECK(a.accept_signal(sig(0, "b")) == SignalOutcome::kCounted);
  CHECK(a.state()->collected == 1);
  CHECK(a.state()->accepted.contains("b"));
}

TEST_CASE("three acks and three signals trigger one merge") {
  RoundCoordinator a("a");
  a.announce(0, 1, SimTime{0}, seconds(30), "base", kABC);
  CHECK(a.acknowledge("b", 0));
  CHECK(a.acknowledge("c", 0));
  a.update_round_needed(kABC, SimTime{1});
  CHECK(a.state()->needed == 3);
  CHECK(a.accept_signal(sig(0, "a")) == SignalOutcome::kCounted);
  CHECK(a.accept_signal(sig(0, "b")) == SignalOutcome::kCounted);
  CHECK(a.accept_signal(sig(0, "b")) == SignalOutcome::kDuplicate);
  CHECK(a.state()->collected == 2);
  CHECK_FALSE(a.try_begin_merge(SimTime{2}));
  CHECK(a.accept_signal(sig(0, "c")) == SignalOutcome::kCounted);
  CHECK(a.try_begin_merge(SimTime{3}));
  CHECK_FALSE(a.try_begin_merge(SimTime{3}));
  a.complete_merge(SimTime{4});
  CHECK(a.state()->merges == 1);
  CHECK(a.accept_signal(sig(0, "c")) == SignalOutcome::kClosed);
}

TEST_CASE("wrong round and unknown senders are ignored") {
  RoundCoordinator c("c");
  c.announce(5, 1, SimTime{0}, seconds(30), "base", kABC);
  CHECK(c.accept_signal(sig(4, "a")) == SignalOutcome::kWrongRound);
  CHECK(c.accept_signal(sig(5, "zed")) == SignalOutcome::kUnknownSender);
  CHECK(c.state()->collected == 0);
}

TEST_CASE("needed counts accepted peers, not eligible ones") {
  std::set<NodeId> five{"a", "b", "c", "d", "e"};
  RoundCoordinator a("a");
  a.announce(0, 1, SimTime{0}, seconds(30), "base", five);
  a.acknowledge("b", 0);
  a.acknowledge("c", 0);
  // d and e never answer.
  a.update_round_needed({"a", "b", "c"}, SimTime{1});
  CHECK(a.state()->needed == 3);
  const auto before = a.transitions().size();
  a.update_round_needed({"a", "b", "c"}, SimTime{2});
  CHECK(a.state()->needed == 3);
  CHECK(a.transitions().size() == before);

  RoundCoordinator lonely("a");
  lonely.announce(0, 1, SimTime{0}, seconds(30), "base", five);
  lonely.update_round_needed({}, SimTime{1});
  CHECK(lonely.state()->needed == 1);
}

TEST_CASE("expiry fails the round and advance keeps the old base") {
  RoundCoordinator a("a");
  a.announce(0, 1, SimTime{0}, seconds(30), "old", kABC);
  a.acknowledge("b", 0);
  a.update_round_needed(kABC, SimTime{1});
  a.accept_signal(sig(0, "b"));
  CHECK_FALSE(a.expire(seconds(29)));
  CHECK_THROWS_AS(advance(*a.state(), kABC, "old"), RoundError);
  CHECK(a.expire(seconds(30)));
  CHECK(a.state()->phase == Phase::kFailed);
  auto next = advance(*a.state(), kABC, "old");
  CHECK(next.round == 1);
  CHECK(next.base_hash == "old");
  // The leader never contributed, so it sits out one election.
  CHECK(next.leader_excluded);
  CHECK(next.leader == elect_leader({"b", "c"}, 1));
}

TEST_CASE("maybe_merge promotes the merged checkpoint once") {
  RoundCoordinator a("a");
  BlobStore store;
  ParamVector base{1, 1};
  a.announce(0, 1, SimTime{0}, seconds(30), store.put(encode_params(base)), kABC);
  a.acknowledge("b", 0);
  a.update_round_needed({"a", "b"}, SimTime{1});
  std::vector<diloco::PseudoGradient> grads{{{1, 1}, "a", 1, 0, 0}, {{-1, -1}, "b", 1, 0, 0}};
  auto outer = diloco::OuterOptimizerState::for_size(2, 1.0, 0.0);
  a.accept_signal(sig(0, "a"));
  CHECK_FALSE(maybe_merge(a, base, grads, {}, outer, store, SimTime{2}).has_value());
  a.accept_signal(sig(0, "b"));
  auto m = maybe_merge(a, base, grads, {}, outer, store, SimTime{3});
  REQUIRE(m.has_value());
  CHECK(m->merged == ParamVector{1, 1});
  CHECK(store.resolve("latest.pt") == m->content_key);
  CHECK(decode_params(*store.get(m->content_key)) == m->merged);
  CHECK(m->record.ternary_hash.size() == 64);
  CHECK_FALSE(maybe_merge(a, base, grads, {}, outer, store, SimTime{4}).has_value());
  auto next = advance(*a.state(), kABC, m->content_key);
  CHECK(next.round == 1);
  CHECK(next.leader == "b");
  CHECK(next.base_hash == m->content_key);
  CHECK_FALSE(next.leader_excluded);
}

TEST_CASE("phase transitions serialize") {
  PhaseTransition t{2, Phase::kMerging, 3, 3, seconds(1)};
  auto line = t.to_json_line();
  CHECK(line.find("merging") != std::string::npos);
  CHECK(std::string(phase_name(Phase::kFailed)) == "failed");
}
