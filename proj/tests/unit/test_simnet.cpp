#include "doctest.h"

#include "dtnet/simnet.hpp"

using namespace dtnet;
using namespace dtnet::sim;

namespace {

LinkPolicy uniform(int lo_ms, int hi_ms, double drop = 0.0) {
  LinkPolicy p;
  p.latency_min = SimDuration{lo_ms};
  p.latency_max = SimDuration{hi_ms};
  p.drop_probability = drop;
  return p;
}

struct Inbox {
  std::vector<std::pair<SimTime, std::string>> got;
  Handler handler() {
    return [this](Simulator& s, const NodeId& from, const Message& m) { got.push_back({s.now(), from + ":" + m.kind}); };
  }
};

std::string chatter(std::uint64_t seed) {
  Simulator s(seed, uniform(5, 50, 0.1));
  std::vector<NodeId> ids{"a", "b", "c", "d"};
  for (const auto& id : ids) {
    s.add_node(id, [id, &ids](Simulator& sim, const NodeId& from, const Message& m) {
      const int hops = m.body.value("hops", 0);
      if (hops < 6) sim.send(id, ids[(hops + from.size()) % ids.size()], {"ping", {{"hops", hops + 1}}});
    });
  }
  for (const auto& id : ids) s.send(id, "a", {"ping", {{"hops", 0}}});
  s.run_until_quiescent();
  return s.trace_digest();
}

}  // namespace

TEST_CASE("zero latency delivers on the next step") {
  Simulator s(1, uniform(0, 0));
  Inbox in;
  s.add_node("a", in.handler());
  s.add_node("b", in.handler());
  CHECK(s.send("a", "b", {"hi", {}}));
  CHECK(in.got.empty());
  s.run_until_quiescent();
  REQUIRE(in.got.size() == 1);
  CHECK(in.got[0].first == SimTime{0});
}

TEST_CASE("certain drop never delivers") {
  Simulator s(1, uniform(1, 10, 1.0));
  Inbox in;
  s.add_node("a", in.handler());
  s.add_node("b", in.handler());
  for (int i = 0; i < 50; ++i) CHECK_FALSE(s.send("a", "b", {"hi", {}}));
  s.run_until_quiescent();
  CHECK(in.got.empty());
}

TEST_CASE("unknown endpoints are rejected") {
  Simulator s(1, uniform(0, 0));
  s.add_node("a", [](Simulator&, const NodeId&, const Message&) {});
  CHECK_THROWS_AS(s.send("a", "nobody", {"x", {}}), std::invalid_argument);
}

TEST_CASE("empty queue is quiescent and a single timer fires once") {
  Simulator s(1, uniform(0, 0));
  CHECK(s.run_until_quiescent() == 0);
  int fired = 0;
  s.schedule(seconds(30), "tick", [&](Simulator& sim) {
    ++fired;
    CHECK(sim.now() == seconds(30));
  });
  CHECK(s.run_until(seconds(29)) == 0);
  CHECK(s.run_until(seconds(60)) == 1);
  CHECK(fired == 1);
  CHECK(s.now() == seconds(60));
}

TEST_CASE("events run in time then sequence order") {
  Simulator s(1, uniform(0, 0));
  std::vector<int> order;
  s.schedule(SimDuration{10}, "x", [&](Simulator&) { order.push_back(2); });
  s.schedule(SimDuration{5}, "x", [&](Simulator&) { order.push_back(1); });
  s.schedule(SimDuration{10}, "x", [&](Simulator&) { order.push_back(3); });
  s.run_until_quiescent();
  CHECK(order == std::vector<int>{1, 2, 3});
}

TEST_CASE("no delivery before its send and none out of order") {
  Simulator s(9, uniform(1, 100));
  Inbox in;
  s.add_node("a", in.handler());
  s.add_node("b", in.handler());
  for (int i = 0; i < 200; ++i) {
    s.schedule(SimDuration{i}, "send", [](Simulator& sim) { sim.send("a", "b", {"m", {}}); });
  }
  s.run_until_quiescent();
  SimTime last{0};
  int in_flight = 0;
  for (const auto& r : s.trace()) {
    CHECK(r.at >= last);
    last = r.at;
    if (r.kind == TraceKind::kSend) ++in_flight;
    if (r.kind == TraceKind::kDeliver) CHECK(--in_flight >= 0);
  }
  CHECK(in.got.size() == 200);
}

TEST_CASE("partitions block both directions inside the interval") {
  LinkPolicy p = uniform(1, 1);
  p.partitions.push_back({seconds(10), seconds(20), {"a"}, {"b"}});
  Simulator s(1, p);
  Inbox in;
  s.add_node("a", in.handler());
  s.add_node("b", in.handler());
  s.add_node("c", in.handler());
  s.run_until(seconds(15));
  CHECK_FALSE(s.send("a", "b", {"x", {}}));
  CHECK_FALSE(s.send("b", "a", {"x", {}}));
  CHECK(s.send("a", "c", {"x", {}}));
  s.run_until(seconds(20));
  CHECK(s.send("a", "b", {"x", {}}));
  s.run_until_quiescent();
  CHECK(in.got.size() == 2);
}

TEST_CASE("down nodes neither send nor receive") {
  Simulator s(1, uniform(1, 1));
  Inbox in;
  s.add_node("a", in.handler());
  s.add_node("b", in.handler());
  s.send("a", "b", {"in-flight", {}});
  s.set_down("b", true);
  CHECK_FALSE(s.send("b", "a", {"x", {}}));
  s.run_until_quiescent();
  CHECK(in.got.empty());
  s.set_down("b", false);
  s.send("a", "b", {"x", {}});
  s.run_until_quiescent();
  CHECK(in.got.size() == 1);
}

TEST_CASE("same seed gives the same trace") {
  CHECK(chatter(42) == chatter(42));
  CHECK(chatter(42) != chatter(43));
}

TEST_CASE("live-lock guard") {
  Simulator s(1, uniform(0, 0));
  s.set_max_events(100);
  std::function<void(Simulator&)> again = [&](Simulator& sim) { sim.schedule(SimDuration{1}, "loop", again); };
  s.schedule(SimDuration{1}, "loop", again);
  CHECK_THROWS_AS(s.run_until_quiescent(), LiveLockError);
}

TEST_CASE("policy validation") {
  CHECK_THROWS_AS(uniform(10, 5).validate(), std::invalid_argument);
  CHECK_THROWS_AS(uniform(0, 5, 1.5).validate(), std::invalid_argument);
  CHECK_NOTHROW(uniform(0, 5, 0.5).validate());
}
