#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "dtnet/common.hpp"
#include "dtnet/digest.hpp"
#include "dtnet/random.hpp"

namespace dtnet::sim {

struct Message {
  std::string kind;
  nlohmann::json body;
};

/// Two groups that cannot reach each other during [start, end).
struct Partition {
  SimTime start{0};
  SimTime end{0};
  std::set<NodeId> side_a;
  std::set<NodeId> side_b;

  bool separates(const NodeId& x, const NodeId& y, SimTime t) const {
    if (t < start || t >= end) return false;
    return (side_a.contains(x) && side_b.contains(y)) || (side_b.contains(x) && side_a.contains(y));
  }
};

struct LinkPolicy {
  SimDuration latency_min{0};
  SimDuration latency_max{0};
  double drop_probability = 0.0;
  std::vector<Partition> partitions;

  /// Throws std::invalid_argument for an inverted latency range or a
  /// probability outside [0, 1].
  void validate() const;
};

enum class TraceKind { kSend, kDrop, kDeliver, kTimer };

struct TraceRecord {
  std::uint64_t seq = 0;
  SimTime at{0};
  TraceKind kind = TraceKind::kSend;
  NodeId from;
  NodeId to;
  std::string label;  // message kind or timer label
  std::string detail;

  std::string to_json_line() const;
};

class LiveLockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Simulator;
using Handler = std::function<void(Simulator&, const NodeId& from, const Message&)>;
using TimerFn = std::function<void(Simulator&)>;
using LatencySampler = std::function<SimDuration(Rng&, const LinkPolicy&)>;

/// Single-threaded discrete-event network. Events run in (time, sequence)
/// order; sequence numbers are assigned monotonically at scheduling time, so
/// a fixed seed and scenario always yield the same trace.
class Simulator {
 public:
  Simulator(std::uint64_t seed, LinkPolicy policy);

  void add_node(const NodeId& id, Handler handler);
  bool has_node(const NodeId& id) const { return handlers_.contains(id); }

  /// A down node neither sends nor receives.
  void set_down(const NodeId& id, bool down);
  bool is_down(const NodeId& id) const { return down_.contains(id); }

  SimTime now() const { return now_; }

  /// Samples drop and latency (always both, in that order). Returns false when
  /// the message is dropped at send time. Throws std::invalid_argument for an
  /// unregistered endpoint.
  bool send(const NodeId& from, const NodeId& to, Message msg);

  void schedule(SimDuration delay, std::string label, TimerFn fn);

  /// Processes every event with fire time <= t, then sets the clock to t.
  std::size_t run_until(SimTime t);
  std::size_t run_until_quiescent();

  void set_latency_sampler(LatencySampler s) { sampler_ = std::move(s); }
  void set_max_events(std::size_t n) { max_events_ = n; }
  std::size_t events_processed() const { return processed_; }

  const std::vector<TraceRecord>& trace() const { return trace_; }
  /// SHA-256 over every trace line, hex.
  std::string trace_digest() const;

  Rng& rng() { return rng_; }

 private:
  struct Event {
    SimTime at;
    std::uint64_t seq;
    bool is_timer;
    NodeId from;
    NodeId to;
    Message msg;
    std::string label;
    TimerFn fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  void record(TraceKind kind, const NodeId& from, const NodeId& to, const std::string& label,
              std::string detail = {});
  bool step();
  bool blocked(const NodeId& from, const NodeId& to, SimTime t) const;

  LinkPolicy policy_;
  Rng rng_;
  LatencySampler sampler_;
  SimTime now_{0};
  std::uint64_t next_seq_ = 0;
  std::uint64_t trace_seq_ = 0;
  std::size_t processed_ = 0;
  std::size_t max_events_ = 10'000'000;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::map<NodeId, Handler> handlers_;
  std::set<NodeId> down_;
  std::vector<TraceRecord> trace_;
};

}  // namespace dtnet::sim
