#include "dtnet/simnet.hpp"

namespace dtnet::sim {

namespace {

const char* kind_name(TraceKind k) {
  switch (k) {
    case TraceKind::kSend: return "send";
    case TraceKind::kDrop: return "drop";
    case TraceKind::kDeliver: return "deliver";
    case TraceKind::kTimer: return "timer";
  }
  return "?";
}

SimDuration uniform_latency(Rng& rng, const LinkPolicy& p) {
  const auto span = static_cast<std::uint64_t>((p.latency_max - p.latency_min).count());
  return p.latency_min + SimDuration{static_cast<std::int64_t>(rng.below(span + 1))};
}

}  // namespace

void LinkPolicy::validate() const {
  if (latency_min.count() < 0 || latency_max < latency_min) throw std::invalid_argument("invalid latency range");
  if (!(drop_probability >= 0.0 && drop_probability <= 1.0)) {
    throw std::invalid_argument("drop probability must lie in [0, 1]");
  }
  for (const auto& p : partitions) {
    if (p.end < p.start) throw std::invalid_argument("partition ends before it starts");
  }
}

std::string TraceRecord::to_json_line() const {
  nlohmann::ordered_json j;
  j["seq"] = seq;
  j["t_ms"] = at.count();
  j["ev"] = kind_name(kind);
  if (!from.empty()) j["from"] = from;
  if (!to.empty()) j["to"] = to;
  j["label"] = label;
  if (!detail.empty()) j["detail"] = detail;
  return j.dump();
}

Simulator::Simulator(std::uint64_t seed, LinkPolicy policy)
    : policy_(std::move(policy)), rng_(seed), sampler_(uniform_latency) {
  policy_.validate();
}

void Simulator::add_node(const NodeId& id, Handler handler) { handlers_[id] = std::move(handler); }

void Simulator::set_down(const NodeId& id, bool down) {
  if (down) {
    down_.insert(id);
  } else {
    down_.erase(id);
  }
}

bool Simulator::blocked(const NodeId& from, const NodeId& to, SimTime t) const {
  for (const auto& p : policy_.partitions) {
    if (p.separates(from, to, t)) return true;
  }
  return false;
}

bool Simulator::send(const NodeId& from, const NodeId& to, Message msg) {
  if (!handlers_.contains(from) || !handlers_.contains(to)) {
    throw std::invalid_argument("send: unknown node " + (handlers_.contains(from) ? to : from));
  }
  const bool lost = rng_.bernoulli(policy_.drop_probability);
  const SimDuration latency = sampler_(rng_, policy_);
  if (lost || is_down(from) || blocked(from, to, now_)) {
    record(TraceKind::kDrop, from, to, msg.kind, lost ? "loss" : "unreachable");
    return false;
  }
  record(TraceKind::kSend, from, to, msg.kind, std::to_string(latency.count()));
  Event e{now_ + latency, next_seq_++, false, from, to, std::move(msg), {}, {}};
  queue_.push(std::move(e));
  return true;
}

void Simulator::schedule(SimDuration delay, std::string label, TimerFn fn) {
  if (delay.count() < 0) throw std::invalid_argument("schedule: negative delay");
  Event e{now_ + delay, next_seq_++, true, {}, {}, {}, std::move(label), std::move(fn)};
  queue_.push(std::move(e));
}

bool Simulator::step() {
  if (queue_.empty()) return false;
  if (processed_ >= max_events_) {
    throw LiveLockError("event budget of " + std::to_string(max_events_) + " exceeded");
  }
  Event e = queue_.top();
  queue_.pop();
  now_ = e.at;
  ++processed_;
  if (e.is_timer) {
    record(TraceKind::kTimer, {}, {}, e.label);
    e.fn(*this);
    return true;
  }
  if (is_down(e.to) || blocked(e.from, e.to, now_)) {
    record(TraceKind::kDrop, e.from, e.to, e.msg.kind, "unreachable-on-arrival");
    return true;
  }
  record(TraceKind::kDeliver, e.from, e.to, e.msg.kind);
  // Copy: the handler may register nodes and invalidate map references.
  Handler h = handlers_.at(e.to);
  h(*this, e.from, e.msg);
  return true;
}

std::size_t Simulator::run_until(SimTime t) {
  std::size_t n = 0;
  while (!queue_.empty() && queue_.top().at <= t) {
    step();
    ++n;
  }
  if (now_ < t) now_ = t;
  return n;
}

std::size_t Simulator::run_until_quiescent() {
  std::size_t n = 0;
  while (step()) ++n;
  return n;
}

void Simulator::record(TraceKind kind, const NodeId& from, const NodeId& to, const std::string& label,
                       std::string detail) {
  trace_.push_back({trace_seq_++, now_, kind, from, to, label, std::move(detail)});
}

std::string Simulator::trace_digest() const {
  Sha256Stream s;
  for (const auto& r : trace_) {
    s.update(r.to_json_line());
    s.update("\n");
  }
  return to_hex(s.finish());
}

}  // namespace dtnet::sim
