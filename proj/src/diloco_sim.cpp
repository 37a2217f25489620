#include <algorithm>
#include <sstream>
#include <tuple>

#include "dtnet/blob_store.hpp"
#include "dtnet/diloco.hpp"
#include "dtnet/rounds.hpp"
#include "dtnet/runners.hpp"
#include "dtnet/simnet.hpp"
#include "dtnet/storagemon.hpp"
#include "dtnet/toy_model.hpp"

namespace dtnet::scenario {

namespace {

using nlohmann::json;

const NodeId kRegistry = "registry";

std::string fixed(double v) {
  std::ostringstream os;
  os.precision(10);
  os << std::scientific << v;
  return os.str();
}

class DilocoRun {
 public:
  explicit DilocoRun(const Scenario& s) : s_(s), p_(s.diloco), sim_(s.seed, s.network), registry_({0.0, 0.0}, p_.peer_timeout) {
    Rng data_rng(s.seed ^ 0x9e3779b97f4a7c15ULL);
    ParamVector w_true(p_.features);
    for (auto& w : w_true) w = data_rng.normal();
    std::vector<toy::ToyTask> parts;
    for (const auto& n : s.nodes) {
      auto task = toy::make_regression(data_rng, p_.rows_per_node, w_true, p_.noise_std);
      parts.push_back(task);
      Peer peer;
      peer.spec = n;
      peer.task = std::move(task);
      peer.opt = toy::InnerOptimizerState::for_size(p_.features);
      peer.opt.learning_rate = p_.inner_lr;
      peers_.emplace(n.id, std::move(peer));
      coords_.emplace(n.id, rounds::RoundCoordinator(n.id));
      storage::NodeRecord rec;
      rec.id = n.id;
      rec.tier = n.tier;
      rec.region = n.region;
      registry_.register_node(rec);
    }
    pooled_ = toy::concat(parts);
    test_ = toy::make_regression(data_rng, p_.test_rows, w_true, p_.noise_std);
    outer_ = diloco::OuterOptimizerState::for_size(p_.features, p_.outer_lr, p_.outer_momentum);
    base_key_ = store_.put(encode_params(ParamVector(p_.features, 0.0)));
    store_.promote("latest.pt", base_key_);
  }

  DilocoReport run() {
    sim_.add_node(kRegistry, [this](sim::Simulator& sim, const NodeId& from, const sim::Message& m) {
      if (m.kind == "heartbeat") registry_.heartbeat(from, sim.now());
    });
    for (const auto& n : s_.nodes) {
      sim_.add_node(n.id, [this, id = n.id](sim::Simulator&, const NodeId& from, const sim::Message& m) {
        on_message(id, from, m);
      });
    }
    for (const auto& f : s_.failures) {
      sim_.schedule(f.down_at, "down:" + f.node, [this, id = f.node](sim::Simulator& sim) {
        sim.set_down(id, true);
        ++peers_.at(id).incarnation;
      });
      if (f.up_at) {
        sim_.schedule(*f.up_at, "up:" + f.node, [id = f.node](sim::Simulator& sim) { sim.set_down(id, false); });
      }
    }
    for (const auto& n : s_.nodes) schedule_heartbeat(n.id, SimDuration{0});
    if (p_.rounds > 0) {
      std::set<NodeId> eligible;
      for (const auto& n : s_.nodes) eligible.insert(n.id);
      start_round(0, eligible);
    } else {
      finished_ = true;
    }
    sim_.run_until_quiescent();

    DilocoReport rep;
    const ParamVector final_params = decode_params(*store_.get(base_key_));
    rep.final_loss = toy::loss(final_params, pooled_);
    const double final_test = toy::loss(final_params, test_);

    const std::size_t budget = static_cast<std::size_t>(p_.rounds) * p_.inner_steps;
    auto central_opt = toy::InnerOptimizerState::for_size(p_.features);
    central_opt.learning_rate = p_.inner_lr;
    const ParamVector central = toy::train(ParamVector(p_.features, 0.0), pooled_, central_opt, budget);
    rep.centralized_loss = toy::loss(central, pooled_);

    rep.merged_rounds = merged_;
    rep.failed_rounds = failed_;
    rep.participants = participants_;
    rep.trace_digest = sim_.trace_digest();

    auto& files = rep.output.files;
    std::string baseline = "method,optimizer_steps,train_loss,test_loss\n";
    baseline += "centralized," + std::to_string(budget) + "," + fixed(rep.centralized_loss) + "," +
                fixed(toy::loss(central, test_)) + "\n";
    if (p_.rounds > 0) {
      baseline += "diloco," + std::to_string(budget) + "," + fixed(rep.final_loss) + "," + fixed(final_test) + "\n";
      files["diloco/metrics.csv"] = metrics_;
      files["diloco/merge_log.jsonl"] = merge_log_;
      std::string round_log;
      for (const auto& [id, c] : coords_)
        for (const auto& t : c.transitions()) round_log_entries_.emplace_back(t.at, t.round, t.to_json_line());
      std::stable_sort(round_log_entries_.begin(), round_log_entries_.end(), [](const auto& a, const auto& b) {
        return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
      });
      for (const auto& e : round_log_entries_) round_log += std::get<2>(e) + "\n";
      files["diloco/round_log.jsonl"] = round_log;
      std::string trace;
      for (const auto& r : sim_.trace()) trace += r.to_json_line() + "\n";
      files["diloco/trace.jsonl"] = trace;
    }
    files["diloco/baseline.csv"] = baseline;

    auto& sum = rep.output.summary;
    sum["scenario"] = s_.name;
    sum["kind"] = "diloco";
    sum["seed"] = s_.seed;
    sum["rounds"] = p_.rounds;
    sum["merged_rounds"] = merged_;
    sum["failed_rounds"] = failed_;
    sum["final_loss"] = rep.final_loss;
    sum["centralized_loss"] = rep.centralized_loss;
    sum["loss_ratio"] = rep.centralized_loss > 0 ? rep.final_loss / rep.centralized_loss : 0.0;
    sum["trace_digest"] = rep.trace_digest;
    rep.output.violations = violations_;
    return rep;
  }

 private:
  struct Peer {
    NodeSpec spec;
    toy::ToyTask task;
    toy::InnerOptimizerState opt;
    std::uint64_t incarnation = 0;
    std::optional<std::uint64_t> joined_round;
  };

  struct LiveRound {
    std::uint64_t round = 0;
    NodeId leader;
    std::string base_key;
    std::set<NodeId> eligible;
    std::map<NodeId, rounds::GradientReadySignal> signals;
    bool announced = false;
    bool done = false;
  };

  void schedule_heartbeat(const NodeId& id, SimDuration delay) {
    sim_.schedule(delay, "heartbeat:" + id, [this, id](sim::Simulator& sim) {
      if (finished_) return;
      if (!sim.is_down(id)) sim.send(id, kRegistry, {"heartbeat", json::object()});
      schedule_heartbeat(id, p_.heartbeat_interval);
    });
  }

  std::set<NodeId> live_peers() const {
    std::set<NodeId> out;
    for (const auto& id : registry_.live_nodes(sim_.now())) out.insert(id);
    return out;
  }

  void start_round(std::uint64_t round, const std::set<NodeId>& eligible) {
    live_.emplace();
    live_->round = round;
    live_->eligible = eligible;
    live_->leader = rounds::elect_leader(eligible, round);
    live_->base_key = base_key_;
    const SimTime deadline = sim_.now() + p_.round_deadline;
    const NodeId leader = live_->leader;

    if (!sim_.is_down(leader)) {
      auto ann = coords_.at(leader).announce(round, p_.inner_steps, sim_.now(), deadline, base_key_, eligible);
      live_->announced = true;
      json body = {{"round", ann.round},        {"inner_steps", ann.inner_steps}, {"deadline_ms", ann.deadline.count()},
                   {"base_hash", ann.base_hash}, {"leader", ann.leader}};
      for (const auto& peer : eligible) {
        if (peer != leader) sim_.send(leader, peer, {"announce", body});
      }
      begin_training(leader, round, base_key_);
      sim_.schedule(p_.ack_window, "ack_window", [this, round](sim::Simulator&) { check(round); });
    }
    sim_.schedule(p_.round_deadline, "deadline", [this, round](sim::Simulator& sim) {
      if (!live_ || live_->round != round || live_->done) return;
      if (live_->announced) {
        auto& c = coords_.at(live_->leader);
        if (!c.expire(sim.now())) return;
        finish_round(*c.state());
      } else {
        rounds::RoundState ghost;
        ghost.round = round;
        ghost.phase = rounds::Phase::kFailed;
        ghost.leader = live_->leader;
        ghost.eligible = live_->eligible;
        finish_round(ghost);
      }
    });
  }

  void on_message(const NodeId& self, const NodeId& from, const sim::Message& m) {
    if (m.kind == "announce") {
      const std::uint64_t round = m.body["round"];
      auto& peer = peers_.at(self);
      if (peer.joined_round && *peer.joined_round >= round) return;
      sim_.send(self, from, {"ack", {{"round", round}}});
      begin_training(self, round, m.body["base_hash"]);
    } else if (m.kind == "ack") {
      coords_.at(self).acknowledge(from, m.body["round"]);
    } else if (m.kind == "gradient_ready") {
      rounds::GradientReadySignal sig;
      sig.round = m.body["round"];
      sig.node = m.body["node"];
      sig.gradient_hash = m.body["gradient_hash"];
      sig.content_address = m.body["content_address"];
      sig.local_loss = m.body["local_loss"];
      on_signal(self, sig);
    }
  }

  void begin_training(const NodeId& id, std::uint64_t round, const std::string& base_key) {
    auto& peer = peers_.at(id);
    peer.joined_round = round;
    const auto duration = SimDuration{static_cast<std::int64_t>(
        static_cast<double>(p_.step_time.count()) * static_cast<double>(p_.inner_steps) / peer.spec.speed)};
    sim_.schedule(duration, "train_done:" + id,
                  [this, id, round, base_key, inc = peer.incarnation](sim::Simulator& sim) {
                    auto& peer = peers_.at(id);
                    if (sim.is_down(id) || peer.incarnation != inc) return;
                    const ParamVector base = decode_params(*store_.get(base_key));
                    const ParamVector local = toy::train(base, peer.task, peer.opt, p_.inner_steps);
                    auto g = diloco::pseudo_gradient(base, local, {id, p_.inner_steps, 0, toy::loss(local, peer.task)});
                    rounds::GradientReadySignal sig;
                    sig.round = round;
                    sig.node = id;
                    sig.gradient_hash = to_hex(hash_params(g.delta));
                    sig.content_address = store_.put(encode_params(g.delta));
                    sig.local_loss = g.local_loss;
                    pin_signal(sig);
                    if (!live_ || live_->round != round) return;
                    const NodeId leader = live_->leader;
                    if (id == leader) {
                      on_signal(leader, sig);  // self-injection skips the network
                    } else {
                      sim.send(id, leader,
                               {"gradient_ready",
                                {{"round", sig.round},
                                 {"node", sig.node},
                                 {"gradient_hash", sig.gradient_hash},
                                 {"content_address", sig.content_address},
                                 {"local_loss", sig.local_loss}}});
                    }
                  });
  }

  // Second transport path: the signal is pinned in the shared store under a
  // per-round label, so a dropped message alone cannot lose a gradient.
  static std::string signal_label(std::uint64_t round, const NodeId& id) {
    return "signal/" + std::to_string(round) + "/" + id;
  }

  void pin_signal(const rounds::GradientReadySignal& sig) {
    const json body = {{"round", sig.round},
                       {"node", sig.node},
                       {"gradient_hash", sig.gradient_hash},
                       {"content_address", sig.content_address},
                       {"local_loss", sig.local_loss}};
    const std::string text = body.dump();
    store_.promote(signal_label(sig.round, sig.node), store_.put(Bytes(text.begin(), text.end())));
  }

  void poll_pinned(const NodeId& leader, std::uint64_t round) {
    const auto st = *coords_.at(leader).state();
    for (const auto& peer : st.accepted) {
      if (st.collected_from.contains(peer)) continue;
      const auto key = store_.resolve(signal_label(round, peer));
      if (!key) continue;
      const Bytes bytes = *store_.get(*key);
      const json body = json::parse(bytes.begin(), bytes.end());
      rounds::GradientReadySignal sig;
      sig.round = body["round"];
      sig.node = body["node"];
      sig.gradient_hash = body["gradient_hash"];
      sig.content_address = body["content_address"];
      sig.local_loss = body["local_loss"];
      on_signal(leader, sig);
      if (!live_ || live_->done) return;
    }
  }

  void on_signal(const NodeId& leader, const rounds::GradientReadySignal& sig) {
    auto& c = coords_.at(leader);
    if (c.accept_signal(sig) == rounds::SignalOutcome::kCounted && live_ && live_->round == sig.round) {
      live_->signals[sig.node] = sig;
    }
    try_merge(sig.round);
  }

  // Ack window and periodic reachability refresh while the round is open.
  void check(std::uint64_t round) {
    if (!live_ || live_->round != round || live_->done) return;
    const NodeId leader = live_->leader;
    if (!sim_.is_down(leader)) {
      coords_.at(leader).update_round_needed(live_peers(), sim_.now());
      poll_pinned(leader, round);
      try_merge(round);
    }
    if (live_ && live_->round == round && !live_->done) {
      sim_.schedule(p_.check_interval, "check", [this, round](sim::Simulator&) { check(round); });
    }
  }

  void try_merge(std::uint64_t round) {
    if (!live_ || live_->round != round || live_->done) return;
    auto& c = coords_.at(live_->leader);
    const auto& st = *c.state();
    if (st.phase != rounds::Phase::kCollecting || st.collected < st.needed) return;
    if (st.needed != st.accepted.size()) violations_.push_back("round " + std::to_string(round) + ": needed != |accepted|");

    const ParamVector base = decode_params(*store_.get(live_->base_key));
    std::vector<diloco::PseudoGradient> grads;
    for (const auto& [node, sig] : live_->signals) {
      auto bytes = store_.get(sig.content_address);
      if (!bytes) continue;
      diloco::PseudoGradient g;
      g.delta = decode_params(*bytes);
      if (to_hex(hash_params(g.delta)) != sig.gradient_hash) {
        violations_.push_back("round " + std::to_string(round) + ": gradient hash mismatch from " + node);
        continue;
      }
      g.source = node;
      g.inner_steps = p_.inner_steps;
      g.local_loss = sig.local_loss;
      grads.push_back(std::move(g));
    }
    auto out = rounds::maybe_merge(c, base, grads, {}, outer_, store_, sim_.now());
    if (!out) return;
    out->record.pre_loss = toy::loss(base, pooled_);
    out->record.post_loss = toy::loss(out->merged, pooled_);
    merge_log_ += out->record.to_json_line() + "\n";
    base_key_ = out->content_key;
    finish_round(*c.state());
  }

  void finish_round(const rounds::RoundState& st) {
    live_->done = true;
    if (st.merges > 1) violations_.push_back("round " + std::to_string(st.round) + ": more than one merge");
    const bool merged = st.phase == rounds::Phase::kComplete;
    if (merged) {
      ++merged_;
      participants_.push_back(st.collected_from.size());
    } else {
      ++failed_;
      participants_.push_back(0);
    }
    const ParamVector params = decode_params(*store_.get(base_key_));
    std::ostringstream row;
    row << st.round << ',' << st.leader << ',' << rounds::phase_name(st.phase) << ',' << st.collected_from.size()
        << ',' << st.needed << ',' << st.eligible.size() << ',' << fixed(toy::loss(params, pooled_)) << ','
        << fixed(toy::loss(params, test_)) << ',' << sim_.now().count() << '\n';
    if (metrics_.empty()) metrics_ = "round,leader,outcome,participants,needed,eligible,train_loss,test_loss,t_ms\n";
    metrics_ += row.str();

    if (st.round + 1 >= p_.rounds) {
      finished_ = true;
      return;
    }
    std::set<NodeId> eligible = live_peers();
    if (eligible.empty()) {
      violations_.push_back("round " + std::to_string(st.round + 1) + ": no eligible nodes");
      finished_ = true;
      return;
    }
    const auto next = rounds::advance(st, eligible, base_key_);
    if (next.leader_excluded) eligible.erase(st.leader);
    sim_.schedule(SimDuration{1}, "advance", [this, r = next.round, eligible](sim::Simulator&) {
      start_round(r, eligible);
    });
  }

  const Scenario& s_;
  const DilocoParams& p_;
  sim::Simulator sim_;
  storage::NodeRegistry registry_;
  BlobStore store_;
  std::map<NodeId, Peer> peers_;
  std::map<NodeId, rounds::RoundCoordinator> coords_;
  toy::ToyTask pooled_;
  toy::ToyTask test_;
  diloco::OuterOptimizerState outer_;
  std::string base_key_;
  std::optional<LiveRound> live_;
  bool finished_ = false;
  std::size_t merged_ = 0;
  std::size_t failed_ = 0;
  std::vector<std::size_t> participants_;
  std::string metrics_;
  std::string merge_log_;
  std::vector<std::tuple<SimTime, std::uint64_t, std::string>> round_log_entries_;
  std::vector<std::string> violations_;
};

}  // namespace

DilocoReport run_diloco(const Scenario& s) {
  if (s.kind != Kind::kDiloco) throw ScenarioError(s.name + ": not a diloco scenario");
  if (s.nodes.empty()) throw ScenarioError(s.name + ": no nodes");
  DilocoRun run(s);
  return run.run();
}

}  // namespace dtnet::scenario
