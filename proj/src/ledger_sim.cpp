#include <sstream>

#include "dtnet/ledger.hpp"
#include "dtnet/runners.hpp"

namespace dtnet::scenario {

namespace {

using ledger::Rational;
using ledger::SettlementStatus;

class LedgerRun {
 public:
  explicit LedgerRun(const Scenario& s) : s_(s), p_(s.ledger), cfg_(p_.rewards), ledger_(cfg_), rng_(s.seed) {
    for (const auto& n : s.nodes) {
      auto m = cfg_.tier_multipliers.find(n.tier);
      if (m == cfg_.tier_multipliers.end()) {
        throw ScenarioError(s.name + ": no multiplier for tier " + storage::tier_name(n.tier));
      }
      tiers_[n.id] = m->second;
      if (n.bond > 0) ledger_.post_bond(n.id, n.bond);
      if (n.bond >= cfg_.notary_min_bond && n.bond > 0) {
        ledger_.register_notary(n.id);
        notaries_.push_back(n.id);
      }
    }
  }

  LedgerReport run() {
    LedgerReport rep;
    const std::size_t record_every = p_.data_records == 0 ? 0 : std::max<std::size_t>(1, p_.epochs / p_.data_records);
    for (std::uint64_t e = 0; e < p_.epochs; ++e) {
      const SimTime t0 = cfg_.epoch_length * static_cast<std::int64_t>(e);
      const SimTime end = t0 + cfg_.epoch_length;
      contribute(e);
      commit_reveal(e, t0);
      if (record_every > 0 && e % record_every == 0 && records_ < p_.data_records) register_record(t0);
      finalize_records(end);

      // Deferred epochs retry oldest first, before the epoch that just closed.
      std::vector<std::uint64_t> retry(deferred_.begin(), deferred_.end());
      deferred_.clear();
      for (auto d : retry) settle(d, end, rep);
      settle(e, end, rep);
    }
    for (auto d : deferred_) {
      settlements_ += std::to_string(d) + ",deferred_at_end,0,0,0,1\n";
    }
    rep.deferred = deferred_events_;
    rep.slashes = ledger_.slashes().size();
    rep.chain_ok = ledger::EventLog::verify(ledger_.log().lines());
    if (!rep.chain_ok) violations_.push_back("event log digest chain does not verify");
    rep.conservation_ok = conservation_ok_;
    write(rep);
    return rep;
  }

 private:
  void contribute(std::uint64_t e) {
    for (const auto& n : s_.nodes) {
      if (!rng_.bernoulli(p_.participation)) continue;
      const Rational dq(static_cast<long long>(rng_.below(101)), 10);
      const Rational tc(static_cast<long long>(rng_.below(101)), 10);
      const Rational mq(static_cast<long long>(rng_.below(101)), 10);
      ledger_.record_contribution(e, n.id, ledger::combine_axes(dq, tc, mq, cfg_.axis_weights));
    }
  }

  void commit_reveal(std::uint64_t e, SimTime t0) {
    const SimTime close = t0 + cfg_.epoch_length / 2;
    for (std::size_t k = 0; k < p_.commit_tasks_per_epoch; ++k) {
      const std::string task = "e" + std::to_string(e) + "-t" + std::to_string(k);
      ledger_.open_commit_round(task, close);
      std::map<NodeId, std::pair<Bytes, Bytes>> secrets;
      for (const auto& n : s_.nodes) {
        if (!rng_.bernoulli(0.5)) continue;
        Bytes result(16), nonce(16);
        for (auto& b : result) b = static_cast<std::uint8_t>(rng_.next_u64());
        for (auto& b : nonce) b = static_cast<std::uint8_t>(rng_.next_u64());
        ledger_.commit(task, n.id, ledger::commitment(result, nonce), t0 + SimDuration{1});
        const auto& rec = ledger_.commit_record(task, n.id);
        if (rec.revealed) violations_.push_back(task + ": commit record holds revealed bytes");
        secrets[n.id] = {std::move(result), std::move(nonce)};
      }
      bool probed = false;
      for (auto& [node, sec] : secrets) {
        if (!probed) {
          probed = true;
          const auto early = ledger_.reveal(task, node, sec.first, sec.second, close - SimDuration{1});
          if (early != ledger::RevealOutcome::kTooEarly ||
              ledger_.commit_record(task, node).status != ledger::CommitStatus::kPending) {
            violations_.push_back(task + ": early reveal was not rejected");
          }
        }
        const bool cheat = rng_.bernoulli(p_.mismatch_probability);
        Bytes shown = sec.first;
        if (cheat) shown[0] ^= 0x01;
        const auto out = ledger_.reveal(task, node, shown, sec.second, close);
        const auto expect = cheat ? ledger::RevealOutcome::kSlashed : ledger::RevealOutcome::kAccepted;
        if (out != expect) violations_.push_back(task + ": unexpected reveal outcome for " + node);
      }
    }
  }

  void register_record(SimTime now) {
    const std::string id = "record-" + std::to_string(records_++);
    const auto& who = s_.nodes[rng_.below(s_.nodes.size())].id;
    ledger_.register_data(id, who, now);
    open_records_.push_back(id);
    if (notaries_.empty() || !rng_.bernoulli(p_.challenge_probability)) return;
    ledger_.challenge(id, now + SimDuration{1});
    std::size_t votes = 0;
    for (const auto& notary : notaries_) {
      if (votes == cfg_.quorum_panel) break;
      ledger_.notary_vote(id, notary, rng_.bernoulli(0.5), now + SimDuration{2});
      ++votes;
    }
  }

  void finalize_records(SimTime now) {
    std::vector<std::string> still;
    for (const auto& id : open_records_) {
      const auto st = ledger_.finalize_registration(id, now);
      if (st == ledger::RegistrationStatus::kPending) {
        still.push_back(id);
      } else {
        registrations_ += id + "," + ledger_.registration(id).contributor + "," +
                          (st == ledger::RegistrationStatus::kConfirmed ? "confirmed" : "rejected") + "\n";
      }
    }
    open_records_ = std::move(still);
  }

  void settle(std::uint64_t e, SimTime now, LedgerReport& rep) {
    const auto res = ledger_.settle_epoch(e, tiers_, now);
    const auto day = ledger_.day_at(now);
    Rational total = 0;
    std::map<NodeId, Rational> weights;
    for (const auto& [node, c] : ledger_.epoch(e).contributions) {
      weights[node] = tiers_.at(node) * c;
      total += weights[node];
    }
    ledger::Units sum = 0;
    for (const auto& [node, r] : res.rewards) sum += r;
    bool ok = true;
    switch (res.status) {
      case SettlementStatus::kSettled: {
        ++rep.settled;
        ok = sum == res.pool;
        Rational exact_sum = 0;
        for (const auto& [node, q] : res.exact) {
          exact_sum += q;
          if (q * total != Rational(res.pool) * weights.at(node)) ok = false;
          const Rational diff = Rational(res.rewards.at(node)) - q;
          if (diff <= -1 || diff >= 1) ok = false;
        }
        if (exact_sum != res.pool) ok = false;
        if (ledger_.settle_epoch(e, tiers_, now).status != SettlementStatus::kRejected) {
          violations_.push_back("epoch " + std::to_string(e) + ": second settlement accepted");
        }
        break;
      }
      case SettlementStatus::kCarried: ++rep.carried; break;
      case SettlementStatus::kDeferred:
        deferred_.insert(e);
        ++deferred_events_;
        break;
      case SettlementStatus::kRejected:
        violations_.push_back("epoch " + std::to_string(e) + ": settlement rejected unexpectedly");
        break;
    }
    if (ledger_.emission(day).emitted > cfg_.daily_cap) {
      ok = false;
      violations_.push_back("day " + std::to_string(day) + ": emission above cap");
    }
    if (!ok) {
      conservation_ok_ = false;
      violations_.push_back("epoch " + std::to_string(e) + ": conservation or proportionality failed");
    }
    settlements_ += std::to_string(e) + "," + ledger::settlement_status_name(res.status) + "," +
                    std::to_string(res.pool) + "," + ledger::to_string(total) + "," + std::to_string(sum) + "," +
                    (ok ? "1" : "0") + "\n";
  }

  void write(LedgerReport& rep) {
    auto& f = rep.output.files;
    std::string events;
    for (const auto& line : ledger_.log().lines()) events += line + "\n";
    f["ledger/events.jsonl"] = events;
    f["ledger/settlements.csv"] = "epoch,status,pool,total_weight,sum_rewards,invariants_ok\n" + settlements_;
    std::string balances = "node,tier,multiplier,balance,bond\n";
    for (const auto& n : s_.nodes) {
      balances += n.id + "," + storage::tier_name(n.tier) + "," + ledger::to_string(tiers_.at(n.id)) + "," +
                  std::to_string(ledger_.balance(n.id)) + "," + std::to_string(ledger_.bond(n.id)) + "\n";
    }
    f["ledger/balances.csv"] = balances;
    std::string slashes = "node,rate,amount,reason\n";
    for (const auto& ev : ledger_.slashes()) {
      slashes += ev.node + "," + ledger::to_string(ev.rate) + "," + std::to_string(ev.amount) + "," + ev.reason + "\n";
    }
    f["ledger/slashes.csv"] = slashes;
    f["ledger/registrations.csv"] = "record,contributor,status\n" + registrations_;

    std::string emissions = "day,emitted,cap\n";
    for (const auto& [day, units] : ledger_.emitted_by_day()) {
      emissions += std::to_string(day) + "," + std::to_string(units) + "," + std::to_string(cfg_.daily_cap) + "\n";
    }
    f["ledger/emissions.csv"] = emissions;

    auto& sum = rep.output.summary;
    sum["scenario"] = s_.name;
    sum["kind"] = "ledger";
    sum["seed"] = s_.seed;
    sum["epochs"] = p_.epochs;
    sum["settled"] = rep.settled;
    sum["carried"] = rep.carried;
    sum["deferred_events"] = deferred_events_;
    sum["unsettled_at_end"] = deferred_.size();
    sum["slashes"] = rep.slashes;
    sum["conservation_ok"] = rep.conservation_ok;
    sum["chain_ok"] = rep.chain_ok;
    sum["log_head"] = ledger_.log().head();
    rep.output.violations = violations_;
  }

  const Scenario& s_;
  const LedgerParams& p_;
  const ledger::LedgerConfig& cfg_;
  ledger::Ledger ledger_;
  Rng rng_;
  std::map<NodeId, Rational> tiers_;
  std::vector<NodeId> notaries_;
  std::set<std::uint64_t> deferred_;
  std::size_t deferred_events_ = 0;
  std::size_t records_ = 0;
  std::vector<std::string> open_records_;
  bool conservation_ok_ = true;
  std::string settlements_;
  std::string registrations_;
  std::vector<std::string> violations_;
};

}  // namespace

LedgerReport run_ledger(const Scenario& s) {
  if (s.kind != Kind::kLedger) throw ScenarioError(s.name + ": not a ledger scenario");
  if (s.nodes.empty()) throw ScenarioError(s.name + ": no nodes");
  LedgerRun run(s);
  return run.run();
}

}  // namespace dtnet::scenario
