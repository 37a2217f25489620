#include "dtnet/ledger.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace dtnet::ledger {

namespace {

using boost::multiprecision::cpp_int;

cpp_int parse_int(std::string_view digits, std::string_view whole) {
  if (digits.empty()) throw std::invalid_argument("malformed number '" + std::string(whole) + "'");
  cpp_int v = 0;
  for (char c : digits) {
    if (c < '0' || c > '9') throw std::invalid_argument("malformed number '" + std::string(whole) + "'");
    v = v * 10 + (c - '0');
  }
  return v;
}

cpp_int floor_div(const cpp_int& num, const cpp_int& den) {
  cpp_int q = num / den;
  if ((num % den != 0) && ((num < 0) != (den < 0))) --q;
  return q;
}

nlohmann::ordered_json units_json(const std::map<NodeId, Units>& m) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

}  // namespace

Rational parse_decimal(std::string_view text) {
  std::string_view s = text;
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  bool negative = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  Rational r;
  if (auto slash = s.find('/'); slash != std::string_view::npos) {
    const cpp_int den = parse_int(s.substr(slash + 1), text);
    if (den == 0) throw std::invalid_argument("zero denominator in '" + std::string(text) + "'");
    r = Rational(parse_int(s.substr(0, slash), text), den);
  } else if (auto dot = s.find('.'); dot != std::string_view::npos) {
    const std::string_view ip = s.substr(0, dot);
    const std::string_view fp = s.substr(dot + 1);
    if (ip.empty() && fp.empty()) throw std::invalid_argument("malformed number '" + std::string(text) + "'");
    cpp_int scale = 1;
    for (std::size_t i = 0; i < fp.size(); ++i) scale *= 10;
    const cpp_int whole = ip.empty() ? cpp_int(0) : parse_int(ip, text);
    const cpp_int frac = fp.empty() ? cpp_int(0) : parse_int(fp, text);
    r = Rational(whole * scale + frac, scale);
  } else {
    r = Rational(parse_int(s, text));
  }
  return negative ? Rational(-r) : r;
}

std::string to_string(const Rational& r) {
  const cpp_int den = boost::multiprecision::denominator(r);
  if (den == 1) return boost::multiprecision::numerator(r).str();
  return boost::multiprecision::numerator(r).str() + "/" + den.str();
}

std::map<storage::Tier, Rational> default_tier_multipliers() {
  using storage::Tier;
  return {
      {Tier::kClaudeSession, Rational(3)},
      {Tier::kGpuCompute, Rational(1)},
      {Tier::kStorageNode, Rational(3, 10)},
      {Tier::kCpuOnly, Rational(3, 10)},
      {Tier::kMobileLight, Rational(1, 10)},
  };
}

Rational combine_axes(const Rational& data_quality, const Rational& training_compute, const Rational& model_quality,
                      const AxisWeights& w) {
  if (data_quality < 0 || training_compute < 0 || model_quality < 0) {
    throw std::invalid_argument("axis scores must be non-negative");
  }
  return w.data_quality * data_quality + w.training_compute * training_compute + w.model_quality * model_quality;
}

void LedgerConfig::validate() const {
  if (epoch_length <= SimDuration::zero()) throw std::invalid_argument("epoch_length must be positive");
  if (pool_per_epoch < 0) throw std::invalid_argument("pool_per_epoch must be non-negative");
  if (daily_cap < 0) throw std::invalid_argument("daily_cap must be non-negative");
  for (const auto& [tier, m] : tier_multipliers) {
    if (m < 0) throw std::invalid_argument(std::string("negative multiplier for ") + storage::tier_name(tier));
  }
  for (const auto& [offense, s] : slash_schedule) {
    if (s < Rational(1, 10) || s > 1) throw std::invalid_argument("slash rate for " + offense + " outside [0.1, 1]");
  }
  if (challenge_window < SimDuration::zero()) throw std::invalid_argument("challenge_window must be non-negative");
  if (quorum_panel == 0 || quorum_approvals == 0 || quorum_approvals > quorum_panel) {
    throw std::invalid_argument("quorum must satisfy 1 <= q <= n");
  }
  const auto& a = axis_weights;
  if (a.data_quality < 0 || a.training_compute < 0 || a.model_quality < 0 ||
      a.data_quality + a.training_compute + a.model_quality != 1) {
    throw std::invalid_argument("axis weights must be non-negative and sum to 1");
  }
}

std::map<NodeId, Rational> exact_quotas(Units pool, const std::map<NodeId, Rational>& weights) {
  Rational total = 0;
  for (const auto& [id, w] : weights) {
    if (w < 0) throw std::invalid_argument("negative weight for " + id);
    total += w;
  }
  std::map<NodeId, Rational> out;
  for (const auto& [id, w] : weights) out[id] = total == 0 ? Rational(0) : Rational(pool) * w / total;
  return out;
}

std::map<NodeId, Units> apportion(Units pool, const std::map<NodeId, Rational>& weights) {
  const auto quotas = exact_quotas(pool, weights);
  std::map<NodeId, Units> out;
  struct Rem {
    Rational frac;
    const NodeId* id;
  };
  std::vector<Rem> rems;
  Units assigned = 0;
  bool any = false;
  for (const auto& [id, q] : quotas) {
    const cpp_int fl = floor_div(boost::multiprecision::numerator(q), boost::multiprecision::denominator(q));
    const auto units = fl.convert_to<Units>();
    out[id] = units;
    assigned += units;
    rems.push_back({q - Rational(fl), &id});
    any = any || q != 0;
  }
  if (!any) return out;
  std::sort(rems.begin(), rems.end(), [](const Rem& a, const Rem& b) {
    if (a.frac != b.frac) return a.frac > b.frac;
    return *a.id < *b.id;
  });
  for (Units i = 0; i < pool - assigned; ++i) ++out[*rems[static_cast<std::size_t>(i)].id];
  return out;
}

const char* settlement_status_name(SettlementStatus s) {
  switch (s) {
    case SettlementStatus::kSettled: return "settled";
    case SettlementStatus::kCarried: return "carried";
    case SettlementStatus::kDeferred: return "deferred";
    case SettlementStatus::kRejected: return "rejected";
  }
  return "unknown";
}

const char* commit_status_name(CommitStatus s) {
  switch (s) {
    case CommitStatus::kPending: return "pending";
    case CommitStatus::kRevealedOk: return "revealed_ok";
    case CommitStatus::kSlashed: return "slashed";
  }
  return "unknown";
}

void EventLog::append(const std::string& type, nlohmann::ordered_json data) {
  nlohmann::ordered_json body;
  body["seq"] = lines_.size();
  body["type"] = type;
  body["data"] = std::move(data);
  const std::string payload = body.dump();
  const std::string digest = to_hex(sha256(head_ + "\n" + payload));
  body["prev"] = head_;
  body["digest"] = digest;
  lines_.push_back(body.dump());
  head_ = digest;
}

bool EventLog::verify(const std::vector<std::string>& lines) {
  std::string head(64, '0');
  std::size_t seq = 0;
  for (const auto& line : lines) {
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::exception&) {
      return false;
    }
    if (!j.contains("prev") || !j.contains("digest") || !j.contains("seq")) return false;
    if (j["prev"] != head || j["seq"] != seq) return false;
    const std::string claimed = j["digest"];
    j.erase("prev");
    j.erase("digest");
    if (to_hex(sha256(head + "\n" + j.dump())) != claimed) return false;
    head = claimed;
    ++seq;
  }
  return true;
}

Ledger::Ledger(LedgerConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::uint64_t Ledger::epoch_at(SimTime t) const {
  if (t < SimTime::zero()) throw std::invalid_argument("negative time");
  return static_cast<std::uint64_t>(t / cfg_.epoch_length);
}

std::uint64_t Ledger::day_at(SimTime t) const {
  if (t < SimTime::zero()) throw std::invalid_argument("negative time");
  return static_cast<std::uint64_t>(t / seconds(86400));
}

EpochLedger& Ledger::open_epoch(std::uint64_t e) {
  auto [it, inserted] = epochs_.try_emplace(e);
  if (inserted) it->second.epoch = e;
  return it->second;
}

const EpochLedger& Ledger::epoch(std::uint64_t e) { return open_epoch(e); }

void Ledger::record_contribution(std::uint64_t e, const NodeId& node, const Rational& delta) {
  if (delta < 0) throw LedgerError("negative contribution from " + node);
  EpochLedger& ep = open_epoch(e);
  if (ep.settled) throw LedgerError("epoch " + std::to_string(e) + " already settled");
  ep.contributions[node] += delta;
  log_.append("contribution", {{"epoch", e}, {"node", node}, {"delta", to_string(delta)}});
}

SettlementResult Ledger::settle_epoch(std::uint64_t e, const std::map<NodeId, Rational>& tiers, SimTime now) {
  EpochLedger& ep = open_epoch(e);
  SettlementResult res;
  if (ep.settled) {
    res.status = SettlementStatus::kRejected;
    log_.append("settlement", {{"epoch", e}, {"status", "rejected"}});
    return res;
  }
  std::map<NodeId, Rational> weights;
  Rational total = 0;
  for (const auto& [node, c] : ep.contributions) {
    auto t = tiers.find(node);
    if (t == tiers.end()) throw LedgerError("no tier multiplier for " + node);
    if (t->second < 0) throw LedgerError("negative tier multiplier for " + node);
    weights[node] = t->second * c;
    total += weights[node];
  }
  res.pool = cfg_.pool_per_epoch + carry_;
  if (total == 0) {
    carry_ = res.pool;
    ep.settled = true;
    ep.pool = 0;
    res.status = SettlementStatus::kCarried;
    log_.append("settlement", {{"epoch", e}, {"status", "carried"}, {"carry", carry_}});
    return res;
  }
  const std::uint64_t day = day_at(now);
  const Units already = emitted_.contains(day) ? emitted_.at(day) : 0;
  if (already + res.pool > cfg_.daily_cap) {
    res.status = SettlementStatus::kDeferred;
    log_.append("settlement",
                {{"epoch", e}, {"status", "deferred"}, {"day", day}, {"emitted", already}, {"pool", res.pool}});
    return res;
  }
  res.exact = exact_quotas(res.pool, weights);
  res.rewards = apportion(res.pool, weights);
  for (const auto& [node, r] : res.rewards) balances_[node] += r;
  emitted_[day] = already + res.pool;
  carry_ = 0;
  ep.pool = res.pool;
  ep.rewards = res.rewards;
  ep.settled = true;
  res.status = SettlementStatus::kSettled;
  log_.append("settlement", {{"epoch", e}, {"status", "settled"}, {"pool", res.pool}, {"rewards", units_json(res.rewards)}});
  log_.append("emission", {{"day", day}, {"emitted", emitted_[day]}, {"cap", cfg_.daily_cap}});
  return res;
}

EmissionCounter Ledger::emission(std::uint64_t day) const {
  auto it = emitted_.find(day);
  return {day, it == emitted_.end() ? 0 : it->second, cfg_.daily_cap};
}

void Ledger::post_bond(const NodeId& node, Units amount) {
  if (amount < 0) throw std::invalid_argument("negative bond");
  bonds_[node] += amount;
  log_.append("bond", {{"node", node}, {"amount", amount}, {"bond", bonds_[node]}});
}

Units Ledger::bond(const NodeId& node) const {
  auto it = bonds_.find(node);
  return it == bonds_.end() ? 0 : it->second;
}

Units Ledger::balance(const NodeId& node) const {
  auto it = balances_.find(node);
  return it == balances_.end() ? 0 : it->second;
}

SlashEvent Ledger::slash(const NodeId& node, const Rational& rate, const std::string& reason) {
  if (rate < Rational(1, 10) || rate > 1) throw std::invalid_argument("slash rate outside [0.1, 1]");
  const Units b = bond(node);
  const Rational raw = rate * b;
  const Units amount =
      floor_div(boost::multiprecision::numerator(raw), boost::multiprecision::denominator(raw)).convert_to<Units>();
  bonds_[node] = b - amount;
  SlashEvent ev{node, rate, amount, reason};
  slashes_.push_back(ev);
  log_.append("slash", {{"node", node}, {"rate", to_string(rate)}, {"amount", amount}, {"reason", reason}});
  return ev;
}

SlashEvent Ledger::slash_for(const NodeId& node, const std::string& offense) {
  auto it = cfg_.slash_schedule.find(offense);
  if (it == cfg_.slash_schedule.end()) throw std::invalid_argument("no slash rate for offense " + offense);
  return slash(node, it->second, offense);
}

void Ledger::open_commit_round(const std::string& task, SimTime close) {
  if (commit_close_.contains(task)) throw LedgerError("commit round " + task + " already open");
  commit_close_[task] = close;
  log_.append("commit_round", {{"task", task}, {"close_ms", close.count()}});
}

void Ledger::commit(const std::string& task, const NodeId& node, const Digest32& c, SimTime now) {
  auto close = commit_close_.find(task);
  if (close == commit_close_.end()) throw LedgerError("no commit round " + task);
  if (now >= close->second) throw LedgerError("commit window for " + task + " closed");
  auto& round = commits_[task];
  if (round.contains(node)) throw LedgerError("duplicate commit from " + node);
  round[node] = CommitRecord{node, c, now, std::nullopt, CommitStatus::kPending};
  log_.append("commit", {{"task", task}, {"node", node}, {"commitment", to_hex(c)}});
}

RevealOutcome Ledger::reveal(const std::string& task, const NodeId& node, const Bytes& result, const Bytes& nonce,
                             SimTime now) {
  auto round = commits_.find(task);
  if (round == commits_.end() || !round->second.contains(node)) {
    throw LedgerError("reveal without commit from " + node);
  }
  CommitRecord& rec = round->second.at(node);
  if (rec.status != CommitStatus::kPending) throw LedgerError("duplicate reveal from " + node);
  if (now < commit_close_.at(task)) {
    log_.append("reveal", {{"task", task}, {"node", node}, {"outcome", "too_early"}});
    return RevealOutcome::kTooEarly;
  }
  rec.revealed = std::make_pair(result, nonce);
  const Digest32 got = commitment(result, nonce);
  if (timing_safe_equal(got, rec.commitment)) {
    rec.status = CommitStatus::kRevealedOk;
    log_.append("reveal", {{"task", task}, {"node", node}, {"outcome", "ok"}});
    return RevealOutcome::kAccepted;
  }
  rec.status = CommitStatus::kSlashed;
  log_.append("reveal", {{"task", task}, {"node", node}, {"outcome", "mismatch"}});
  slash_for(node, "mismatched_reveal");
  return RevealOutcome::kSlashed;
}

const CommitRecord& Ledger::commit_record(const std::string& task, const NodeId& node) const {
  auto round = commits_.find(task);
  if (round == commits_.end() || !round->second.contains(node)) throw LedgerError("no commit from " + node);
  return round->second.at(node);
}

void Ledger::register_notary(const NodeId& notary) {
  if (bond(notary) < cfg_.notary_min_bond) throw LedgerError("notary " + notary + " below minimum bond");
  notaries_.insert(notary);
  log_.append("notary", {{"node", notary}, {"bond", bond(notary)}});
}

void Ledger::register_data(const std::string& record_id, const NodeId& contributor, SimTime now) {
  if (registrations_.contains(record_id)) throw LedgerError("record " + record_id + " already registered");
  registrations_[record_id] = DataRegistration{record_id, contributor, now + cfg_.challenge_window, false, {},
                                               RegistrationStatus::kPending};
  log_.append("data_registered", {{"record", record_id}, {"node", contributor}, {"window_end_ms", (now + cfg_.challenge_window).count()}});
}

void Ledger::challenge(const std::string& record_id, SimTime now) {
  auto& reg = registrations_.at(record_id);
  if (reg.status != RegistrationStatus::kPending || now >= reg.window_end) {
    throw LedgerError("challenge window for " + record_id + " closed");
  }
  reg.challenged = true;
  log_.append("challenge", {{"record", record_id}});
}

void Ledger::notary_vote(const std::string& record_id, const NodeId& notary, bool uphold, SimTime now) {
  auto& reg = registrations_.at(record_id);
  if (!notaries_.contains(notary)) throw LedgerError(notary + " is not a notary");
  if (!reg.challenged || reg.status != RegistrationStatus::kPending) throw LedgerError("no open challenge");
  if (now >= reg.window_end) throw LedgerError("challenge window for " + record_id + " closed");
  if (reg.votes.contains(notary)) throw LedgerError("duplicate vote from " + notary);
  if (reg.votes.size() >= cfg_.quorum_panel) throw LedgerError("notary panel full");
  reg.votes[notary] = uphold;
  log_.append("notary_vote", {{"record", record_id}, {"notary", notary}, {"uphold", uphold}});
}

RegistrationStatus Ledger::finalize_registration(const std::string& record_id, SimTime now) {
  auto& reg = registrations_.at(record_id);
  if (reg.status != RegistrationStatus::kPending || now < reg.window_end) return reg.status;
  const auto upheld = static_cast<unsigned>(
      std::count_if(reg.votes.begin(), reg.votes.end(), [](const auto& v) { return v.second; }));
  if (reg.challenged && upheld >= cfg_.quorum_approvals) {
    reg.status = RegistrationStatus::kRejected;
    log_.append("data_rejected", {{"record", record_id}, {"upheld", upheld}});
    if (bond(reg.contributor) > 0) slash_for(reg.contributor, "inaccurate_data");
  } else {
    reg.status = RegistrationStatus::kConfirmed;
    log_.append("data_confirmed", {{"record", record_id}});
  }
  return reg.status;
}

const DataRegistration& Ledger::registration(const std::string& record_id) const {
  auto it = registrations_.find(record_id);
  if (it == registrations_.end()) throw LedgerError("unknown record " + record_id);
  return it->second;
}

Digest32 commitment(const Bytes& result, const Bytes& nonce) {
  Bytes joined = result;
  joined.insert(joined.end(), nonce.begin(), nonce.end());
  return sha256(joined);
}

IcResult ic_check(double bond, double slash_rate, double gamma, double reward, double attack_gain) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
  if (!(bond >= 0.0) || !(reward >= 0.0) || !(attack_gain >= 0.0) || !(slash_rate >= 0.0)) {
    throw std::invalid_argument("bond, rate, reward and gain must be non-negative");
  }
  IcResult r;
  r.left = slash_rate * bond + gamma * reward / (1.0 - gamma);
  r.margin = r.left - attack_gain;
  r.holds = r.left > attack_gain;
  return r;
}

Units sybil_total(Units pool, const std::map<NodeId, Rational>& weights, const std::vector<NodeId>& ids) {
  const auto rewards = apportion(pool, weights);
  Units total = 0;
  for (const auto& id : ids) {
    auto it = rewards.find(id);
    if (it != rewards.end()) total += it->second;
  }
  return total;
}

SybilReport sybil_compare(Units pool, const Rational& tier, const Rational& contribution, unsigned k,
                          const std::map<NodeId, std::pair<Rational, Rational>>& others, Units bond_per_identity) {
  if (k == 0) throw std::invalid_argument("k must be positive");
  std::map<NodeId, Rational> base;
  for (const auto& [id, tc] : others) base[id] = tc.first * tc.second;

  const NodeId attacker = "attacker";
  if (base.contains(attacker)) throw std::invalid_argument("reserved id 'attacker' in others");
  auto unsplit = base;
  unsplit[attacker] = tier * contribution;

  auto split = base;
  std::vector<NodeId> ids;
  for (unsigned j = 0; j < k; ++j) {
    NodeId id = attacker + "#" + std::to_string(j);
    if (base.contains(id)) throw std::invalid_argument("reserved id " + id + " in others");
    split[id] = tier * (contribution / k);
    ids.push_back(std::move(id));
  }

  SybilReport rep;
  rep.unsplit_exact = exact_quotas(pool, unsplit).at(attacker);
  const auto q = exact_quotas(pool, split);
  for (const auto& id : ids) rep.split_exact += q.at(id);
  rep.unsplit_units = sybil_total(pool, unsplit, {attacker});
  rep.split_units = sybil_total(pool, split, ids);
  rep.unsplit_bond_capital = bond_per_identity;
  rep.split_bond_capital = bond_per_identity * static_cast<Units>(k);
  return rep;
}

}  // namespace dtnet::ledger
