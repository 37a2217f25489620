#include "dtnet/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dtnet::scenario {

namespace {

// Walks a YAML mapping with diagnostics that point at the offending line.
class Reader {
 public:
  Reader(YAML::Node node, std::string source, std::string path)
      : node_(std::move(node)), source_(std::move(source)), path_(std::move(path)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& msg) const {
    std::ostringstream os;
    os << source_;
    const auto mark = at.Mark();
    if (!mark.is_null()) os << ':' << mark.line + 1 << ':' << mark.column + 1;
    os << ": " << msg;
    throw ScenarioError(os.str());
  }
  [[noreturn]] void fail(const std::string& msg) const { fail(node_, msg); }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void expect_map() const {
    if (!node_.IsMap()) fail(path_.empty() ? "scenario must be a mapping" : "'" + path_ + "' must be a mapping");
  }

  void allow(std::initializer_list<const char*> keys) const {
    expect_map();
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& kv : node_) {
      const auto k = kv.first.as<std::string>();
      if (!ok.contains(k)) fail(kv.first, "unknown key '" + where(k) + "'");
    }
  }

  bool has(const std::string& key) const { return node_[key].IsDefined() && !node_[key].IsNull(); }

  YAML::Node raw(const std::string& key) const { return node_[key]; }

  Reader child(const std::string& key) const {
    Reader r(node_[key], source_, where(key));
    r.expect_map();
    return r;
  }

  template <typename T>
  T as(const YAML::Node& n, const std::string& key) const {
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, "key '" + where(key) + "' has the wrong type");
    }
  }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    return has(key) ? as<T>(node_[key], key) : fallback;
  }

  template <typename T>
  T require(const std::string& key) const {
    if (!has(key)) fail("missing required key '" + where(key) + "'");
    return as<T>(node_[key], key);
  }

  double positive(const std::string& key, double fallback) const {
    const double v = get<double>(key, fallback);
    if (!(v > 0.0)) fail(node_[key], "key '" + where(key) + "' must be positive");
    return v;
  }

  double unit(const std::string& key, double fallback) const {
    const double v = get<double>(key, fallback);
    if (!(v >= 0.0 && v <= 1.0)) fail(node_[key], "key '" + where(key) + "' must lie in [0, 1]");
    return v;
  }

  std::size_t count(const std::string& key, std::size_t fallback) const {
    if (!has(key)) return fallback;
    const auto v = as<long long>(node_[key], key);
    if (v < 0) fail(node_[key], "key '" + where(key) + "' must be non-negative");
    return static_cast<std::size_t>(v);
  }

  // Durations are given in seconds (may be fractional).
  SimDuration seconds_of(const std::string& key, SimDuration fallback) const {
    if (!has(key)) return fallback;
    const double s = as<double>(node_[key], key);
    if (!(s >= 0.0)) fail(node_[key], "key '" + where(key) + "' must be a non-negative duration");
    return SimDuration{static_cast<std::int64_t>(std::llround(s * 1000.0))};
  }

  ledger::Rational rational(const std::string& key, const ledger::Rational& fallback) const {
    if (!has(key)) return fallback;
    return rational_of(node_[key], key);
  }

  ledger::Rational rational_of(const YAML::Node& n, const std::string& key) const {
    if (!n.IsScalar()) fail(n, "key '" + where(key) + "' must be a number");
    try {
      return ledger::parse_decimal(n.Scalar());
    } catch (const std::invalid_argument& e) {
      fail(n, "key '" + where(key) + "': " + e.what());
    }
  }

  const YAML::Node& node() const { return node_; }
  const std::string& source() const { return source_; }

 private:
  YAML::Node node_;
  std::string source_;
  std::string path_;
};

storage::Tier tier_of(const Reader& r, const YAML::Node& n, const std::string& key) {
  const auto name = r.as<std::string>(n, key);
  auto t = storage::parse_tier(name);
  if (!t) r.fail(n, "unknown tier '" + name + "'");
  return *t;
}

std::set<NodeId> id_list(const Reader& r, const YAML::Node& n, const std::string& key,
                         const std::set<NodeId>& known) {
  if (!n.IsSequence()) r.fail(n, "key '" + r.where(key) + "' must be a list of node ids");
  std::set<NodeId> out;
  for (const auto& item : n) {
    auto id = r.as<std::string>(item, key);
    if (!known.contains(id)) r.fail(item, "unknown node '" + id + "'");
    out.insert(std::move(id));
  }
  return out;
}

void parse_nodes(const Reader& root, Scenario& s) {
  const YAML::Node list = root.raw("nodes");
  if (!list.IsSequence() || list.size() == 0) root.fail(list, "'nodes' must be a non-empty list");
  std::set<NodeId> seen;
  for (std::size_t i = 0; i < list.size(); ++i) {
    Reader r(list[i], root.source(), "nodes[" + std::to_string(i) + "]");
    r.allow({"id", "tier", "region", "read_mbps", "write_mbps", "speed", "bond"});
    NodeSpec n;
    n.id = r.require<std::string>("id");
    if (!seen.insert(n.id).second) r.fail(r.raw("id"), "duplicate node id '" + n.id + "'");
    if (r.has("tier")) n.tier = tier_of(r, r.raw("tier"), "tier");
    n.region = r.get<std::string>("region", n.region);
    n.read_mbps = r.get<double>("read_mbps", 0.0);
    n.write_mbps = r.get<double>("write_mbps", 0.0);
    n.speed = r.positive("speed", 1.0);
    n.bond = static_cast<ledger::Units>(r.count("bond", 0));
    s.nodes.push_back(std::move(n));
  }
}

void parse_network(const Reader& root, Scenario& s, const std::set<NodeId>& ids) {
  if (!root.has("network")) return;
  const Reader r = root.child("network");
  r.allow({"latency_ms", "drop_probability", "partitions"});
  if (r.has("latency_ms")) {
    const YAML::Node l = r.raw("latency_ms");
    if (!l.IsSequence() || l.size() != 2) r.fail(l, "'network.latency_ms' must be [min, max]");
    const auto lo = r.as<long long>(l[0], "latency_ms");
    const auto hi = r.as<long long>(l[1], "latency_ms");
    if (lo < 0 || hi < lo) r.fail(l, "'network.latency_ms' must satisfy 0 <= min <= max");
    s.network.latency_min = SimDuration{lo};
    s.network.latency_max = SimDuration{hi};
  }
  s.network.drop_probability = r.unit("drop_probability", 0.0);
  if (r.has("partitions")) {
    const YAML::Node list = r.raw("partitions");
    if (!list.IsSequence()) r.fail(list, "'network.partitions' must be a list");
    for (std::size_t i = 0; i < list.size(); ++i) {
      Reader p(list[i], root.source(), "network.partitions[" + std::to_string(i) + "]");
      p.allow({"start_s", "end_s", "side_a", "side_b"});
      sim::Partition part;
      part.start = p.seconds_of("start_s", SimTime{0});
      part.end = p.seconds_of("end_s", SimTime{0});
      if (part.end <= part.start) p.fail("partition must end after it starts");
      part.side_a = id_list(p, p.raw("side_a"), "side_a", ids);
      part.side_b = id_list(p, p.raw("side_b"), "side_b", ids);
      s.network.partitions.push_back(std::move(part));
    }
  }
}

void parse_failures(const Reader& root, Scenario& s, const std::set<NodeId>& ids) {
  if (!root.has("failures")) return;
  const YAML::Node list = root.raw("failures");
  if (!list.IsSequence()) root.fail(list, "'failures' must be a list");
  for (std::size_t i = 0; i < list.size(); ++i) {
    Reader f(list[i], root.source(), "failures[" + std::to_string(i) + "]");
    f.allow({"node", "down_s", "up_s"});
    FailureSpec spec;
    spec.node = f.require<std::string>("node");
    if (!ids.contains(spec.node)) f.fail(f.raw("node"), "unknown node '" + spec.node + "'");
    if (!f.has("down_s")) f.fail("missing required key 'failures[" + std::to_string(i) + "].down_s'");
    spec.down_at = f.seconds_of("down_s", SimTime{0});
    if (f.has("up_s")) {
      spec.up_at = f.seconds_of("up_s", SimTime{0});
      if (*spec.up_at <= spec.down_at) f.fail(f.raw("up_s"), "up_s must be after down_s");
    }
    s.failures.push_back(std::move(spec));
  }
}

void parse_diloco(const Reader& root, Scenario& s) {
  if (!root.has("diloco")) return;
  const Reader r = root.child("diloco");
  r.allow({"rounds", "inner_steps", "step_time_s", "round_deadline_s", "ack_window_s", "check_interval_s",
           "heartbeat_interval_s", "peer_timeout_s", "features", "rows_per_node", "test_rows", "noise_std",
           "inner_lr", "outer_lr", "outer_momentum"});
  auto& d = s.diloco;
  d.rounds = r.count("rounds", d.rounds);
  d.inner_steps = r.count("inner_steps", d.inner_steps);
  if (d.inner_steps == 0) r.fail(r.raw("inner_steps"), "'diloco.inner_steps' must be positive");
  d.step_time = r.seconds_of("step_time_s", d.step_time);
  d.round_deadline = r.seconds_of("round_deadline_s", d.round_deadline);
  d.ack_window = r.seconds_of("ack_window_s", d.ack_window);
  d.check_interval = r.seconds_of("check_interval_s", d.check_interval);
  d.heartbeat_interval = r.seconds_of("heartbeat_interval_s", d.heartbeat_interval);
  d.peer_timeout = r.seconds_of("peer_timeout_s", d.peer_timeout);
  if (d.round_deadline <= d.ack_window) r.fail("'diloco.round_deadline_s' must exceed 'diloco.ack_window_s'");
  if (d.check_interval <= SimDuration::zero() || d.heartbeat_interval <= SimDuration::zero()) {
    r.fail("check and heartbeat intervals must be positive");
  }
  d.features = r.count("features", d.features);
  d.rows_per_node = r.count("rows_per_node", d.rows_per_node);
  d.test_rows = r.count("test_rows", d.test_rows);
  if (d.features == 0 || d.rows_per_node == 0 || d.test_rows == 0) r.fail("features and row counts must be positive");
  d.noise_std = r.get<double>("noise_std", d.noise_std);
  d.inner_lr = r.positive("inner_lr", d.inner_lr);
  d.outer_lr = r.positive("outer_lr", d.outer_lr);
  d.outer_momentum = r.get<double>("outer_momentum", d.outer_momentum);
  if (!(d.outer_momentum >= 0.0 && d.outer_momentum < 1.0)) {
    r.fail(r.raw("outer_momentum"), "'diloco.outer_momentum' must lie in [0, 1)");
  }
}

void parse_storage(const Reader& root, Scenario& s) {
  if (!root.has("storage")) return;
  const Reader r = root.child("storage");
  r.allow({"blobs", "min_blob_bytes", "max_blob_bytes", "data_shards", "parity_shards", "cycle_s", "min_replicas",
           "max_replicas", "rate_limit", "min_read_mbps", "min_write_mbps", "heartbeat_interval_s", "duration_s",
           "random_failures", "failure_start_s", "failure_spacing_s"});
  auto& p = s.storage;
  p.blobs = r.count("blobs", p.blobs);
  p.min_blob_bytes = r.count("min_blob_bytes", p.min_blob_bytes);
  p.max_blob_bytes = r.count("max_blob_bytes", p.max_blob_bytes);
  if (p.min_blob_bytes == 0 || p.max_blob_bytes < p.min_blob_bytes) {
    r.fail("blob sizes must satisfy 1 <= min_blob_bytes <= max_blob_bytes");
  }
  p.coding.data_shards = static_cast<unsigned>(r.count("data_shards", p.coding.data_shards));
  p.coding.parity_shards = static_cast<unsigned>(r.count("parity_shards", p.coding.parity_shards));
  try {
    erasure::validate(p.coding);
  } catch (const std::invalid_argument& e) {
    r.fail(std::string("invalid coding parameters: ") + e.what());
  }
  p.daemon.cycle = r.seconds_of("cycle_s", p.daemon.cycle);
  p.daemon.min_replicas = r.count("min_replicas", p.daemon.min_replicas);
  p.daemon.max_replicas = r.count("max_replicas", p.daemon.max_replicas);
  p.daemon.rate_limit = r.count("rate_limit", p.daemon.rate_limit);
  if (p.daemon.min_replicas == 0 || p.daemon.max_replicas < p.daemon.min_replicas) {
    r.fail("replica bounds must satisfy 1 <= min_replicas <= max_replicas");
  }
  if (p.daemon.cycle <= SimDuration::zero()) r.fail("'storage.cycle_s' must be positive");
  p.thresholds.min_read_mbps = r.get<double>("min_read_mbps", p.thresholds.min_read_mbps);
  p.thresholds.min_write_mbps = r.get<double>("min_write_mbps", p.thresholds.min_write_mbps);
  p.heartbeat_interval = r.seconds_of("heartbeat_interval_s", p.heartbeat_interval);
  if (p.heartbeat_interval <= SimDuration::zero()) r.fail("'storage.heartbeat_interval_s' must be positive");
  p.duration = r.seconds_of("duration_s", p.duration);
  p.random_failures = r.count("random_failures", p.random_failures);
  p.failure_start = r.seconds_of("failure_start_s", p.failure_start);
  p.failure_spacing = r.seconds_of("failure_spacing_s", p.failure_spacing);
}

void parse_rewards(const Reader& r, ledger::LedgerConfig& c) {
  r.allow({"epoch_length_s", "pool_per_epoch", "daily_cap", "tier_multipliers", "slash_schedule",
           "challenge_window_s", "quorum", "notary_min_bond", "axis_weights"});
  c.epoch_length = r.seconds_of("epoch_length_s", c.epoch_length);
  const bool custom_cap = r.has("daily_cap");
  if (r.has("pool_per_epoch")) c.pool_per_epoch = static_cast<ledger::Units>(r.count("pool_per_epoch", 0));
  const auto epochs_per_day = seconds(86400) / c.epoch_length;
  c.daily_cap = custom_cap ? static_cast<ledger::Units>(r.count("daily_cap", 0))
                           : static_cast<ledger::Units>(epochs_per_day) * c.pool_per_epoch;
  if (r.has("tier_multipliers")) {
    const Reader t = r.child("tier_multipliers");
    for (const auto& kv : t.node()) {
      const auto name = kv.first.as<std::string>();
      auto tier = storage::parse_tier(name);
      if (!tier) t.fail(kv.first, "unknown tier '" + name + "'");
      c.tier_multipliers[*tier] = t.rational_of(kv.second, name);
    }
  }
  if (r.has("slash_schedule")) {
    const Reader t = r.child("slash_schedule");
    for (const auto& kv : t.node()) {
      const auto name = kv.first.as<std::string>();
      c.slash_schedule[name] = t.rational_of(kv.second, name);
    }
  }
  c.challenge_window = r.seconds_of("challenge_window_s", c.challenge_window);
  if (r.has("quorum")) {
    const Reader q = r.child("quorum");
    q.allow({"q", "n"});
    c.quorum_approvals = static_cast<unsigned>(q.count("q", c.quorum_approvals));
    c.quorum_panel = static_cast<unsigned>(q.count("n", c.quorum_panel));
  }
  c.notary_min_bond = static_cast<ledger::Units>(r.count("notary_min_bond", static_cast<std::size_t>(c.notary_min_bond)));
  if (r.has("axis_weights")) {
    const Reader a = r.child("axis_weights");
    a.allow({"data_quality", "training_compute", "model_quality"});
    c.axis_weights.data_quality = a.rational("data_quality", c.axis_weights.data_quality);
    c.axis_weights.training_compute = a.rational("training_compute", c.axis_weights.training_compute);
    c.axis_weights.model_quality = a.rational("model_quality", c.axis_weights.model_quality);
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(std::string("invalid rewards: ") + e.what());
  }
}

void parse_ledger(const Reader& root, Scenario& s) {
  if (root.has("rewards")) parse_rewards(root.child("rewards"), s.ledger.rewards);
  if (!root.has("ledger")) return;
  const Reader r = root.child("ledger");
  r.allow({"epochs", "participation", "commit_tasks_per_epoch", "mismatch_probability", "data_records",
           "challenge_probability"});
  auto& l = s.ledger;
  l.epochs = r.count("epochs", l.epochs);
  l.participation = r.unit("participation", l.participation);
  l.commit_tasks_per_epoch = r.count("commit_tasks_per_epoch", l.commit_tasks_per_epoch);
  l.mismatch_probability = r.unit("mismatch_probability", l.mismatch_probability);
  l.data_records = r.count("data_records", l.data_records);
  l.challenge_probability = r.unit("challenge_probability", l.challenge_probability);
}

void parse_autoloop(const Reader& root, Scenario& s) {
  if (!root.has("autoloop")) return;
  const Reader r = root.child("autoloop");
  r.allow({"task", "train_rows", "eval_rows", "threshold", "scripted_scores", "epsilon", "patience",
           "max_versions"});
  auto& a = s.autoloop;
  a.task = r.get<std::string>("task", a.task);
  if (a.task != "pivot" && a.task != "scripted") r.fail(r.raw("task"), "task must be 'pivot' or 'scripted'");
  a.train_rows = r.count("train_rows", a.train_rows);
  a.eval_rows = r.count("eval_rows", a.eval_rows);
  if (a.train_rows == 0 || a.eval_rows == 0) r.fail("row counts must be positive");
  a.threshold = r.get<double>("threshold", a.threshold);
  if (r.has("scripted_scores")) {
    const YAML::Node list = r.raw("scripted_scores");
    if (!list.IsSequence()) r.fail(list, "'autoloop.scripted_scores' must be a list");
    for (const auto& v : list) {
      const double x = r.as<double>(v, "scripted_scores");
      if (!(x >= 0.0 && x <= 1.0)) r.fail(v, "scripted scores must lie in [0, 1]");
      a.scripted_scores.push_back(x);
    }
  }
  if (a.task == "scripted" && a.scripted_scores.empty()) r.fail("scripted task needs 'scripted_scores'");
  a.loop.convergence.epsilon = r.positive("epsilon", a.loop.convergence.epsilon);
  a.loop.convergence.patience = r.count("patience", a.loop.convergence.patience);
  if (a.loop.convergence.patience == 0) r.fail(r.raw("patience"), "'autoloop.patience' must be at least 1");
  a.loop.max_versions = r.count("max_versions", a.loop.max_versions);
}

}  // namespace

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::kDiloco: return "diloco";
    case Kind::kStorage: return "storage";
    case Kind::kLedger: return "ledger";
    case Kind::kAutoloop: return "autoloop";
  }
  return "unknown";
}

Scenario parse_scenario(const std::string& text, const std::string& source) {
  YAML::Node doc;
  try {
    doc = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ScenarioError(source + ":" + std::to_string(e.mark.line + 1) + ":" + std::to_string(e.mark.column + 1) +
                        ": " + e.msg);
  }
  const Reader root(doc, source, "");
  root.allow({"name", "kind", "seed", "nodes", "network", "failures", "diloco", "storage", "rewards", "ledger",
              "autoloop"});
  Scenario s;
  s.name = root.require<std::string>("name");
  const auto kind = root.require<std::string>("kind");
  if (kind == "diloco") {
    s.kind = Kind::kDiloco;
  } else if (kind == "storage") {
    s.kind = Kind::kStorage;
  } else if (kind == "ledger") {
    s.kind = Kind::kLedger;
  } else if (kind == "autoloop") {
    s.kind = Kind::kAutoloop;
  } else {
    root.fail(root.raw("kind"), "unknown kind '" + kind + "'");
  }
  s.seed = root.require<std::uint64_t>("seed");
  if (s.kind != Kind::kAutoloop) parse_nodes(root, s);
  std::set<NodeId> ids;
  for (const auto& n : s.nodes) ids.insert(n.id);
  parse_network(root, s, ids);
  parse_failures(root, s, ids);
  parse_diloco(root, s);
  parse_storage(root, s);
  parse_ledger(root, s);
  parse_autoloop(root, s);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError(path.string() + ": cannot open scenario file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.string());
}

std::string RunOutput::digest() const {
  Sha256Stream h;
  for (const auto& [name, content] : files) {
    h.update(name);
    h.update(std::string_view("\0", 1));
    h.update(std::to_string(content.size()));
    h.update(std::string_view("\0", 1));
    h.update(content);
  }
  const auto d = h.finish();
  return to_hex(d);
}

void RunOutput::write(const std::filesystem::path& dir) const {
  for (const auto& [name, content] : files) {
    const auto path = dir / name;
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
  }
}

}  // namespace dtnet::scenario
