// dtnet: scenario runner and shard-file tool.
//
// Exit codes: 0 success, 1 scenario or input error, 2 invariant violation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dtnet/erasure.hpp"
#include "dtnet/runners.hpp"
#include "dtnet/scenario.hpp"

namespace fs = std::filesystem;
using namespace dtnet;

namespace {

constexpr int kOk = 0;
constexpr int kScenarioError = 1;
constexpr int kViolation = 2;

Bytes read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& p, const Bytes& data) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

int run_scenario(const fs::path& path, const fs::path& out_dir, std::optional<scenario::Kind> expect) {
  const auto s = scenario::load_scenario(path);
  if (expect && s.kind != *expect) {
    std::cerr << path.string() << ": scenario kind is '" << scenario::kind_name(s.kind) << "', expected '"
              << scenario::kind_name(*expect) << "'\n";
    return kScenarioError;
  }
  auto out = scenario::run(s);
  out.summary["violations"] = out.violations;
  out.files["summary.json"] = out.summary.dump(2) + "\n";
  out.write(out_dir);
  std::cout << scenario::kind_name(s.kind) << " " << s.name << " seed=" << s.seed << " files=" << out.files.size()
            << " digest=" << out.digest() << "\n";
  for (const auto& v : out.violations) std::cerr << "violation: " << v << "\n";
  return out.violations.empty() ? kOk : kViolation;
}

int rs_encode(const fs::path& input, const fs::path& out_dir, unsigned k, unsigned m) {
  const Bytes blob = read_file(input);
  if (blob.empty()) {
    std::cerr << input.string() << ": cannot encode an empty file\n";
    return kScenarioError;
  }
  const erasure::CodingParams p{k, m};
  const auto shards = erasure::rs_encode(blob, p);
  for (const auto& sh : shards) {
    write_file(out_dir / (input.filename().string() + ".shard" + std::to_string(sh.index)),
               erasure::encode_shard_file(sh));
  }
  std::cout << "blob " << to_hex(shards.front().blob_id) << " bytes=" << blob.size() << " shards=" << shards.size()
            << "\n";
  return kOk;
}

int rs_decode(const std::vector<fs::path>& inputs, const fs::path& output) {
  std::vector<erasure::Shard> shards;
  for (const auto& p : inputs) shards.push_back(erasure::decode_shard_file(read_file(p)));
  if (shards.empty()) {
    std::cerr << "no shard files given\n";
    return kScenarioError;
  }
  const auto params = shards.front().params;
  const Bytes blob = erasure::rs_decode(shards, params);
  write_file(output, blob);
  std::cout << "blob " << to_hex(sha256(blob)) << " bytes=" << blob.size() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dtnet: decentralized training, storage and incentive simulations"};
  app.require_subcommand(1);

  struct ScenarioCmd {
    std::string file;
    std::string out = "out";
  };
  const std::vector<std::pair<std::string, std::optional<scenario::Kind>>> kinds = {
      {"run", std::nullopt},
      {"diloco", scenario::Kind::kDiloco},
      {"storage", scenario::Kind::kStorage},
      {"ledger", scenario::Kind::kLedger},
      {"autoloop", scenario::Kind::kAutoloop},
  };
  std::map<std::string, ScenarioCmd> cmds;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, kind] : kinds) {
    auto* sub = app.add_subcommand(name, name == "run" ? "Run any scenario file" : "Run a " + name + " scenario");
    auto& c = cmds[name];
    sub->add_option("scenario", c.file, "Scenario YAML file")->required();
    sub->add_option("-o,--out", c.out, "Output directory");
    subs[name] = sub;
  }

  std::string validate_file;
  auto* validate = app.add_subcommand("validate", "Check a scenario file and exit");
  validate->add_option("scenario", validate_file, "Scenario YAML file")->required();

  auto* rs = app.add_subcommand("rs", "Reed-Solomon shard files");
  rs->require_subcommand(1);
  std::string enc_input, enc_out = ".";
  unsigned k = 4, m = 2;
  auto* enc = rs->add_subcommand("encode", "Split a file into K data and M parity shard files");
  enc->add_option("input", enc_input, "File to encode")->required();
  enc->add_option("-o,--out", enc_out, "Directory for shard files");
  enc->add_option("-k,--data", k, "Data shards")->check(CLI::Range(1, 254));
  enc->add_option("-m,--parity", m, "Parity shards")->check(CLI::Range(1, 254));
  std::vector<std::string> dec_inputs;
  std::string dec_out;
  auto* dec = rs->add_subcommand("decode", "Rebuild a file from any K shard files");
  dec->add_option("shards", dec_inputs, "Shard files")->required();
  dec->add_option("-o,--out", dec_out, "Output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kScenarioError;
  }

  try {
    for (const auto& [name, kind] : kinds) {
      if (subs[name]->parsed()) return run_scenario(cmds[name].file, cmds[name].out, kind);
    }
    if (validate->parsed()) {
      const auto s = scenario::load_scenario(validate_file);
      std::cout << validate_file << ": ok (" << scenario::kind_name(s.kind) << " '" << s.name << "')\n";
      return kOk;
    }
    if (enc->parsed()) return rs_encode(enc_input, enc_out, k, m);
    if (dec->parsed()) {
      std::vector<fs::path> paths(dec_inputs.begin(), dec_inputs.end());
      return rs_decode(paths, dec_out);
    }
  } catch (const scenario::ScenarioError& e) {
    std::cerr << e.what() << "\n";
    return kScenarioError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kScenarioError;
  }
  return kScenarioError;
}
