#include "doctest.h"

#include <stdexcept>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dtnet/digest.hpp"
#include "dtnet/random.hpp"

namespace fs = std::filesystem;
using namespace dtnet;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr folded into stdout.
Result cli(const std::string& args) {
  const std::string cmd = std::string("\"") + DTNET_CLI_PATH + "\" " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("dtnet_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("rs round trip with any two shards deleted") {
  auto dir = scratch("rs");
  Rng rng(1);
  std::string blob(1 << 20, '\0');
  for (auto& c : blob) c = static_cast<char>(rng.below(256));
  write(dir / "blob.bin", blob);
  auto enc = cli("rs encode " + q(dir / "blob.bin") + " -o " + q(dir / "shards") + " -k 4 -m 2");
  REQUIRE(enc.code == 0);
  const std::string want = to_hex(sha256(blob));
  for (int i = 0; i < 6; ++i) {
    for (int j = i + 1; j < 6; ++j) {
      std::string args;
      for (int s = 0; s < 6; ++s) {
        if (s != i && s != j) args += " " + q(dir / "shards" / ("blob.bin.shard" + std::to_string(s)));
      }
      auto out = dir / "out.bin";
      fs::remove(out);
      auto dec = cli("rs decode" + args + " -o " + q(out));
      REQUIRE(dec.code == 0);
      CHECK(to_hex(sha256(read(out))) == want);
    }
  }
}

TEST_CASE("rs decode with three shards fails") {
  auto dir = scratch("rs3");
  write(dir / "b", "hello shards");
  REQUIRE(cli("rs encode " + q(dir / "b") + " -o " + q(dir)).code == 0);
  auto r = cli("rs decode " + q(dir / "b.shard0") + " " + q(dir / "b.shard1") + " " + q(dir / "b.shard5") +
               " -o " + q(dir / "x"));
  CHECK(r.code == 1);
  CHECK(r.out.find("need 4 distinct shards") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "x"));
}

TEST_CASE("rs encode of an empty file fails with a message") {
  auto dir = scratch("empty");
  write(dir / "e", "");
  auto r = cli("rs encode " + q(dir / "e") + " -o " + q(dir));
  CHECK(r.code == 1);
  CHECK(r.out.find("empty") != std::string::npos);
}

TEST_CASE("scenario commands write files and report the digest") {
  auto dir = scratch("run");
  const fs::path sc = fs::path(DTNET_SCENARIO_DIR) / "ledger_default.yaml";
  auto a = cli("ledger " + q(sc) + " -o " + q(dir / "a"));
  auto b = cli("run " + q(sc) + " -o " + q(dir / "b"));
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.find("digest=") != std::string::npos);
  CHECK(read(dir / "a" / "ledger" / "events.jsonl") == read(dir / "b" / "ledger" / "events.jsonl"));
  CHECK(fs::exists(dir / "a" / "summary.json"));
}

TEST_CASE("kind mismatch and bad scenarios exit 1") {
  auto dir = scratch("bad");
  const fs::path sc = fs::path(DTNET_SCENARIO_DIR) / "ledger_default.yaml";
  CHECK(cli("diloco " + q(sc) + " -o " + q(dir)).code == 1);
  write(dir / "bad.yaml", "name: x\nkind: diloco\nseed: 1\nnodes:\n  - {id: a}\nwhat: 1\n");
  auto r = cli("validate " + q(dir / "bad.yaml"));
  CHECK(r.code == 1);
  CHECK(r.out.find("bad.yaml:6:1: unknown key 'what'") != std::string::npos);
  CHECK(cli("validate " + q(sc)).code == 0);
  CHECK(cli("nonsense").code == 1);
}

TEST_CASE("invariant violations exit 2") {
  auto dir = scratch("viol");
  // Four of six holders fail at once: more than M shards of every blob are lost.
  write(dir / "v.yaml",
        "name: overload\nkind: storage\nseed: 3\nnodes:\n"
        "  - {id: s1, tier: storage_node, read_mbps: 200, write_mbps: 100}\n"
        "  - {id: s2, tier: storage_node, read_mbps: 200, write_mbps: 100}\n"
        "  - {id: s3, tier: storage_node, read_mbps: 200, write_mbps: 100}\n"
        "  - {id: s4, tier: storage_node, read_mbps: 200, write_mbps: 100}\n"
        "  - {id: s5, tier: storage_node, read_mbps: 200, write_mbps: 100}\n"
        "  - {id: s6, tier: storage_node, read_mbps: 200, write_mbps: 100}\n"
        "failures:\n  - {node: s1, down_s: 300}\n  - {node: s2, down_s: 300}\n"
        "  - {node: s3, down_s: 300}\n  - {node: s4, down_s: 300}\n"
        "storage:\n  blobs: 2\n  duration_s: 900\n");
  auto r = cli("storage " + q(dir / "v.yaml") + " -o " + q(dir / "out"));
  CHECK(r.code == 2);
  CHECK(r.out.find("violation:") != std::string::npos);
}
