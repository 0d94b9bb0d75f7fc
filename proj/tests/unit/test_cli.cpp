#include "caltrace/cli.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "caltrace/ledger.hpp"
#include "doctest.h"
#include "support/fixtures.hpp"

using namespace caltrace;
using fixture::TempDir;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kClock = "--clock=fixed:2026-01-01T00:00:00Z";
const std::string kSender = "0x" + std::string(40, 'e');

/// Chain with NPL, one accredited org, a technician in each, and a two-level
/// device chain ref -> dev-a.
struct Workspace {
  TempDir dir;
  std::string chain = (dir / "chain.jsonl").string();

  Run cli(std::vector<std::string> args, bool seeded = true) {
    std::vector<std::string> full{"--chain", chain, kClock};
    if (seeded) full.insert(full.end(), {"--seed", "demo"});
    full.insert(full.end(), args.begin(), args.end());
    return run(full);
  }
  std::string key(const std::string& name) const { return (dir / (name + ".key")).string(); }

  void build() {
    REQUIRE(cli({"init", "--key-out", key("npl"), "--difficulty-bits", "4"}).code == 0);
    REQUIRE(cli({"org", "create", "--id", "org-1", "--name", "MetroCal Ltd", "--issuer-key", key("npl"),
                 "--key-out", key("org1")})
                .code == 0);
    REQUIRE(cli({"tech", "create", "--id", "tech-npl", "--org-key", key("npl"), "--key-out", key("tnpl")})
                .code == 0);
    REQUIRE(cli({"tech", "create", "--id", "tech-1", "--org-key", key("org1"), "--key-out", key("t1")}).code ==
            0);
    REQUIRE(cli({"mine"}).code == 0);
    REQUIRE(cli({"report", "create", "--report-id", "rep-ref", "--device", "ref", "--tech-key", key("tnpl"),
                 "--device-key-out", key("ref"), "--mine"})
                .code == 0);
    REQUIRE(cli({"report", "create", "--report-id", "rep-a", "--device", "dev-a", "--tech-key", key("t1"),
                 "--parent-key", key("ref"), "--device-key-out", key("dev-a"), "--mine"})
                .code == 0);
  }
};

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({"trace"}).code == cli::kExitUsage);
  CHECK(run({"econ", "--block-interval", "soon"}).code == cli::kExitUsage);
  CHECK(run({"--output", "yaml", "econ"}).code == cli::kExitUsage);
  CHECK(run({"--clock", "tomorrow", "econ"}).code == cli::kExitUsage);
  Run help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("trace") != std::string::npos);
  CHECK(run({"--chain", "/nonexistent-dir/x.jsonl", "chain", "info"}).code == cli::kExitUsage);
  TempDir d;
  CHECK(run({"--chain", (d / "c.jsonl").string(), "trace", "read", "x"}).code == cli::kExitUsage);
}

TEST_CASE("econ") {
  Run text = run({"econ"});
  CHECK(text.code == 0);
  CHECK(text.out.find("devices_per_block          2\n") != std::string::npos);
  CHECK(text.out.find("writes_per_day             11520\n") != std::string::npos);

  Run csv = run({"--output", "csv", "econ"});
  CHECK(csv.out.find("writes_per_day,11520\n") != std::string::npos);

  Run json = run({"--output", "json", "econ", "--no-override"});
  Json j = Json::parse(json.out);
  CHECK(j["daily_gas_per_device"] == 4'800'000);
  CHECK(j["devices_per_block"] == 1);

  Run warn = run({"econ", "--daily-gas", "9000000"});
  CHECK(warn.code == 0);
  CHECK(warn.out.find("warning") != std::string::npos);
}

TEST_CASE("registry workflow across restarts") {
  Workspace w;
  w.build();

  Run read = w.cli({"trace", "read", "dev-a"});
  CHECK(read.code == 0);
  Json root = Json::parse(read.out);
  CHECK(root["report_id"] == "rep-ref");

  CHECK(w.cli({"chain", "validate"}).code == 0);
  CHECK(w.cli({"query", "org-name", "org-1"}).out == "MetroCal Ltd\n");
  CHECK(w.cli({"query", "tech-org", "tech-1"}).out == "org-1\n");
  CHECK(Json::parse(w.cli({"query", "parent-report", "dev-a"}).out)["report_id"] == "rep-ref");
  CHECK(w.cli({"query", "org-name", "nobody"}).code == cli::kExitInvalid);

  Run unknown = w.cli({"trace", "read", "ghost"});
  CHECK(unknown.code == cli::kExitInvalid);
  CHECK(unknown.out == "INVALID\n");

  SUBCASE("trace write is recorded with its sender") {
    CHECK(w.cli({"trace", "write", "dev-a", "--sender", kSender, "--mine"}).code == 0);
    Json t = Json::parse(w.cli({"--output", "json", "query", "trace-record", "dev-a"}).out);
    CHECK(t["result"]["valid_report"] == true);
    CHECK(t["result"]["sender"] == kSender);
    CHECK(w.cli({"trace", "write", "dev-a", "--sender", "alice"}).code == cli::kExitUsage);
    CHECK(w.cli({"trace", "write", "ghost", "--sender", kSender}).code == cli::kExitInvalid);
  }
  SUBCASE("contract rejections are not queued") {
    Run bad = w.cli({"report", "create", "--report-id", "rep-b", "--device", "dev-b", "--tech-key", w.key("t1"),
                     "--parent-key", w.key("dev-a"), "--level", "2"});
    CHECK(bad.code == cli::kExitInvalid);
    CHECK(bad.out.find("level-violation") != std::string::npos);
    CHECK(Json::parse(w.cli({"--output", "json", "chain", "info"}).out)["pending"] == 0);
  }
  SUBCASE("revocation invalidates descendants") {
    CHECK(w.cli({"report", "revoke", "--report", "rep-ref", "--revoker", "org-1", "--sender", kSender}).code ==
          cli::kExitInvalid);
    CHECK(w.cli({"report", "revoke", "--report", "rep-ref", "--revoker", "NPL", "--sender", kSender, "--mine"})
              .code == 0);
    Run after = w.cli({"trace", "read", "dev-a"});
    CHECK(after.code == cli::kExitInvalid);
    CHECK(after.out == "INVALID\n");
    CHECK(w.cli({"chain", "validate"}).code == 0);
  }
  SUBCASE("queued transactions survive until mined") {
    CHECK(w.cli({"trace", "write", "dev-a", "--sender", kSender}).code == 0);
    CHECK(Json::parse(w.cli({"--output", "json", "chain", "info"}).out)["pending"] == 1);
    Json mined = Json::parse(w.cli({"--output", "json", "mine"}).out);
    CHECK(mined["mined"].size() == 1);
    CHECK(Json::parse(w.cli({"--output", "json", "chain", "info"}).out)["pending"] == 0);
  }
  SUBCASE("reads leave the chain bytes alone") {
    const std::string before = slurp(w.chain);
    for (int i = 0; i < 5; ++i) {
      w.cli({"trace", "read", "dev-a"});
      w.cli({"query", "org-name", "org-1"});
      w.cli({"chain", "info"});
      w.cli({"chain", "validate"});
    }
    CHECK(slurp(w.chain) == before);
    const bool pending = std::filesystem::exists(w.chain + ".pending") && !slurp(w.chain + ".pending").empty();
    CHECK_FALSE(pending);
  }
  SUBCASE("a damaged chain is an integrity error") {
    std::string bytes = slurp(w.chain);
    bytes[bytes.size() / 2] ^= 0x01;
    std::ofstream(w.chain, std::ios::binary | std::ios::trunc) << bytes;
    Run v = w.cli({"chain", "validate"});
    CHECK(v.code == cli::kExitIntegrity);
    CHECK(v.out.rfind("INVALID at block", 0) == 0);
    CHECK(w.cli({"trace", "read", "dev-a"}).code == cli::kExitIntegrity);
  }
}

TEST_CASE("seeded keys are reproducible") {
  TempDir d;
  Run a = run({"--seed", "s1", "keygen", "--id", "dev-x", "--out", (d / "a.key").string()});
  Run b = run({"--seed", "s1", "keygen", "--id", "dev-x", "--out", (d / "b.key").string()});
  Run c = run({"keygen", "--id", "dev-x", "--out", (d / "c.key").string()});
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out != c.out);
  Json k = Json::parse(slurp(d / "a.key"));
  CHECK(k["scheme"] == "ed25519");
  CHECK(k["kind"] == "device");
}

TEST_CASE("init once per chain") {
  Workspace w;
  CHECK(w.cli({"init"}).code == cli::kExitUsage);
  CHECK(w.cli({"init", "--key-out", w.key("npl")}).code == 0);
  CHECK(w.cli({"init", "--key-out", w.key("npl2")}).code != 0);
}

TEST_CASE("hierarchy generate") {
  Workspace w;
  const std::string spec = (w.dir / "spec.json").string();
  std::ofstream(spec) << R"({"n_devices": 30, "seed": 9})";
  const std::string bundle = (w.dir / "bundle.json").string();
  Run gen = w.cli({"--output", "json", "hierarchy", "generate", "--spec", spec, "--out", bundle, "--commit",
                   "--difficulty-bits", "2"});
  REQUIRE(gen.code == 0);
  Json doc = Json::parse(gen.out);
  CHECK(doc["leaves"] == 30);
  CHECK(doc["spec"]["levels"] == 1);
  CHECK(Json::parse(slurp(bundle))["reports"].size() == 31);

  Run read = w.cli({"trace", "read", "dev-l1-29"});
  CHECK(read.code == 0);
  CHECK(Json::parse(read.out)["device_id"] == "nmi-ref");
  CHECK(w.cli({"trace", "write", "dev-l1-3", "--sender", kSender, "--mine"}).code == 0);
  CHECK(Json::parse(w.cli({"query", "trace-record", "dev-l1-3"}).out)["valid_report"] == true);
  CHECK(w.cli({"chain", "validate"}).code == 0);

  Run again = w.cli({"hierarchy", "generate", "--n", "30", "--gen-seed", "9"});
  CHECK(again.code == 0);
  CHECK(again.out.find(doc["digest"].get<std::string>()) != std::string::npos);
  CHECK(w.cli({"hierarchy", "generate", "--n", "100", "--levels", "7"}).code == cli::kExitInvalid);
}

TEST_CASE("bench commands") {
  TempDir d;
  Run levels = run({"bench", "levels", "--levels", "1,2,3,4", "--trials", "10", "--signatures", "on"});
  // Timing invariants can fail on a loaded machine; the exit code must say so.
  const bool violated = levels.err.find("invariant failed") != std::string::npos;
  CHECK(levels.code == (violated ? cli::kExitInvalid : 0));
  CHECK(levels.out.rfind("experiment,n_devices", 0) == 0);
  CHECK(std::count(levels.out.begin(), levels.out.end(), '\n') == 5);
  const std::string out = (d / "dev.json").string();
  Run devices = run({"bench", "devices", "--n", "10,20", "--trials", "10", "--format", "json", "--out", out});
  CHECK(devices.code != cli::kExitUsage);
  CHECK(Json::parse(slurp(out))["records"].size() == 4);
  CHECK(run({"bench", "devices", "--n", "5"}).code == cli::kExitUsage);
  CHECK(run({"bench", "levels", "--levels", "3", "--trials", "2"}).code == cli::kExitUsage);
}

TEST_CASE("json output parses for every subcommand") {
  Workspace w;
  w.build();
  const std::vector<std::vector<std::string>> commands{
      {"trace", "read", "dev-a"},
      {"trace", "read", "ghost"},
      {"query", "org-name", "org-1"},
      {"query", "trace-record", "dev-a"},
      {"chain", "info"},
      {"chain", "validate"},
      {"mine"},
      {"econ"},
      {"keygen", "--id", "k", "--out", w.key("k")},
      {"trace", "write", "dev-a", "--sender", kSender, "--mine"},
      {"hierarchy", "generate", "--n", "10"},
  };
  for (const auto& c : commands) {
    std::vector<std::string> args{"--output", "json"};
    args.insert(args.end(), c.begin(), c.end());
    Run r = w.cli(args);
    INFO(c.front() << " " << (c.size() > 1 ? c[1] : ""));
    CHECK(Json::accept(r.out));
  }
}
