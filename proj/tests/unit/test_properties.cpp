// Randomised invariants. Every generator is seeded, so failures reproduce;
// the seed of a failing case is printed through INFO.

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "caltrace/error.hpp"
#include "caltrace/hierarchy.hpp"
#include "caltrace/ledger.hpp"
#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/oracle.hpp"

using namespace caltrace;
using fixture::kNow;
using fixture::TempDir;

namespace {

using Rng = std::mt19937_64;

const std::string kSender = "0x" + std::string(40, 'a');

Bytes random_bytes(Rng& rng, std::size_t n) {
  Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

std::size_t pick(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

template <class T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[pick(rng, v.size())];
}

KeyPair random_key(Rng& rng) { return KeyPair::from_seed32(random_bytes(rng, 32)); }

std::vector<std::string> with_reports(const GeneratedHierarchy& h) {
  std::vector<std::string> out;
  for (const auto& d : h.all_devices()) {
    if (h.registry.current_report(d) != nullptr) out.push_back(d);
  }
  return out;
}

std::set<std::string> unreadable(const GeneratedHierarchy& h) {
  std::set<std::string> out;
  for (const auto& d : h.all_devices()) {
    if (h.registry.trace_cal_read(d, h.generated_at) == nullptr) out.insert(d);
  }
  return out;
}

}  // namespace

TEST_CASE("sign then verify round-trips for random messages") {
  Rng rng(101);
  for (int i = 0; i < 300; ++i) {
    KeyPair k = random_key(rng);
    Bytes msg = random_bytes(rng, 1 + pick(rng, 600));
    Signature sig = sign(msg, k);
    CHECK(verify(msg, sig, k.public_key()));
    CHECK(oracle::ed25519_over_sha256(std::string(msg.begin(), msg.end()), sig, k.public_key()));
    CHECK(sig.signer_key_id == k.public_key().key_id());
  }
}

TEST_CASE("forgeries are rejected") {
  Rng rng(202);
  int rejected = 0;
  for (int i = 0; i < 1000; ++i) {
    KeyPair k = random_key(rng);
    Bytes msg = random_bytes(rng, 1 + pick(rng, 200));
    Signature sig = sign(msg, k);
    Bytes m = msg;
    Signature s = sig;
    PublicKey pk = k.public_key();
    switch (i % 5) {
      case 0: m[pick(rng, m.size())] ^= static_cast<std::uint8_t>(1u << pick(rng, 8)); break;
      case 1: s.bytes[pick(rng, s.bytes.size())] ^= static_cast<std::uint8_t>(1u << pick(rng, 8)); break;
      case 2: pk = random_key(rng).public_key(); break;
      case 3: s.signer_key_id = random_key(rng).public_key().key_id(); break;
      case 4: s.bytes.resize(pick(rng, 64)); break;
    }
    const bool accepted = verify(m, s, pk);
    CHECK_FALSE(accepted);
    CHECK_FALSE(oracle::ed25519_over_sha256(std::string(m.begin(), m.end()), s, pk));
    rejected += !accepted;
  }
  CHECK(rejected == 1000);
}

TEST_CASE("a signature never verifies under another key") {
  Rng rng(212);
  for (int i = 0; i < 1000; ++i) {
    KeyPair k = random_key(rng);
    KeyPair other = random_key(rng);
    REQUIRE(other.public_key().key_id() != k.public_key().key_id());
    Bytes msg = random_bytes(rng, 1 + pick(rng, 200));
    Signature sig = sign(msg, k);
    CHECK_FALSE(verify(msg, sig, other.public_key()));
  }
}

TEST_CASE("chain of trust holds exactly when every link on the path is intact") {
  Rng rng(303);
  for (int trial = 0; trial < 60; ++trial) {
    INFO("trial " << trial);
    const int n = 2 + static_cast<int>(pick(rng, 14));
    std::vector<KeyPair> keys;
    std::vector<int> parent(n, -1);
    CertificateStore store;
    keys.push_back(random_key(rng));
    CertificateRecord root = make_root_certificate("o0", keys[0]);
    store.emplace("o0", root);
    for (int i = 1; i < n; ++i) {
      keys.push_back(random_key(rng));
      parent[i] = static_cast<int>(pick(rng, i));
      store.emplace("o" + std::to_string(i),
                    issue_certificate("o" + std::to_string(i), SubjectKind::kOrganisation,
                                      keys[i].public_key(), "o" + std::to_string(parent[i]), keys[parent[i]]));
    }
    std::vector<bool> broken(n, false);
    for (int c = static_cast<int>(pick(rng, 3)); c > 0; --c) {
      const int victim = 1 + static_cast<int>(pick(rng, n - 1));
      if (broken[victim]) continue;
      broken[victim] = true;
      store.at("o" + std::to_string(victim)).issuer_signature.bytes[7] ^= 0x10;
    }
    const CertificateRecord& pinned = store.at("o0");
    for (int i = 0; i < n; ++i) {
      bool expected = true;
      for (int a = i; a >= 0; a = parent[a]) expected = expected && !broken[a];
      CHECK(verify_chain_of_trust(store.at("o" + std::to_string(i)), pinned, store) == expected);
      // Never trusted against a root it does not descend from.
      CertificateRecord stranger = make_root_certificate("o0", random_key(rng));
      CHECK_FALSE(verify_chain_of_trust(store.at("o" + std::to_string(i)), stranger, store));
    }
    // Dropping any intact ancestor from the store cuts everything below it.
    const int gone = 1 + static_cast<int>(pick(rng, n - 1));
    CertificateStore pruned = store;
    pruned.erase("o" + std::to_string(gone));
    for (int i = 1; i < n; ++i) {
      if (i == gone) continue;
      bool expected = true;
      for (int a = i; a >= 0; a = parent[a]) expected = expected && !broken[a] && a != gone;
      CHECK(verify_chain_of_trust(store.at("o" + std::to_string(i)), pinned, pruned) == expected);
    }
  }
}

TEST_CASE("reads never change state") {
  Rng rng(404);
  GeneratedHierarchy h = generate_hierarchy(default_spec(60, 4));
  const Hash256 before = h.registry.state_digest();
  auto devices = h.all_devices();
  devices.push_back("ghost");
  for (int i = 0; i < 500; ++i) {
    const std::string& d = pick(rng, devices);
    switch (i % 5) {
      case 0: h.registry.trace_cal_read(d, h.generated_at + static_cast<Timestamp>(pick(rng, 1u << 26))); break;
      case 1: h.registry.get_parent_report(d); break;
      case 2: h.registry.get_org_name(pick(rng, h.org_ids)); break;
      case 3: h.registry.get_technician_organisation(pick(rng, h.technician_ids)); break;
      case 4:
        h.registry.query({std::string(fn::kTraceCalRead), Json{{"device_id", d}}}, h.generated_at);
        break;
    }
  }
  CHECK(h.registry.state_digest() == before);
}

TEST_CASE("tampering invalidates exactly the target and its descendants") {
  Rng rng(505);
  const TamperMode signed_modes[] = {TamperMode::kCorruptParentSig, TamperMode::kCorruptTechSig,
                                     TamperMode::kOrphanParent, TamperMode::kRevoke};
  for (int trial = 0; trial < 40; ++trial) {
    const bool sigs = trial % 4 != 3;
    const std::uint64_t n = 10 + pick(rng, 140);
    GeneratedHierarchy h = generate_hierarchy(default_spec(n, rng(), sigs));
    const auto candidates = with_reports(h);
    const std::string target = pick(rng, candidates);
    const TamperMode mode = sigs ? signed_modes[pick(rng, 4)] : (trial % 2 ? TamperMode::kRevoke
                                                                           : TamperMode::kOrphanParent);
    INFO("trial " << trial << " n=" << n << " target=" << target << " mode=" << tamper_mode_name(mode));

    std::set<std::string> expected = oracle::descendants(h.registry, h.all_devices(), target);
    expected.insert(target);
    auto affected = tamper(h, target, mode);
    CHECK(std::set<std::string>(affected.begin(), affected.end()) == expected);
    CHECK(unreadable(h) == expected);

    oracle::Oracle o(h.registry, h.generated_at);
    for (const auto& d : h.all_devices()) {
      CHECK((h.registry.trace_cal_read(d, h.generated_at) != nullptr) == o.device_valid(d));
    }
  }
}

TEST_CASE("a forged root keeps reads alive but fails the trust write") {
  Rng rng(606);
  for (int trial = 0; trial < 15; ++trial) {
    GeneratedHierarchy h = generate_hierarchy(default_spec(10 + pick(rng, 90), rng()));
    const std::string target = pick(rng, with_reports(h));
    if (target == h.root_device_id) continue;
    std::set<std::string> subtree = oracle::descendants(h.registry, h.all_devices(), target);
    subtree.insert(target);
    tamper(h, target, TamperMode::kFakeRootOrg);
    oracle::Oracle o(h.registry, h.generated_at);
    CallContext ctx{kSender, 1, h.generated_at, "tx"};
    for (const auto& d : h.all_devices()) {
      INFO(d);
      CHECK(h.registry.trace_cal_read(d, h.generated_at) != nullptr);
      const bool rooted = o.rooted_at_nmi(d);
      CHECK(rooted == !subtree.contains(d));
      CHECK(h.registry.trace_cal_write(d, ctx).valid_report == (o.device_valid(d) && rooted));
    }
  }
}

TEST_CASE("integrity levels must step down by exactly one") {
  Rng rng(707);
  fixture::Small s;
  int rejected = 0;
  for (int i = 0; i < 200; ++i) {
    // l2 sits at level 3; anything but 4 below it is refused.
    int level = static_cast<int>(pick(rng, 10)) - 2;
    if (level == 4) level = 3;
    CalibrationReport r = s.make("p" + std::to_string(i), "l2", level, "tech-1");
    try {
      s.reg.create_report(r, kNow);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kLevelViolation);
      ++rejected;
    }
  }
  CHECK(rejected == 200);
  CHECK_NOTHROW(s.reg.create_report(s.make("ok", "l2", 4, "tech-1"), kNow));
}

namespace {

/// Random mix of contract calls against a generated hierarchy, including
/// many that must revert.
std::vector<ContractCall> random_calls(Rng& rng, const GeneratedHierarchy& h, int count) {
  std::vector<ContractCall> calls;
  auto devices = h.all_devices();
  std::vector<std::string> reports;
  for (const auto& [id, r] : h.registry.reports()) reports.push_back(id);
  std::vector<std::string> revokers = h.org_ids;
  revokers.push_back(h.registry.nmi_org_id());
  for (int i = 0; i < count; ++i) {
    switch (pick(rng, 4)) {
      case 0: {
        std::string d = pick(rng, 10) == 0 ? "ghost" : pick(rng, devices);
        calls.push_back({std::string(fn::kTraceCalWrite), Json{{"device_id", d}}});
        break;
      }
      case 1:
        calls.push_back({std::string(fn::kRevokeReport),
                         Json{{"report_id", pick(rng, reports)}, {"revoker_id", pick(rng, revokers)}}});
        break;
      default: {
        // Recalibrate a non-root device under some device one level up.
        std::size_t level = 1 + pick(rng, h.device_levels.size() - 1);
        const std::string& device = pick(rng, h.device_levels[level]);
        const std::string& parent = pick(rng, h.device_levels[level - 1]);
        const std::string& tech = pick(rng, h.technician_ids);
        CalibrationReport r;
        r.report_id = "op-" + std::to_string(i);
        r.device_id = device;
        r.parent_device_id = parent;
        r.technician_id = tech;
        r.issued_at = h.generated_at;
        r.valid_until = h.generated_at + 1000;
        r.operating_range = {0, 1, "V"};
        r.device_public_key = h.escrow.at(device).public_key();
        r.integrity_level = static_cast<int>(level) + 1 + (pick(rng, 4) == 0 ? 1 : 0);
        sign_report(r, h.escrow.at(parent), h.escrow.at(tech));
        calls.push_back({std::string(fn::kCreateReport), Json{{"report", to_json(r)}}});
        break;
      }
    }
  }
  return calls;
}

}  // namespace

TEST_CASE("ledger execution matches direct execution on the model") {
  Rng rng(808);
  for (int trial = 0; trial < 6; ++trial) {
    INFO("trial " << trial);
    GeneratedHierarchy h = generate_hierarchy(default_spec(20 + pick(rng, 60), rng()));
    FixedClock clock(h.generated_at);
    LedgerConfig cfg;
    cfg.difficulty_bits = 2;
    GenesisParams genesis{h.registry.nmi_org_id(), *h.registry.get_org_name(h.registry.nmi_org_id()),
                          h.registry.root_certificate()};
    Ledger ledger(cfg, genesis, clock);
    for (const auto& call : bundle_calls(export_bundle(h))) ledger.submit_transaction(call, kSender);
    while (ledger.mempool_size() > 0) ledger.commit_pending();
    REQUIRE(ledger.state().state_digest() == h.registry.state_digest());

    Registry model = h.registry;
    std::vector<bool> model_reverted;
    for (const auto& call : random_calls(rng, h, 120)) {
      ledger.submit_transaction(call, kSender);
      try {
        model.execute(call, CallContext{kSender, 0, h.generated_at, "model"});
        model_reverted.push_back(false);
      } catch (const Error&) {
        model_reverted.push_back(true);
      }
    }
    const std::uint64_t first_new = ledger.height() + 1;
    while (ledger.mempool_size() > 0) ledger.commit_pending();

    std::vector<bool> ledger_reverted;
    for (const auto& b : ledger.blocks()) {
      if (b.index < first_new) continue;
      for (const auto& tx : b.transactions) ledger_reverted.push_back(tx.status == TxStatus::kReverted);
    }
    CHECK(ledger_reverted == model_reverted);
    CHECK(ledger.state().reports() == model.reports());
    for (const auto& d : h.all_devices()) {
      const TraceRecord* a = ledger.state().find_trace(d);
      const TraceRecord* b = model.find_trace(d);
      REQUIRE((a == nullptr) == (b == nullptr));
      if (a) CHECK(a->valid_report == b->valid_report);
    }
  }
}

TEST_CASE("replaying a persisted chain reproduces state") {
  Rng rng(909);
  for (int trial = 0; trial < 4; ++trial) {
    TempDir dir;
    GeneratedHierarchy h = generate_hierarchy(default_spec(20 + pick(rng, 40), rng()));
    FixedClock clock(h.generated_at);
    LedgerConfig cfg;
    cfg.difficulty_bits = 3;
    GenesisParams genesis{h.registry.nmi_org_id(), *h.registry.get_org_name(h.registry.nmi_org_id()),
                          h.registry.root_certificate()};
    auto ledger = Ledger::create(dir / "c.jsonl", cfg, genesis, clock);
    for (const auto& call : bundle_calls(export_bundle(h))) ledger->submit_transaction(call, kSender);
    for (const auto& call : random_calls(rng, h, 40)) ledger->submit_transaction(call, kSender);
    while (ledger->mempool_size() > 5) ledger->commit_pending();
    const Hash256 digest = ledger->state().state_digest();
    const auto blocks = ledger->blocks();
    const auto pending = ledger->mempool();

    auto reopened = Ledger::open(dir / "c.jsonl", clock);
    CHECK(reopened->state().state_digest() == digest);
    CHECK(reopened->blocks() == blocks);
    CHECK(reopened->mempool() == pending);
    auto again = Ledger::open(dir / "c.jsonl", clock);
    CHECK(again->state().state_digest() == digest);
  }
}
