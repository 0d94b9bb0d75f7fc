#include "caltrace/cli.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>

#include "CLI11.hpp"
#include "caltrace/bench.hpp"
#include "caltrace/clock.hpp"
#include "caltrace/economics.hpp"
#include "caltrace/error.hpp"
#include "caltrace/hierarchy.hpp"
#include "caltrace/ledger.hpp"

namespace caltrace::cli {

namespace {

namespace fs = std::filesystem;

enum class OutputFormat { kText, kJson, kCsv };

struct CliConfig {
  std::string chain_path = "caltrace-chain.jsonl";
  std::string output = "text";
  std::string clock_mode = "real";
  std::optional<std::string> seed;

  OutputFormat format() const {
    if (output == "json") return OutputFormat::kJson;
    if (output == "csv") return OutputFormat::kCsv;
    return OutputFormat::kText;
  }
};

class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Holds an exclusive advisory lock on `<chain>.lock` for the process lifetime
/// of a mutating command.
class FileLock {
 public:
  explicit FileLock(const fs::path& chain) {
    std::string path = chain.string() + ".lock";
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) throw Error(ErrorCode::kIo, "cannot open lock file " + path);
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw Error(ErrorCode::kIo, "cannot lock " + path);
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

std::unique_ptr<Clock> make_clock(const std::string& mode) {
  if (mode == "real") return std::make_unique<SystemClock>();
  if (mode.rfind("fixed:", 0) == 0) {
    std::string ts = mode.substr(6);
    if (!ts.empty() && std::all_of(ts.begin(), ts.end(), [](char c) { return std::isdigit(c); })) {
      return std::make_unique<FixedClock>(std::stoll(ts));
    }
    return std::make_unique<FixedClock>(parse_iso8601(ts));
  }
  throw UsageError("--clock must be 'real' or 'fixed:<seconds|ISO-8601>'");
}

struct KeyFile {
  std::string id;
  SubjectKind kind = SubjectKind::kDevice;
  KeyPair key;
};

KeyPair make_key(const std::optional<std::string>& seed, const std::string& id) {
  if (!seed) return generate_keypair();
  return KeyPair::from_seed32(sha256("caltrace-cli:" + *seed + ":" + id));
}

void save_key_file(const fs::path& path, const KeyFile& kf) {
  Json j{{"id", kf.id},
         {"kind", subject_kind_name(kf.kind)},
         {"public_key", kf.key.public_key().hex()},
         {"scheme", kSignatureScheme},
         {"seed", to_hex(kf.key.seed())}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write key file " + path.string());
  out << j.dump(2) << "\n";
  out.close();
  fs::permissions(path, fs::perms::owner_read | fs::perms::owner_write, fs::perm_options::replace);
}

KeyFile load_key_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read key file " + path.string());
  Json j = Json::parse(in);
  KeyFile kf{j.at("id").get<std::string>(), parse_subject_kind(j.at("kind").get<std::string>()),
             KeyPair::from_seed32(from_hex(j.at("seed").get<std::string>()))};
  if (kf.key.public_key().hex() != j.at("public_key").get<std::string>()) {
    throw Error(ErrorCode::kParse, "key file public key does not match its seed: " + path.string());
  }
  return kf;
}

KeyFile key_for(const std::string& existing, const std::string& out_path,
                const std::optional<std::string>& seed, const std::string& id, SubjectKind kind) {
  if (!existing.empty()) {
    KeyFile kf = load_key_file(existing);
    if (kf.id != id) throw UsageError("key file " + existing + " belongs to " + kf.id);
    return kf;
  }
  KeyFile kf{id, kind, make_key(seed, id)};
  if (!out_path.empty()) save_key_file(out_path, kf);
  return kf;
}

void check_sender(const std::string& sender) {
  static const std::regex kAddress("^0x[0-9a-f]{40}$");
  if (!std::regex_match(sender, kAddress)) {
    throw UsageError("sender must be an address of the form 0x + 40 lowercase hex digits");
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput:
    case ErrorCode::kInvalidSeed:
    case ErrorCode::kParse:
    case ErrorCode::kUnknownCall:
    case ErrorCode::kOversizedTransaction:
    case ErrorCode::kEmptyMempool:
      return kExitUsage;
    case ErrorCode::kInvalidBlock:
    case ErrorCode::kInvalidPow:
    case ErrorCode::kForkRejected:
    case ErrorCode::kMiningTimeout:
    case ErrorCode::kIo:
      return kExitIntegrity;
    default:
      return kExitInvalid;
  }
}

class App {
 public:
  App(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(const std::vector<std::string>& args);

 private:
  void emit(const Json& doc, const std::string& text) {
    if (config_.format() == OutputFormat::kJson) {
      out_ << doc.dump(2) << "\n";
    } else {
      out_ << text;
      if (!text.empty() && text.back() != '\n') out_ << "\n";
    }
  }

  fs::path chain_path() const {
    fs::path p(config_.chain_path);
    fs::path parent = p.has_parent_path() ? p.parent_path() : fs::path(".");
    if (!fs::is_directory(parent)) {
      throw UsageError("chain directory does not exist: " + parent.string());
    }
    return p;
  }

  std::unique_ptr<Ledger> open_ledger() const {
    fs::path p = chain_path();
    if (!fs::exists(p)) throw UsageError("no chain at " + p.string() + "; run `caltrace init` first");
    return Ledger::open(p, *clock_);
  }

  /// Dry-runs, queues and optionally mines one contract call.
  int submit(const ContractCall& call, const std::string& sender, bool mine) {
    check_sender(sender);
    FileLock lock(chain_path());
    auto ledger = open_ledger();
    Json preview;
    try {
      preview = ledger->dry_run(call, sender);
    } catch (const Error& e) {
      emit(Json{{"error", error_code_name(e.code())}, {"message", e.what()}, {"queued", false}},
           std::string("REJECTED ") + std::string(error_code_name(e.code())) + ": " + e.what());
      return exit_code_for(e.code());
    }
    Hash256 tx_id = ledger->submit_transaction(call, sender);
    Json doc{{"function", call.function}, {"queued", true}, {"tx_id", to_hex(tx_id)}};
    std::string text = "queued " + call.function + " tx " + to_hex(tx_id) + "\n";
    if (mine) {
      Json mined = mine_all(*ledger);
      doc["mined"] = mined;
      for (const auto& b : mined) {
        text += "mined block " + std::to_string(b["index"].get<std::uint64_t>()) + " " +
                b["block_hash"].get<std::string>() + "\n";
      }
      for (const auto& b : ledger->blocks()) {
        for (const auto& tx : b.transactions) {
          if (tx.tx_id == tx_id && tx.status == TxStatus::kReverted) {
            doc["reverted"] = tx.error;
            text += "transaction reverted: " + tx.error + "\n";
          }
        }
      }
    }
    emit(doc, text);
    return kExitOk;
  }

  Json mine_all(Ledger& ledger) {
    Json mined = Json::array();
    while (ledger.mempool_size() > 0) {
      std::uint64_t h = ledger.commit_pending();
      const Block& b = ledger.head();
      mined.push_back({{"block_hash", to_hex(b.block_hash)},
                       {"gas_used", b.gas_used},
                       {"index", h},
                       {"transactions", b.transactions.size()}});
    }
    return mined;
  }

  void add_commands(CLI::App& app);

  std::ostream& out_;
  std::ostream& err_;
  CliConfig config_;
  std::unique_ptr<Clock> clock_;
  std::function<int()> action_;
};

void App::add_commands(CLI::App& app) {
  // init
  {
    auto* cmd = app.add_subcommand("init", "Create a chain whose genesis pins the NMI root");
    auto nmi_id = std::make_shared<std::string>("NPL");
    auto nmi_name = std::make_shared<std::string>("National Physical Laboratory");
    auto key_out = std::make_shared<std::string>();
    auto key_in = std::make_shared<std::string>();
    auto difficulty = std::make_shared<int>(12);
    auto gas_limit = std::make_shared<std::uint64_t>(8'000'000);
    auto interval = std::make_shared<std::int64_t>(15);
    auto strict = std::make_shared<bool>(false);
    cmd->add_option("--nmi-id", *nmi_id, "NMI organisation id");
    cmd->add_option("--nmi-name", *nmi_name, "NMI organisation name");
    cmd->add_option("--key-out", *key_out, "Write the generated NMI key here");
    cmd->add_option("--key", *key_in, "Use an existing NMI key file");
    cmd->add_option("--difficulty-bits", *difficulty, "Proof-of-work leading zero bits");
    cmd->add_option("--block-gas-limit", *gas_limit, "Block gas limit");
    cmd->add_option("--block-interval", *interval, "Target block interval in seconds");
    cmd->add_flag("--strict-alg1", *strict, "Reuse the leaf technician for every ancestor");
    cmd->callback([=, this] {
      action_ = [=, this] {
        if (key_in->empty() && key_out->empty()) throw UsageError("init needs --key-out or --key");
        FileLock lock(chain_path());
        KeyFile nmi = key_for(*key_in, *key_out, config_.seed, *nmi_id, SubjectKind::kOrganisation);
        LedgerConfig cfg;
        cfg.difficulty_bits = *difficulty;
        cfg.block_gas_limit = *gas_limit;
        cfg.target_block_interval = *interval;
        cfg.contract.strict_alg1 = *strict;
        GenesisParams genesis{*nmi_id, *nmi_name, make_root_certificate(*nmi_id, nmi.key)};
        auto ledger = Ledger::create(chain_path(), cfg, genesis, *clock_);
        const Block& g = ledger->head();
        emit(Json{{"chain", config_.chain_path},
                  {"genesis_hash", to_hex(g.block_hash)},
                  {"nmi_org_id", *nmi_id}},
             "initialised " + config_.chain_path + " genesis " + to_hex(g.block_hash));
        return int(kExitOk);
      };
    });
  }

  // keygen
  {
    auto* cmd = app.add_subcommand("keygen", "Generate a key file");
    auto id = std::make_shared<std::string>();
    auto kind = std::make_shared<std::string>("device");
    auto out = std::make_shared<std::string>();
    cmd->add_option("--id", *id, "Entity id")->required();
    cmd->add_option("--kind", *kind, "organisation|technician|device");
    cmd->add_option("--out", *out, "Key file path")->required();
    cmd->callback([=, this] {
      action_ = [=, this] {
        KeyFile kf{*id, parse_subject_kind(*kind), make_key(config_.seed, *id)};
        save_key_file(*out, kf);
        emit(Json{{"address", kf.key.public_key().address()},
                  {"id", *id},
                  {"public_key", kf.key.public_key().hex()}},
             *id + " " + kf.key.public_key().address());
        return int(kExitOk);
      };
    });
  }

  // org create
  {
    auto* org = app.add_subcommand("org", "Organisation commands");
    org->require_subcommand(1);
    auto* cmd = org->add_subcommand("create", "Certify and register an organisation");
    auto id = std::make_shared<std::string>();
    auto name = std::make_shared<std::string>();
    auto level = std::make_shared<int>(1);
    auto issuer = std::make_shared<std::string>();
    auto key_out = std::make_shared<std::string>();
    auto key_in = std::make_shared<std::string>();
    auto mine = std::make_shared<bool>(false);
    cmd->add_option("--id", *id)->required();
    cmd->add_option("--name", *name)->required();
    cmd->add_option("--level", *level, "Integrity level (>= 1)");
    cmd->add_option("--issuer-key", *issuer, "Key file of the certifying organisation")->required();
    cmd->add_option("--key-out", *key_out);
    cmd->add_option("--key", *key_in);
    cmd->add_flag("--mine", *mine, "Mine pending transactions immediately");
    cmd->callback([=, this] {
      action_ = [=, this] {
        KeyFile issuer_key = load_key_file(*issuer);
        KeyFile kf = key_for(*key_in, *key_out, config_.seed, *id, SubjectKind::kOrganisation);
        CertificateRecord cert = issue_certificate(*id, SubjectKind::kOrganisation,
                                                   kf.key.public_key(), issuer_key.id, issuer_key.key);
        ContractCall call{std::string(fn::kCreateOrganisation),
                          Json{{"certificate", to_json(cert)},
                               {"integrity_level", *level},
                               {"name", *name},
                               {"org_id", *id}}};
        return submit(call, issuer_key.key.public_key().address(), *mine);
      };
    });
  }

  // tech create
  {
    auto* tech = app.add_subcommand("tech", "Technician commands");
    tech->require_subcommand(1);
    auto* cmd = tech->add_subcommand("create", "Certify and register a technician");
    auto id = std::make_shared<std::string>();
    auto org_key = std::make_shared<std::string>();
    auto address = std::make_shared<std::string>();
    auto key_out = std::make_shared<std::string>();
    auto key_in = std::make_shared<std::string>();
    auto mine = std::make_shared<bool>(false);
    cmd->add_option("--id", *id)->required();
    cmd->add_option("--org-key", *org_key, "Key file of the certifying organisation")->required();
    cmd->add_option("--address", *address, "Account address (defaults to the key's address)");
    cmd->add_option("--key-out", *key_out);
    cmd->add_option("--key", *key_in);
    cmd->add_flag("--mine", *mine);
    cmd->callback([=, this] {
      action_ = [=, this] {
        KeyFile org = load_key_file(*org_key);
        KeyFile kf = key_for(*key_in, *key_out, config_.seed, *id, SubjectKind::kTechnician);
        CertificateRecord cert =
            issue_certificate(*id, SubjectKind::kTechnician, kf.key.public_key(), org.id, org.key);
        std::string addr = address->empty() ? kf.key.public_key().address() : *address;
        check_sender(addr);
        ContractCall call{std::string(fn::kCreateTechnician),
                          Json{{"account_address", addr},
                               {"certificate", to_json(cert)},
                               {"org_id", org.id},
                               {"tech_id", *id}}};
        return submit(call, org.key.public_key().address(), *mine);
      };
    });
  }

  // report create / revoke
  {
    auto* report = app.add_subcommand("report", "Calibration report commands");
    report->require_subcommand(1);

    auto* create = report->add_subcommand("create", "Sign and register a calibration report");
    auto report_id = std::make_shared<std::string>();
    auto device = std::make_shared<std::string>();
    auto tech_key = std::make_shared<std::string>();
    auto parent_key = std::make_shared<std::string>();
    auto device_key = std::make_shared<std::string>();
    auto device_key_out = std::make_shared<std::string>();
    auto level = std::make_shared<int>(0);
    auto range_min = std::make_shared<double>(0.0);
    auto range_max = std::make_shared<double>(100.0);
    auto unit = std::make_shared<std::string>("degC");
    auto mu = std::make_shared<double>(0.01);
    auto valid_days = std::make_shared<int>(365);
    auto issued = std::make_shared<std::string>();
    auto mine = std::make_shared<bool>(false);
    create->add_option("--report-id", *report_id)->required();
    create->add_option("--device", *device)->required();
    create->add_option("--tech-key", *tech_key, "Technician key file")->required();
    create->add_option("--parent-key", *parent_key, "Parent device key file (omit for a root)");
    create->add_option("--device-key", *device_key, "Existing device key file");
    create->add_option("--device-key-out", *device_key_out, "Write a new device key here");
    create->add_option("--level", *level, "Integrity level (default: parent's + 1)");
    create->add_option("--range-min", *range_min);
    create->add_option("--range-max", *range_max);
    create->add_option("--unit", *unit);
    create->add_option("--mu", *mu, "Measurement uncertainty");
    create->add_option("--valid-days", *valid_days);
    create->add_option("--issued-at", *issued, "ISO-8601 (default: now)");
    create->add_flag("--mine", *mine);
    create->callback([=, this] {
      action_ = [=, this] {
        KeyFile tech = load_key_file(*tech_key);
        KeyFile dev = key_for(*device_key, *device_key_out, config_.seed, *device, SubjectKind::kDevice);
        std::optional<KeyFile> parent;
        if (!parent_key->empty()) parent = load_key_file(*parent_key);

        CalibrationReport r;
        r.report_id = *report_id;
        r.device_id = *device;
        r.parent_device_id = parent ? parent->id : "";
        r.technician_id = tech.id;
        r.issued_at = issued->empty() ? clock_->now() : parse_iso8601(*issued);
        r.valid_until = r.issued_at + static_cast<Timestamp>(*valid_days) * 86400;
        r.operating_range = {*range_min, *range_max, *unit};
        r.measurement_uncertainty = *mu;
        r.device_public_key = dev.key.public_key();
        r.integrity_level = *level;
        if (r.integrity_level == 0) {
          r.integrity_level = 1;
          if (parent) {
            auto ledger = open_ledger();
            if (const auto* pr = ledger->state().current_report(parent->id)) {
              r.integrity_level = pr->integrity_level + 1;
            }
          }
        }
        sign_report(r, parent ? parent->key : dev.key, tech.key);
        ContractCall call{std::string(fn::kCreateReport), Json{{"report", to_json(r)}}};
        return submit(call, tech.key.public_key().address(), *mine);
      };
    });

    auto* revoke = report->add_subcommand("revoke", "Revoke a calibration report");
    auto rid = std::make_shared<std::string>();
    auto revoker = std::make_shared<std::string>();
    auto sender = std::make_shared<std::string>();
    auto rmine = std::make_shared<bool>(false);
    revoke->add_option("--report", *rid)->required();
    revoke->add_option("--revoker", *revoker, "Revoking organisation id")->required();
    revoke->add_option("--sender", *sender, "Sender address")->required();
    revoke->add_flag("--mine", *rmine);
    revoke->callback([=, this] {
      action_ = [=, this] {
        ContractCall call{std::string(fn::kRevokeReport),
                          Json{{"report_id", *rid}, {"revoker_id", *revoker}}};
        return submit(call, *sender, *rmine);
      };
    });
  }

  // trace read / write
  {
    auto* trace = app.add_subcommand("trace", "Trace verification");
    trace->require_subcommand(1);
    auto* read = trace->add_subcommand("read", "Verify a device's trace to the root (free, anonymous)");
    auto device = std::make_shared<std::string>();
    read->add_option("device", *device)->required();
    read->callback([=, this] {
      action_ = [=, this] {
        auto ledger = open_ledger();
        Json root = ledger->read_state({std::string(fn::kTraceCalRead), Json{{"device_id", *device}}});
        if (root.is_null()) {
          emit(Json{{"device_id", *device}, {"valid", false}}, "INVALID");
          return int(kExitInvalid);
        }
        emit(Json{{"device_id", *device}, {"root_report", root}, {"valid", true}}, root.dump(2));
        return int(kExitOk);
      };
    });

    auto* write = trace->add_subcommand("write", "Persist a trace verification result (gas-charged)");
    auto wdevice = std::make_shared<std::string>();
    auto sender = std::make_shared<std::string>();
    auto mine = std::make_shared<bool>(false);
    write->add_option("device", *wdevice)->required();
    write->add_option("--sender", *sender, "Sender address")->required();
    write->add_flag("--mine", *mine);
    write->callback([=, this] {
      action_ = [=, this] {
        ContractCall call{std::string(fn::kTraceCalWrite), Json{{"device_id", *wdevice}}};
        return submit(call, *sender, *mine);
      };
    });
  }

  // query
  {
    auto* query = app.add_subcommand("query", "Free read-only contract queries");
    query->require_subcommand(1);
    auto add = [&](const char* name, std::string_view function, const char* arg, const char* help) {
      auto* cmd = query->add_subcommand(name, help);
      auto value = std::make_shared<std::string>();
      cmd->add_option("id", *value)->required();
      std::string fname(function);
      std::string aname(arg);
      cmd->callback([=, this] {
        action_ = [=, this] {
          auto ledger = open_ledger();
          Json result = ledger->read_state({fname, Json{{aname, *value}}});
          emit(Json{{"function", fname}, {"result", result}},
               result.is_string() ? result.get<std::string>() : result.dump(2));
          return int(result.is_null() ? kExitInvalid : kExitOk);
        };
      });
    };
    add("org-name", fn::kGetOrgName, "org_id", "Name of an organisation");
    add("tech-org", fn::kGetTechnicianOrganisation, "tech_id", "Certifying organisation of a technician");
    add("parent-report", fn::kGetParentReport, "device_id", "Direct parent's current report");
    add("trace-record", fn::kGetTrace, "device_id", "Last persisted trace result");
  }

  // mine
  {
    auto* cmd = app.add_subcommand("mine", "Assemble, mine and append all pending transactions");
    cmd->callback([=, this] {
      action_ = [=, this] {
        FileLock lock(chain_path());
        auto ledger = open_ledger();
        if (ledger->mempool_size() == 0) {
          emit(Json{{"mined", Json::array()}}, "nothing to mine");
          return int(kExitOk);
        }
        Json mined = mine_all(*ledger);
        std::string text;
        for (const auto& b : mined) {
          text += "block " + std::to_string(b["index"].get<std::uint64_t>()) + " " +
                  b["block_hash"].get<std::string>() + " txs=" +
                  std::to_string(b["transactions"].get<std::size_t>()) +
                  " gas=" + std::to_string(b["gas_used"].get<std::uint64_t>()) + "\n";
        }
        emit(Json{{"mined", mined}}, text);
        return int(kExitOk);
      };
    });
  }

  // chain validate / info
  {
    auto* chain = app.add_subcommand("chain", "Chain inspection");
    chain->require_subcommand(1);
    auto* validate = chain->add_subcommand("validate", "Re-verify every block from the persisted bytes");
    validate->callback([=, this] {
      action_ = [=, this] {
        ChainValidation v = validate_chain_file(chain_path());
        Json doc{{"valid", v.valid}, {"reason", v.reason}};
        doc["first_bad_index"] = v.first_bad_index ? Json(*v.first_bad_index) : Json(nullptr);
        if (v.valid) {
          emit(doc, "VALID");
          return int(kExitOk);
        }
        emit(doc, "INVALID at block " +
                      (v.first_bad_index ? std::to_string(*v.first_bad_index) : std::string("?")) +
                      ": " + v.reason);
        return int(kExitIntegrity);
      };
    });
    auto* info = chain->add_subcommand("info", "Height, head hash and pending transactions");
    info->callback([=, this] {
      action_ = [=, this] {
        auto ledger = open_ledger();
        const Block& head = ledger->head();
        Json doc{{"config", to_json(ledger->config())},
                 {"head_hash", to_hex(head.block_hash)},
                 {"height", ledger->height()},
                 {"pending", ledger->mempool_size()},
                 {"state_digest", to_hex(ledger->state().state_digest())}};
        emit(doc, "height " + std::to_string(ledger->height()) + "\nhead " +
                      to_hex(head.block_hash) + "\npending " +
                      std::to_string(ledger->mempool_size()) + "\n");
        return int(kExitOk);
      };
    });
  }

  // hierarchy generate
  {
    auto* hierarchy = app.add_subcommand("hierarchy", "Synthetic calibration hierarchies");
    hierarchy->require_subcommand(1);
    auto* gen = hierarchy->add_subcommand("generate", "Generate a deterministic hierarchy bundle");
    auto spec_file = std::make_shared<std::string>();
    auto n = std::make_shared<std::uint64_t>(100);
    auto levels = std::make_shared<int>(0);
    auto orgs = std::make_shared<int>(0);
    auto gseed = std::make_shared<std::uint64_t>(0);
    auto unsigned_ = std::make_shared<bool>(false);
    auto literal = std::make_shared<bool>(false);
    auto out = std::make_shared<std::string>();
    auto escrow_out = std::make_shared<std::string>();
    auto commit = std::make_shared<bool>(false);
    auto difficulty = std::make_shared<int>(12);
    gen->add_option("--spec", *spec_file, "JSON spec file");
    gen->add_option("--n", *n, "Field devices");
    gen->add_option("--levels", *levels, "Levels (default: derived from n)");
    gen->add_option("--orgs", *orgs, "Organisations (default: derived from n)");
    gen->add_option("--gen-seed", *gseed, "Generator seed");
    gen->add_flag("--no-signatures", *unsigned_);
    gen->add_flag("--literal-log2", *literal, "Derive organisations as round(log2(n-1))");
    gen->add_option("--out", *out, "Write the JSON bundle here");
    gen->add_option("--escrow-out", *escrow_out, "Write generated private keys here (test use)");
    gen->add_flag("--commit", *commit, "Replay the bundle onto the chain and mine it");
    gen->add_option("--difficulty-bits", *difficulty, "Difficulty when --commit creates the chain");
    gen->callback([=, this] {
      action_ = [=, this] {
        HierarchySpec spec;
        if (!spec_file->empty()) {
          std::ifstream in(*spec_file);
          if (!in) throw Error(ErrorCode::kIo, "cannot read spec " + *spec_file);
          spec = hierarchy_spec_from_json(Json::parse(in));
        } else {
          spec = default_spec(*n, *gseed, !*unsigned_,
                              *literal ? OrgFormula::kLiteralLog2 : OrgFormula::kFromLevels);
          if (*levels > 0) spec.levels = *levels;
          if (*orgs > 0) spec.n_orgs = *orgs;
        }
        GeneratedHierarchy h = generate_hierarchy(spec, clock_->now());
        Json bundle = export_bundle(h);
        if (!out->empty()) {
          std::ofstream o(*out, std::ios::trunc);
          if (!o) throw Error(ErrorCode::kIo, "cannot write " + *out);
          o << bundle.dump() << "\n";
        }
        if (!escrow_out->empty()) {
          Json keys = Json::object();
          for (const auto& id : h.all_devices()) {
            if (h.escrow.contains(id)) keys[id] = to_hex(h.escrow.at(id).seed());
          }
          for (const auto& id : h.technician_ids) keys[id] = to_hex(h.escrow.at(id).seed());
          for (const auto& id : h.org_ids) keys[id] = to_hex(h.escrow.at(id).seed());
          std::ofstream o(*escrow_out, std::ios::trunc);
          o << keys.dump(2) << "\n";
        }
        Json doc{{"digest", to_hex(h.registry.state_digest())},
                 {"devices", h.all_devices().size()},
                 {"leaves", h.leaves().size()},
                 {"spec", to_json(spec)}};
        std::string text = "generated " + std::to_string(h.all_devices().size()) + " devices (" +
                           std::to_string(h.leaves().size()) + " field devices, " +
                           std::to_string(spec.levels) + " levels, " + std::to_string(spec.n_orgs) +
                           " organisations) digest " + to_hex(h.registry.state_digest()) + "\n";
        if (*commit) {
          FileLock lock(chain_path());
          std::unique_ptr<Ledger> ledger;
          if (fs::exists(chain_path())) {
            ledger = open_ledger();
            if (!(ledger->state().root_certificate() == h.registry.root_certificate())) {
              throw UsageError("chain root does not match the generated NMI root");
            }
          } else {
            LedgerConfig cfg;
            cfg.difficulty_bits = *difficulty;
            cfg.contract.verify_signatures = spec.signatures_enabled;
            GenesisParams genesis{h.registry.nmi_org_id(),
                                  *h.registry.get_org_name(h.registry.nmi_org_id()),
                                  h.registry.root_certificate()};
            ledger = Ledger::create(chain_path(), cfg, genesis, *clock_);
          }
          const Registry& reg = h.registry;
          for (const auto& call : bundle_calls(bundle)) {
            std::string sender;
            if (call.function == fn::kCreateOrganisation) {
              sender = reg.root_certificate().public_key.address();
            } else if (call.function == fn::kCreateTechnician) {
              sender = reg.certificates().at(call.args["org_id"].get<std::string>()).public_key.address();
            } else {
              sender = reg.technicians().at(call.args["report"]["technician_id"].get<std::string>())
                           .account_address;
            }
            ledger->submit_transaction(call, sender);
          }
          Json mined = mine_all(*ledger);
          doc["mined_blocks"] = mined.size();
          doc["height"] = ledger->height();
          text += "committed in " + std::to_string(mined.size()) + " blocks, height " +
                  std::to_string(ledger->height()) + "\n";
        }
        emit(doc, text);
        return int(kExitOk);
      };
    });
  }

  // bench
  {
    auto* bench = app.add_subcommand("bench", "Trace verification scaling benchmarks");
    bench->require_subcommand(1);
    auto trials = std::make_shared<int>(30);
    auto sigs = std::make_shared<std::string>("both");
    auto format = std::make_shared<std::string>("csv");
    auto out = std::make_shared<std::string>();
    auto bseed = std::make_shared<std::uint64_t>(0);
    auto n_list = std::make_shared<std::string>("10,100,1000,10000");
    auto levels_list = std::make_shared<std::string>("5,10,15,20,25,30,35,40,45,50");
    for (const char* name : {"devices", "levels"}) {
      const bool devices = std::string_view(name) == "devices";
      auto* cmd = bench->add_subcommand(name, devices ? "Execution time vs number of field devices"
                                                      : "Execution time vs hierarchy depth");
      if (devices) {
        cmd->add_option("--n", *n_list, "Comma-separated device counts");
      } else {
        cmd->add_option("--levels", *levels_list, "Comma-separated depths");
      }
      cmd->add_option("--trials", *trials);
      cmd->add_option("--signatures", *sigs, "both|on|off");
      cmd->add_option("--format", *format, "csv|json|plotdata");
      cmd->add_option("--out", *out, "Write results here instead of stdout");
      cmd->add_option("--bench-seed", *bseed);
      cmd->callback([=, this] {
        action_ = [=, this] {
          BenchOptions opts;
          opts.trials = *trials;
          opts.seed = *bseed;
          opts.progress = [this](const std::string& msg) { err_ << msg << "\n"; };
          SignatureMode mode = parse_signature_mode(*sigs);
          std::vector<BenchRecord> records;
          if (devices) {
            std::vector<std::uint64_t> ns;
            for (auto& s : split_list(*n_list)) ns.push_back(std::stoull(s));
            records = run_device_scaling(ns, mode, opts);
          } else {
            std::vector<int> ls;
            for (auto& s : split_list(*levels_list)) ls.push_back(std::stoi(s));
            records = run_level_scaling(ls, mode, opts);
          }
          ResultFormat rf = parse_result_format(*format);
          if (out->empty()) {
            out_ << render_results(records, rf);
          } else {
            emit_results(records, rf, *out);
          }
          InvariantCheck check = check_invariants(records);
          for (const auto& note : check.notes) err_ << note << "\n";
          for (const auto& f : check.failures) err_ << "invariant failed: " << f << "\n";
          return int(check.ok ? kExitOk : kExitInvalid);
        };
      });
    }
  }

  // econ
  {
    auto* cmd = app.add_subcommand("econ", "Throughput of persisted trace writes");
    auto p = std::make_shared<EconParams>(EconParams::published());
    auto override_gas = std::make_shared<std::uint64_t>(4'000'000);
    auto no_override = std::make_shared<bool>(false);
    cmd->add_option("--write-gas", p->write_gas);
    cmd->add_option("--block-gas-limit", p->block_gas_limit);
    cmd->add_option("--block-interval", p->block_interval_s);
    cmd->add_option("--checks-per-day", p->checks_per_device_per_day);
    cmd->add_option("--daily-gas", *override_gas, "Daily gas per device override");
    cmd->add_flag("--no-override", *no_override, "Compute daily gas as write gas x checks per day");
    cmd->callback([=, this] {
      action_ = [=, this] {
        EconParams params = *p;
        params.daily_gas_per_device_override =
            *no_override ? std::nullopt : std::optional<std::uint64_t>(*override_gas);
        EconReport report = evaluate(params);
        if (config_.format() == OutputFormat::kCsv) {
          out_ << format_csv(report);
        } else {
          emit(to_json(report), format_text(report));
        }
        return int(kExitOk);
      };
    });
  }
}

int App::run(const std::vector<std::string>& args) {
  CLI::App app{"caltrace: tamper-evident calibration traceability ledger"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--chain", config_.chain_path, "Chain file")->envname("CALTRACE_CHAIN");
  app.add_option("--output", config_.output, "text|json|csv")
      ->check(CLI::IsMember({"text", "json", "csv"}));
  app.add_option("--clock", config_.clock_mode, "real | fixed:<seconds|ISO-8601>");
  app.add_option("--seed", config_.seed, "Derive all generated keys from this seed");
  add_commands(app);

  std::vector<std::string> storage{"caltrace"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out_ << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out_ << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err_ << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    clock_ = make_clock(config_.clock_mode);
    if (!action_) {
      err_ << "usage error: no command\n";
      return kExitUsage;
    }
    return action_();
  } catch (const UsageError& e) {
    err_ << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err_ << "error (" << error_code_name(e.code()) << "): " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const Json::exception& e) {
    err_ << "error: malformed JSON input: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err_ << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::out_of_range& e) {
    err_ << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  App app(out, err);
  return app.run(args);
}

}  // namespace caltrace::cli
