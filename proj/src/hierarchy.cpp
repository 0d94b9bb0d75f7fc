#include "caltrace/hierarchy.hpp"

#include <cmath>
#include <optional>
#include <random>

#include "caltrace/error.hpp"

namespace caltrace {

void HierarchySpec::validate() const {
  if (n_devices < 1 || levels < 1 || n_orgs < 1) {
    throw Error(ErrorCode::kInvalidInput, "hierarchy spec needs n_devices, levels, n_orgs >= 1");
  }
}

Json to_json(const HierarchySpec& s) {
  return Json{{"levels", s.levels},
              {"n_devices", s.n_devices},
              {"n_orgs", s.n_orgs},
              {"seed", s.seed},
              {"signatures_enabled", s.signatures_enabled}};
}

HierarchySpec hierarchy_spec_from_json(const Json& j) {
  HierarchySpec s;
  s.n_devices = j.at("n_devices").get<std::uint64_t>();
  s.levels = j.contains("levels") ? j["levels"].get<int>() : derive_levels(s.n_devices);
  s.n_orgs = j.contains("n_orgs") ? j["n_orgs"].get<int>() : derive_orgs(s.n_devices);
  s.seed = j.value("seed", std::uint64_t{0});
  s.signatures_enabled = j.value("signatures_enabled", true);
  s.validate();
  return s;
}

int derive_levels(std::uint64_t n) {
  int levels = 0;
  while (n >= 10) {
    n /= 10;
    ++levels;
  }
  return std::max(levels, 1);
}

int derive_orgs(std::uint64_t n, OrgFormula formula) {
  if (formula == OrgFormula::kFromLevels) return 2 * derive_levels(n);
  if (n <= 2) return 1;
  return std::max(1, static_cast<int>(std::lround(std::log2(static_cast<double>(n - 1)))));
}

HierarchySpec default_spec(std::uint64_t n, std::uint64_t seed, bool signatures,
                           OrgFormula formula) {
  HierarchySpec s;
  s.n_devices = n;
  s.levels = derive_levels(n);
  s.n_orgs = derive_orgs(n, formula);
  s.seed = seed;
  s.signatures_enabled = signatures;
  return s;
}

std::uint64_t branching_factor(std::uint64_t n, int levels) {
  return static_cast<std::uint64_t>(
      std::llround(std::pow(static_cast<double>(n), 1.0 / static_cast<double>(levels))));
}

const KeyPair& KeyEscrow::at(const std::string& id) const {
  auto it = keys_.find(id);
  if (it == keys_.end()) throw Error(ErrorCode::kNotFound, "no escrowed key for " + id);
  return it->second;
}

std::vector<std::string> GeneratedHierarchy::all_devices() const {
  std::vector<std::string> out;
  for (const auto& level : device_levels) out.insert(out.end(), level.begin(), level.end());
  return out;
}

void sign_report(CalibrationReport& report, const KeyPair& parent_device_key,
                 const KeyPair& technician_key) {
  Bytes payload = report.signed_payload();
  report.parent_signature = sign(payload, parent_device_key);
  report.technician_signature = sign(payload, technician_key);
}

namespace {

constexpr std::string_view kNmiId = "NPL";
constexpr std::string_view kNmiName = "National Physical Laboratory";

KeyPair derive_key(std::uint64_t seed, const std::string& id) {
  Hash256 material = sha256("caltrace-hierarchy:" + std::to_string(seed) + ":" + id);
  return KeyPair::from_seed32(material);
}

/// Shared construction steps for both hierarchy shapes.
class Builder {
 public:
  Builder(std::uint64_t seed, bool signatures, Timestamp now)
      : seed_(seed), signatures_(signatures), now_(now), rng_(seed) {}

  GeneratedHierarchy start(const HierarchySpec& spec) {
    KeyPair nmi_key = derive_key(seed_, std::string(kNmiId));
    CertificateRecord root;
    if (signatures_) {
      root = make_root_certificate(std::string(kNmiId), nmi_key);
    } else {
      root.subject_id = std::string(kNmiId);
      root.issuer_id = std::string(kNmiId);
      root.public_key = nmi_key.public_key();
    }
    RegistryConfig config;
    config.verify_signatures = signatures_;
    GeneratedHierarchy h{spec, Registry(std::string(kNmiId), std::string(kNmiName), root, config),
                         {}, {}, {}, {}, {}, {}, now_};
    h.escrow.put(std::string(kNmiId), nmi_key);

    h.nmi_technician_id = "tech-npl";
    add_technician(h, h.nmi_technician_id, std::string(kNmiId));
    for (int i = 1; i <= spec.n_orgs; ++i) {
      std::string org_id = "org-" + std::to_string(i);
      add_organisation(h, org_id, "Calibration Org " + std::to_string(i), 1);
      std::string tech_id = "tech-" + std::to_string(i);
      add_technician(h, tech_id, org_id);
      h.org_ids.push_back(org_id);
      h.technician_ids.push_back(tech_id);
    }

    h.root_device_id = "nmi-ref";
    add_device(h, h.root_device_id, "", 1, h.nmi_technician_id);
    h.device_levels.push_back({h.root_device_id});
    return h;
  }

  void add_organisation(GeneratedHierarchy& h, const std::string& org_id, const std::string& name,
                        int level) {
    KeyPair key = derive_key(seed_, org_id);
    CertificateRecord cert = certify(org_id, SubjectKind::kOrganisation, key.public_key(),
                                     std::string(kNmiId), h.escrow.at(std::string(kNmiId)));
    h.registry.create_organisation(org_id, name, cert, level);
    h.escrow.put(org_id, std::move(key));
  }

  void add_technician(GeneratedHierarchy& h, const std::string& tech_id, const std::string& org_id) {
    KeyPair key = derive_key(seed_, tech_id);
    CertificateRecord cert =
        certify(tech_id, SubjectKind::kTechnician, key.public_key(), org_id, h.escrow.at(org_id));
    h.registry.create_technician(tech_id, key.public_key().address(), org_id, cert);
    h.escrow.put(tech_id, std::move(key));
  }

  void add_device(GeneratedHierarchy& h, const std::string& device_id, const std::string& parent_id,
                  int integrity_level, const std::string& tech_id) {
    CalibrationReport r;
    r.report_id = "rep-" + device_id;
    r.device_id = device_id;
    r.parent_device_id = parent_id;
    r.technician_id = tech_id;
    r.issued_at = now_;
    r.valid_until = now_ + kReportValidity;
    r.operating_range = {0.0, 100.0, "degC"};
    r.measurement_uncertainty = static_cast<double>(1 + rng_() % 500) / 10000.0;
    r.integrity_level = integrity_level;

    std::optional<KeyPair> device_key;
    if (signatures_) {
      device_key = derive_key(seed_, device_id);
      r.device_public_key = device_key->public_key();
      const KeyPair& parent_key = parent_id.empty() ? *device_key : h.escrow.at(parent_id);
      sign_report(r, parent_key, h.escrow.at(tech_id));
    } else {
      r.device_public_key.bytes = sha256(device_id);
    }
    h.registry.create_report(r, now_);
    if (device_key) h.escrow.put(device_id, std::move(*device_key));
  }

 private:
  CertificateRecord certify(const std::string& subject, SubjectKind kind, const PublicKey& key,
                            const std::string& issuer, const KeyPair& issuer_key) {
    if (signatures_) return issue_certificate(subject, kind, key, issuer, issuer_key);
    CertificateRecord cert;
    cert.subject_id = subject;
    cert.subject_kind = kind;
    cert.public_key = key;
    cert.issuer_id = issuer;
    return cert;
  }

  std::uint64_t seed_;
  bool signatures_;
  Timestamp now_;
  std::mt19937_64 rng_;
};

}  // namespace

GeneratedHierarchy generate_hierarchy(const HierarchySpec& spec, Timestamp now) {
  spec.validate();
  if (spec.levels >= 63 || (std::uint64_t{1} << spec.levels) > spec.n_devices) {
    throw Error(ErrorCode::kInfeasibleSpec,
                "levels exceeds log2(n_devices): " + std::to_string(spec.levels) + " levels for " +
                    std::to_string(spec.n_devices) + " devices");
  }
  Builder builder(spec.seed, spec.signatures_enabled, now);
  GeneratedHierarchy h = builder.start(spec);

  // Organisation i serves level (i mod levels) + 1.
  std::vector<std::vector<std::size_t>> orgs_for_level(spec.levels + 1);
  for (int i = 0; i < spec.n_orgs; ++i) orgs_for_level[(i % spec.levels) + 1].push_back(i);

  const std::uint64_t branching = branching_factor(spec.n_devices, spec.levels);
  std::uint64_t width = 1;
  for (int level = 1; level <= spec.levels; ++level) {
    width = level == spec.levels ? spec.n_devices : std::min(width * branching, spec.n_devices);
    const auto& parents = h.device_levels.back();
    const auto& orgs = orgs_for_level[level];
    std::vector<std::string> ids;
    ids.reserve(width);
    for (std::uint64_t j = 0; j < width; ++j) {
      std::size_t org = orgs.empty() ? static_cast<std::size_t>((level - 1) % spec.n_orgs)
                                     : orgs[j % orgs.size()];
      std::string id = "dev-l" + std::to_string(level) + "-" + std::to_string(j);
      builder.add_device(h, id, parents[j % parents.size()], level + 1, h.technician_ids[org]);
      ids.push_back(std::move(id));
    }
    h.device_levels.push_back(std::move(ids));
  }
  return h;
}

GeneratedHierarchy generate_chain(int depth, bool signatures, std::uint64_t seed, int n_orgs,
                                  Timestamp now) {
  if (depth < 1 || n_orgs < 1) throw Error(ErrorCode::kInvalidInput, "depth and n_orgs must be >= 1");
  HierarchySpec spec;
  spec.n_devices = 1;
  spec.levels = depth;
  spec.n_orgs = n_orgs;
  spec.seed = seed;
  spec.signatures_enabled = signatures;
  Builder builder(seed, signatures, now);
  GeneratedHierarchy h = builder.start(spec);
  for (int level = 1; level <= depth; ++level) {
    std::string id = "chain-" + std::to_string(level);
    builder.add_device(h, id, h.device_levels.back().front(), level + 1,
                       h.technician_ids[(level - 1) % n_orgs]);
    h.device_levels.push_back({id});
  }
  return h;
}

Json export_bundle(const GeneratedHierarchy& h) {
  const Registry& reg = h.registry;
  Json bundle;
  bundle["spec"] = to_json(h.spec);
  bundle["nmi"] = {{"name", *reg.get_org_name(reg.nmi_org_id())},
                   {"org_id", reg.nmi_org_id()},
                   {"root_certificate", to_json(reg.root_certificate())}};
  Json orgs = Json::array();
  for (const auto& org_id : h.org_ids) {
    const Organisation& org = reg.organisations().at(org_id);
    orgs.push_back({{"certificate", to_json(org.certificate)},
                    {"integrity_level", org.integrity_level},
                    {"name", org.name},
                    {"org_id", org.org_id}});
  }
  bundle["organisations"] = std::move(orgs);
  Json techs = Json::array();
  std::vector<std::string> tech_ids{h.nmi_technician_id};
  tech_ids.insert(tech_ids.end(), h.technician_ids.begin(), h.technician_ids.end());
  for (const auto& tech_id : tech_ids) {
    const Technician& tech = reg.technicians().at(tech_id);
    techs.push_back({{"account_address", tech.account_address},
                     {"certificate", to_json(tech.certificate)},
                     {"org_id", tech.org_id},
                     {"tech_id", tech.tech_id}});
  }
  bundle["technicians"] = std::move(techs);
  Json reports = Json::array();
  for (const auto& level : h.device_levels) {
    for (const auto& device : level) {
      if (const CalibrationReport* r = reg.current_report(device)) reports.push_back(to_json(*r));
    }
  }
  bundle["reports"] = std::move(reports);
  return bundle;
}

std::vector<ContractCall> bundle_calls(const Json& bundle) {
  std::vector<ContractCall> calls;
  for (const auto& org : bundle.at("organisations")) {
    calls.push_back({std::string(fn::kCreateOrganisation), org});
  }
  for (const auto& tech : bundle.at("technicians")) {
    calls.push_back({std::string(fn::kCreateTechnician), tech});
  }
  for (const auto& report : bundle.at("reports")) {
    calls.push_back({std::string(fn::kCreateReport), Json{{"report", report}}});
  }
  return calls;
}

std::string_view tamper_mode_name(TamperMode mode) {
  switch (mode) {
    case TamperMode::kCorruptParentSig: return "corrupt_parent_sig";
    case TamperMode::kCorruptTechSig: return "corrupt_tech_sig";
    case TamperMode::kOrphanParent: return "orphan_parent";
    case TamperMode::kRevoke: return "revoke";
    case TamperMode::kFakeRootOrg: return "fake_root_org";
  }
  return "unknown";
}

TamperMode parse_tamper_mode(std::string_view name) {
  for (auto mode : {TamperMode::kCorruptParentSig, TamperMode::kCorruptTechSig,
                    TamperMode::kOrphanParent, TamperMode::kRevoke, TamperMode::kFakeRootOrg}) {
    if (tamper_mode_name(mode) == name) return mode;
  }
  throw Error(ErrorCode::kInvalidInput, "unknown tamper mode: " + std::string(name));
}

/// Direct state surgery for adversarial fixtures; bypasses every contract check.
class Tamperer {
 public:
  static std::vector<std::string> apply(GeneratedHierarchy& h, const std::string& target,
                                        TamperMode mode) {
    Registry& reg = h.registry;
    auto cur = reg.current_.find(target);
    if (cur == reg.current_.end()) throw Error(ErrorCode::kNotFound, "unknown device: " + target);
    CalibrationReport& report = reg.reports_.at(cur->second);

    std::vector<std::string> affected{target};
    for (auto& d : reg.descendants(target)) affected.push_back(std::move(d));

    const bool sigs = reg.config_.verify_signatures;
    auto flip = [&](Signature& sig) {
      if (!sigs) throw Error(ErrorCode::kInvalidInput, "signature tampering needs a signed hierarchy");
      sig.bytes.at(sig.bytes.size() / 2) ^= 0x5a;
    };

    switch (mode) {
      case TamperMode::kCorruptParentSig:
        flip(report.parent_signature);
        break;
      case TamperMode::kCorruptTechSig:
        flip(report.technician_signature);
        break;
      case TamperMode::kOrphanParent: {
        std::string report_id = cur->second;
        if (!report.is_root()) reg.unlink_child(report.parent_device_id, target);
        reg.current_.erase(cur);
        reg.reports_.erase(report_id);
        break;
      }
      case TamperMode::kRevoke:
        report.revoked = true;
        break;
      case TamperMode::kFakeRootOrg: {
        if (h.technician_ids.empty()) {
          throw Error(ErrorCode::kInvalidInput, "no non-NMI technician to forge a root with");
        }
        if (!report.is_root()) reg.unlink_child(report.parent_device_id, target);
        report.parent_device_id.clear();
        report.integrity_level = 1;
        report.technician_id = h.technician_ids.front();
        if (sigs) {
          sign_report(report, h.escrow.at(target), h.escrow.at(report.technician_id));
        }
        break;
      }
    }
    return affected;
  }
};

std::vector<std::string> tamper(GeneratedHierarchy& h, const std::string& target_device,
                                TamperMode mode) {
  return Tamperer::apply(h, target_device, mode);
}

}  // namespace caltrace
