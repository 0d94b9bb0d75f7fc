#include "caltrace/registry.hpp"

#include <cmath>
#include <deque>

#include "caltrace/error.hpp"

namespace caltrace {

namespace {

void check_identifier(std::string_view id, std::string_view what, bool allow_empty = false) {
  if ((!allow_empty && id.empty()) || id.size() > kMaxIdentifierSize) {
    throw Error(ErrorCode::kInvalidInput,
                std::string(what) + " must be 1.." + std::to_string(kMaxIdentifierSize) + " bytes");
  }
}

Json report_payload_json(const CalibrationReport& r) {
  return Json{{"device_id", r.device_id},
              {"device_public_key", r.device_public_key.hex()},
              {"integrity_level", r.integrity_level},
              {"issued_at", format_iso8601(r.issued_at)},
              {"measurement_uncertainty", r.measurement_uncertainty},
              {"operating_range",
               {{"max", r.operating_range.max},
                {"min", r.operating_range.min},
                {"unit", r.operating_range.unit}}},
              {"parent_device_id", r.parent_device_id},
              {"report_id", r.report_id},
              {"technician_id", r.technician_id},
              {"valid_until", format_iso8601(r.valid_until)}};
}

template <typename Map>
auto find_ptr(const Map& map, std::string_view key) -> const typename Map::mapped_type* {
  auto it = map.find(key);
  return it == map.end() ? nullptr : &it->second;
}

}  // namespace

Bytes CalibrationReport::signed_payload() const {
  return canonical_bytes(report_payload_json(*this));
}

Json to_json(const CalibrationReport& report) {
  Json j = report_payload_json(report);
  j["parent_signature"] = to_json(report.parent_signature);
  j["technician_signature"] = to_json(report.technician_signature);
  j["revoked"] = report.revoked;
  return j;
}

CalibrationReport report_from_json(const Json& j) {
  CalibrationReport r;
  r.report_id = j.at("report_id").get<std::string>();
  r.device_id = j.at("device_id").get<std::string>();
  r.parent_device_id = j.at("parent_device_id").get<std::string>();
  r.technician_id = j.at("technician_id").get<std::string>();
  r.issued_at = parse_iso8601(j.at("issued_at").get<std::string>());
  r.valid_until = parse_iso8601(j.at("valid_until").get<std::string>());
  r.revoked = j.value("revoked", false);
  const Json& range = j.at("operating_range");
  r.operating_range.min = range.at("min").get<double>();
  r.operating_range.max = range.at("max").get<double>();
  r.operating_range.unit = range.at("unit").get<std::string>();
  r.measurement_uncertainty = j.at("measurement_uncertainty").get<double>();
  r.device_public_key = PublicKey::from_hex(j.at("device_public_key").get<std::string>());
  r.parent_signature = signature_from_json(j.at("parent_signature"));
  r.technician_signature = signature_from_json(j.at("technician_signature"));
  r.integrity_level = j.at("integrity_level").get<int>();
  return r;
}

Json to_json(const TraceRecord& record) {
  return Json{{"device_id", record.device_id},
              {"root_report_id", record.root_report_id},
              {"sender", record.sender},
              {"trace_complete", record.trace_complete},
              {"tx_id", record.tx_id},
              {"valid_report", record.valid_report},
              {"verified_at", record.verified_at}};
}

bool is_write_function(std::string_view name) {
  return name == fn::kCreateOrganisation || name == fn::kCreateTechnician ||
         name == fn::kCreateReport || name == fn::kRevokeReport || name == fn::kTraceCalWrite;
}

bool is_read_function(std::string_view name) {
  return name == fn::kTraceCalRead || name == fn::kGetParentReport || name == fn::kGetOrgName ||
         name == fn::kGetTechnicianOrganisation || name == fn::kGetTrace;
}

Registry::Registry(std::string nmi_org_id, std::string nmi_name,
                   CertificateRecord root_certificate, RegistryConfig config)
    : nmi_org_id_(std::move(nmi_org_id)),
      root_certificate_(std::move(root_certificate)),
      config_(config) {
  check_identifier(nmi_org_id_, "organisation id");
  if (root_certificate_.subject_id != nmi_org_id_ || !root_certificate_.is_self_signed() ||
      root_certificate_.subject_kind != SubjectKind::kOrganisation) {
    throw Error(ErrorCode::kUntrustedCertificate,
                "root certificate must be a self-signed organisation certificate for the NMI");
  }
  if (config_.verify_signatures && !verify(root_certificate_.signed_payload(),
                                           root_certificate_.issuer_signature,
                                           root_certificate_.public_key)) {
    throw Error(ErrorCode::kUntrustedCertificate, "root certificate self-signature is invalid");
  }
  certificates_.emplace(nmi_org_id_, root_certificate_);
  organisations_.emplace(nmi_org_id_,
                         Organisation{nmi_org_id_, std::move(nmi_name), root_certificate_, 0});
}

void Registry::create_organisation(const std::string& org_id, const std::string& name,
                                   const CertificateRecord& certificate, int integrity_level) {
  check_identifier(org_id, "organisation id");
  if (organisations_.contains(org_id) || certificates_.contains(org_id)) {
    throw Error(ErrorCode::kAlreadyExists, "organisation already exists: " + org_id);
  }
  if (integrity_level < 1) {
    throw Error(ErrorCode::kInvalidInput, "only the NMI may hold integrity level 0");
  }
  if (certificate.subject_id != org_id || certificate.subject_kind != SubjectKind::kOrganisation) {
    throw Error(ErrorCode::kUntrustedCertificate, "certificate subject does not match organisation");
  }
  ChainOptions opts;
  opts.check_signatures = config_.verify_signatures;
  if (!verify_chain_of_trust(certificate, root_certificate_, certificates_, opts)) {
    throw Error(ErrorCode::kUntrustedCertificate,
                "organisation certificate has no chain of trust to the root");
  }
  certificates_.emplace(org_id, certificate);
  organisations_.emplace(org_id, Organisation{org_id, name, certificate, integrity_level});
}

void Registry::create_technician(const std::string& tech_id, const std::string& account_address,
                                 const std::string& org_id, const CertificateRecord& certificate) {
  check_identifier(tech_id, "technician id");
  if (technicians_.contains(tech_id) || certificates_.contains(tech_id)) {
    throw Error(ErrorCode::kAlreadyExists, "technician already exists: " + tech_id);
  }
  const Organisation* org = find_ptr(organisations_, org_id);
  if (org == nullptr) throw Error(ErrorCode::kUnknownOrganisation, "unknown organisation: " + org_id);
  if (certificate.subject_id != tech_id || certificate.subject_kind != SubjectKind::kTechnician ||
      certificate.issuer_id != org_id) {
    throw Error(ErrorCode::kUntrustedCertificate,
                "technician certificate must be issued by its organisation");
  }
  if (config_.verify_signatures && !verify(certificate.signed_payload(),
                                           certificate.issuer_signature,
                                           org->certificate.public_key)) {
    throw Error(ErrorCode::kUntrustedCertificate, "technician certificate signature is invalid");
  }
  certificates_.emplace(tech_id, certificate);
  technicians_.emplace(tech_id, Technician{tech_id, account_address, org_id, certificate});
}

void Registry::create_report(const CalibrationReport& report, Timestamp now) {
  check_identifier(report.report_id, "report id");
  check_identifier(report.device_id, "device id");
  check_identifier(report.technician_id, "technician id");
  check_identifier(report.parent_device_id, "parent device id", true);
  if (reports_.contains(report.report_id)) {
    throw Error(ErrorCode::kAlreadyExists, "report already exists: " + report.report_id);
  }
  if (!(report.operating_range.min < report.operating_range.max)) {
    throw Error(ErrorCode::kInvalidInput, "operating range must satisfy min < max");
  }
  if (!std::isfinite(report.measurement_uncertainty) || report.measurement_uncertainty < 0.0) {
    throw Error(ErrorCode::kInvalidInput, "measurement uncertainty must be finite and >= 0");
  }
  if (report.valid_until <= report.issued_at) {
    throw Error(ErrorCode::kInvalidInput, "valid_until must be after issued_at");
  }
  if (report.revoked) throw Error(ErrorCode::kInvalidInput, "a new report cannot be revoked");

  const Technician* tech = find_ptr(technicians_, report.technician_id);
  if (tech == nullptr) {
    throw Error(ErrorCode::kUnknownTechnician, "unknown technician: " + report.technician_id);
  }

  PublicKey parent_key = report.device_public_key;
  if (!report.is_root()) {
    if (report.parent_device_id == report.device_id) {
      throw Error(ErrorCode::kBrokenChain, "a device cannot be its own parent");
    }
    const CalibrationReport* parent = current_report(report.parent_device_id);
    if (parent == nullptr || !parent->is_fresh(now)) {
      throw Error(ErrorCode::kBrokenChain,
                  "parent device has no current report: " + report.parent_device_id);
    }
    std::size_t hops = 0;
    for (const CalibrationReport* a = parent; a != nullptr && !a->is_root();
         a = current_report(a->parent_device_id)) {
      if (a->parent_device_id == report.device_id || ++hops > current_.size()) {
        throw Error(ErrorCode::kBrokenChain, "report would create a calibration cycle");
      }
    }
    if (report.integrity_level != parent->integrity_level + 1) {
      throw Error(ErrorCode::kLevelViolation,
                  "integrity level must be exactly one below the parent's (parent " +
                      std::to_string(parent->integrity_level) + ", report " +
                      std::to_string(report.integrity_level) + ")");
    }
    parent_key = parent->device_public_key;
  } else if (report.integrity_level != 1) {
    throw Error(ErrorCode::kLevelViolation, "a root report must have integrity level 1");
  }

  if (config_.verify_signatures) {
    Bytes payload = report.signed_payload();
    if (!verify(payload, report.parent_signature, parent_key)) {
      throw Error(ErrorCode::kForgedParent, "parent signature does not verify");
    }
    if (!verify(payload, report.technician_signature, tech->certificate.public_key)) {
      throw Error(ErrorCode::kForgedTechnician, "technician signature does not verify");
    }
  }

  if (const CalibrationReport* previous = current_report(report.device_id)) {
    if (!previous->is_root()) unlink_child(previous->parent_device_id, report.device_id);
  }
  reports_.emplace(report.report_id, report);
  current_[report.device_id] = report.report_id;
  if (!report.is_root()) link_child(report.parent_device_id, report.device_id);
}

void Registry::revoke_report(const std::string& report_id, const std::string& revoker_id) {
  auto it = reports_.find(report_id);
  if (it == reports_.end()) throw Error(ErrorCode::kNotFound, "unknown report: " + report_id);
  if (it->second.revoked) throw Error(ErrorCode::kAlreadyRevoked, "report already revoked: " + report_id);
  const Technician* tech = find_ptr(technicians_, it->second.technician_id);
  if (tech == nullptr) throw Error(ErrorCode::kForbidden, "issuing technician is unknown");
  std::vector<std::string> allowed = organisation_ancestry(tech->org_id);
  if (std::find(allowed.begin(), allowed.end(), revoker_id) == allowed.end()) {
    throw Error(ErrorCode::kForbidden,
                revoker_id + " is not the issuing organisation or one of its certifiers");
  }
  it->second.revoked = true;
}

const TraceRecord& Registry::trace_cal_write(const std::string& device_id, const CallContext& ctx) {
  if (ctx.sender.empty()) {
    throw Error(ErrorCode::kInvalidInput, "trace writes require an identified sender");
  }
  if (!current_.contains(device_id)) throw Error(ErrorCode::kNotFound, "unknown device: " + device_id);

  TraceRecord record;
  record.device_id = device_id;
  record.trace_complete = true;
  record.verified_at = ctx.block_index;
  record.sender = ctx.sender;
  record.tx_id = ctx.tx_id;
  if (const CalibrationReport* root = trace_cal_read(device_id, ctx.now)) {
    record.root_report_id = root->report_id;
    const Technician* tech = find_ptr(technicians_, root->technician_id);
    record.valid_report = tech != nullptr && tech->org_id == nmi_org_id_;
  }
  auto [it, inserted] = traces_.insert_or_assign(device_id, std::move(record));
  return it->second;
}

bool Registry::report_checks_pass(const CalibrationReport& report, const PublicKey& parent_key,
                                  const CertificateRecord& technician_cert, bool check_org,
                                  Timestamp now) const {
  if (!report.is_fresh(now)) return false;
  const bool sigs = config_.verify_signatures;
  if (sigs) {
    Bytes payload = report.signed_payload();
    if (!verify(payload, report.parent_signature, parent_key)) return false;
    if (!verify(payload, report.technician_signature, technician_cert.public_key)) return false;
  }
  if (!check_org) return true;
  const CertificateRecord* org_cert = find_ptr(certificates_, technician_cert.issuer_id);
  if (org_cert == nullptr || org_cert->subject_kind != SubjectKind::kOrganisation) return false;
  if (sigs && !verify(technician_cert.signed_payload(), technician_cert.issuer_signature,
                      org_cert->public_key)) {
    return false;
  }
  ChainOptions opts;
  opts.check_signatures = sigs;
  return verify_chain_of_trust(*org_cert, root_certificate_, certificates_, opts);
}

const CalibrationReport* Registry::trace_cal_read(std::string_view device_id, Timestamp now) const {
  const CalibrationReport* report = current_report(device_id);
  if (report == nullptr) return nullptr;

  const CertificateRecord* leaf_technician = nullptr;
  std::set<std::string_view> visited;
  while (true) {
    const CalibrationReport* parent = nullptr;
    if (!report->is_root()) {
      parent = current_report(report->parent_device_id);
      if (parent == nullptr) return nullptr;
    }
    const PublicKey& parent_key = parent ? parent->device_public_key : report->device_public_key;

    const CertificateRecord* technician_cert = nullptr;
    bool check_org = true;
    if (config_.strict_alg1 && leaf_technician != nullptr) {
      technician_cert = leaf_technician;
      check_org = false;
    } else {
      technician_cert = find_ptr(certificates_, report->technician_id);
      if (technician_cert == nullptr || technician_cert->subject_kind != SubjectKind::kTechnician) {
        return nullptr;
      }
      if (leaf_technician == nullptr) leaf_technician = technician_cert;
    }

    if (!report_checks_pass(*report, parent_key, *technician_cert, check_org, now)) return nullptr;
    if (parent == nullptr) return report;
    if (!visited.insert(report->device_id).second) return nullptr;
    report = parent;
  }
}

const CalibrationReport* Registry::get_parent_report(std::string_view device_id) const {
  const CalibrationReport* report = current_report(device_id);
  if (report == nullptr || report->is_root()) return nullptr;
  return current_report(report->parent_device_id);
}

std::optional<std::string> Registry::get_org_name(std::string_view org_id) const {
  if (const Organisation* org = find_ptr(organisations_, org_id)) return org->name;
  return std::nullopt;
}

std::optional<std::string> Registry::get_technician_organisation(std::string_view tech_id) const {
  if (const Technician* tech = find_ptr(technicians_, tech_id)) return tech->org_id;
  return std::nullopt;
}

const TraceRecord* Registry::find_trace(std::string_view device_id) const {
  return find_ptr(traces_, device_id);
}

const CalibrationReport* Registry::current_report(std::string_view device_id) const {
  const std::string* report_id = find_ptr(current_, device_id);
  return report_id ? find_ptr(reports_, *report_id) : nullptr;
}

const CalibrationReport* Registry::find_report(std::string_view report_id) const {
  return find_ptr(reports_, report_id);
}

std::vector<std::string> Registry::children(std::string_view device_id) const {
  const auto* kids = find_ptr(children_, device_id);
  if (kids == nullptr) return {};
  return {kids->begin(), kids->end()};
}

std::vector<std::string> Registry::descendants(std::string_view device_id) const {
  std::vector<std::string> out;
  std::set<std::string> seen{std::string(device_id)};
  std::deque<std::string> queue{std::string(device_id)};
  while (!queue.empty()) {
    std::string cur = std::move(queue.front());
    queue.pop_front();
    for (auto& kid : children(cur)) {
      if (seen.insert(kid).second) {
        out.push_back(kid);
        queue.push_back(kid);
      }
    }
  }
  return out;
}

std::vector<std::string> Registry::organisation_ancestry(std::string_view org_id) const {
  std::vector<std::string> out;
  const CertificateRecord* cert = find_ptr(certificates_, org_id);
  while (cert != nullptr && out.size() <= 64) {
    out.push_back(cert->subject_id);
    if (cert->is_self_signed()) break;
    cert = find_ptr(certificates_, cert->issuer_id);
  }
  return out;
}

void Registry::link_child(const std::string& parent, const std::string& child) {
  children_[parent].insert(child);
}

void Registry::unlink_child(const std::string& parent, const std::string& child) {
  auto it = children_.find(parent);
  if (it == children_.end()) return;
  it->second.erase(child);
  if (it->second.empty()) children_.erase(it);
}

Json Registry::execute(const ContractCall& call, const CallContext& ctx) {
  const Json& a = call.args;
  try {
    if (call.function == fn::kCreateOrganisation) {
      create_organisation(a.at("org_id").get<std::string>(), a.at("name").get<std::string>(),
                          certificate_from_json(a.at("certificate")),
                          a.at("integrity_level").get<int>());
      return nullptr;
    }
    if (call.function == fn::kCreateTechnician) {
      create_technician(a.at("tech_id").get<std::string>(),
                        a.at("account_address").get<std::string>(),
                        a.at("org_id").get<std::string>(),
                        certificate_from_json(a.at("certificate")));
      return nullptr;
    }
    if (call.function == fn::kCreateReport) {
      create_report(report_from_json(a.at("report")), ctx.now);
      return nullptr;
    }
    if (call.function == fn::kRevokeReport) {
      revoke_report(a.at("report_id").get<std::string>(), a.at("revoker_id").get<std::string>());
      return nullptr;
    }
    if (call.function == fn::kTraceCalWrite) {
      return caltrace::to_json(trace_cal_write(a.at("device_id").get<std::string>(), ctx));
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kInvalidInput, std::string("malformed call arguments: ") + e.what());
  }
  throw Error(ErrorCode::kUnknownCall, "unknown contract function: " + call.function);
}

Json Registry::query(const ContractCall& call, Timestamp now) const {
  const Json& a = call.args;
  try {
    if (call.function == fn::kTraceCalRead) {
      const auto* r = trace_cal_read(a.at("device_id").get<std::string>(), now);
      return r ? caltrace::to_json(*r) : Json(nullptr);
    }
    if (call.function == fn::kGetParentReport) {
      const auto* r = get_parent_report(a.at("device_id").get<std::string>());
      return r ? caltrace::to_json(*r) : Json(nullptr);
    }
    if (call.function == fn::kGetOrgName) {
      auto name = get_org_name(a.at("org_id").get<std::string>());
      return name ? Json(*name) : Json(nullptr);
    }
    if (call.function == fn::kGetTechnicianOrganisation) {
      auto org = get_technician_organisation(a.at("tech_id").get<std::string>());
      return org ? Json(*org) : Json(nullptr);
    }
    if (call.function == fn::kGetTrace) {
      const auto* t = find_trace(a.at("device_id").get<std::string>());
      return t ? caltrace::to_json(*t) : Json(nullptr);
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kInvalidInput, std::string("malformed query arguments: ") + e.what());
  }
  throw Error(ErrorCode::kUnknownCall, "unknown read function: " + call.function);
}

Json Registry::to_json() const {
  Json state;
  state["nmi_org_id"] = nmi_org_id_;
  state["root_certificate"] = caltrace::to_json(root_certificate_);
  Json& orgs = state["organisations"] = Json::object();
  for (const auto& [id, org] : organisations_) {
    orgs[id] = {{"certificate", caltrace::to_json(org.certificate)},
                {"integrity_level", org.integrity_level},
                {"name", org.name}};
  }
  Json& techs = state["technicians"] = Json::object();
  for (const auto& [id, tech] : technicians_) {
    techs[id] = {{"account_address", tech.account_address},
                 {"certificate", caltrace::to_json(tech.certificate)},
                 {"org_id", tech.org_id}};
  }
  Json& reports = state["reports"] = Json::object();
  for (const auto& [id, report] : reports_) reports[id] = caltrace::to_json(report);
  state["current"] = current_;
  Json& traces = state["traces"] = Json::object();
  for (const auto& [id, trace] : traces_) traces[id] = caltrace::to_json(trace);
  return state;
}

Hash256 Registry::state_digest() const { return sha256(canonical_dump(to_json())); }

}  // namespace caltrace
