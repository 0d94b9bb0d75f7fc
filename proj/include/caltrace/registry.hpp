#pragma once

// The calibration registry contract: organisations, technicians, calibration
// reports and trace records, plus trace verification (read, free) and trace
// creation (write, gas-charged).

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "caltrace/crypto.hpp"
#include "caltrace/encoding.hpp"

namespace caltrace {

inline constexpr std::size_t kMaxIdentifierSize = 64;

struct OperatingRange {
  double min = 0.0;
  double max = 0.0;
  std::string unit;

  friend bool operator==(const OperatingRange&, const OperatingRange&) = default;
};

struct CalibrationReport {
  std::string report_id;
  std::string device_id;
  /// Empty only for a root device.
  std::string parent_device_id;
  std::string technician_id;
  Timestamp issued_at = 0;
  Timestamp valid_until = 0;
  bool revoked = false;
  OperatingRange operating_range;
  double measurement_uncertainty = 0.0;
  PublicKey device_public_key;
  /// By the parent device's key, or by the device's own key for a root report.
  Signature parent_signature;
  Signature technician_signature;
  int integrity_level = 1;

  bool is_root() const { return parent_device_id.empty(); }
  bool is_fresh(Timestamp now) const { return !revoked && now <= valid_until; }

  /// What both signatures cover: every field except the two signatures and
  /// the revocation flag.
  Bytes signed_payload() const;

  friend bool operator==(const CalibrationReport&, const CalibrationReport&) = default;
};

Json to_json(const CalibrationReport& report);
CalibrationReport report_from_json(const Json& j);

struct Organisation {
  std::string org_id;
  std::string name;
  CertificateRecord certificate;
  int integrity_level = 1;
};

struct Technician {
  std::string tech_id;
  std::string account_address;
  std::string org_id;
  CertificateRecord certificate;
};

struct TraceRecord {
  std::string device_id;
  bool trace_complete = false;
  bool valid_report = false;
  std::uint64_t verified_at = 0;
  std::string sender;
  std::string tx_id;
  /// Empty when verification returned null.
  std::string root_report_id;
};

Json to_json(const TraceRecord& record);

struct RegistryConfig {
  /// Off only in the unsigned benchmark configuration.
  bool verify_signatures = true;
  /// Verify every ancestor against the leaf's technician certificate, as the
  /// original pseudocode literally does.
  bool strict_alg1 = false;
};

/// Execution context of a state-mutating call.
struct CallContext {
  std::string sender;
  std::uint64_t block_index = 0;
  Timestamp now = 0;
  std::string tx_id;
};

struct ContractCall {
  std::string function;
  Json args = Json::object();

  friend bool operator==(const ContractCall&, const ContractCall&) = default;
};

namespace fn {
inline constexpr std::string_view kGenesis = "genesis";
inline constexpr std::string_view kCreateOrganisation = "createOrganisation";
inline constexpr std::string_view kCreateTechnician = "createTechnician";
inline constexpr std::string_view kCreateReport = "createReport";
inline constexpr std::string_view kRevokeReport = "revokeReport";
inline constexpr std::string_view kTraceCalWrite = "TraceCal_WRITE";
inline constexpr std::string_view kTraceCalRead = "TraceCal_READ";
inline constexpr std::string_view kGetParentReport = "getParentReport";
inline constexpr std::string_view kGetOrgName = "getOrgName";
inline constexpr std::string_view kGetTechnicianOrganisation = "getTechnicianOrganisation";
inline constexpr std::string_view kGetTrace = "getTrace";
}  // namespace fn

bool is_write_function(std::string_view name);
bool is_read_function(std::string_view name);

class Tamperer;

class Registry {
 public:
  /// Genesis: pins the NMI root certificate and creates the level-0 organisation.
  Registry(std::string nmi_org_id, std::string nmi_name, CertificateRecord root_certificate,
           RegistryConfig config = {});

  // Writes.
  void create_organisation(const std::string& org_id, const std::string& name,
                           const CertificateRecord& certificate, int integrity_level);
  void create_technician(const std::string& tech_id, const std::string& account_address,
                         const std::string& org_id, const CertificateRecord& certificate);
  void create_report(const CalibrationReport& report, Timestamp now);
  void revoke_report(const std::string& report_id, const std::string& revoker_id);
  const TraceRecord& trace_cal_write(const std::string& device_id, const CallContext& ctx);

  // Reads. None of these mutate state or need a caller identity.
  const CalibrationReport* trace_cal_read(std::string_view device_id, Timestamp now) const;
  const CalibrationReport* get_parent_report(std::string_view device_id) const;
  std::optional<std::string> get_org_name(std::string_view org_id) const;
  std::optional<std::string> get_technician_organisation(std::string_view tech_id) const;
  const TraceRecord* find_trace(std::string_view device_id) const;

  /// Applies a write call. Returns the call's JSON result (null for most).
  Json execute(const ContractCall& call, const CallContext& ctx);
  /// Answers a read-only call.
  Json query(const ContractCall& call, Timestamp now) const;

  // Introspection.
  const std::string& nmi_org_id() const { return nmi_org_id_; }
  const CertificateRecord& root_certificate() const { return root_certificate_; }
  const RegistryConfig& config() const { return config_; }
  const CertificateStore& certificates() const { return certificates_; }
  const std::map<std::string, Organisation, std::less<>>& organisations() const {
    return organisations_;
  }
  const std::map<std::string, Technician, std::less<>>& technicians() const {
    return technicians_;
  }
  const std::map<std::string, CalibrationReport, std::less<>>& reports() const {
    return reports_;
  }
  /// Latest report for the device, which may be revoked or expired.
  const CalibrationReport* current_report(std::string_view device_id) const;
  const CalibrationReport* find_report(std::string_view report_id) const;
  /// Devices whose current report names `device_id` as parent.
  std::vector<std::string> children(std::string_view device_id) const;
  /// Proper descendants, breadth-first.
  std::vector<std::string> descendants(std::string_view device_id) const;
  /// The organisation and all its certifying ancestors up to the root.
  std::vector<std::string> organisation_ancestry(std::string_view org_id) const;

  Json to_json() const;
  /// sha256 of the canonical state document.
  Hash256 state_digest() const;

 private:
  friend class Tamperer;

  bool report_checks_pass(const CalibrationReport& report, const PublicKey& parent_key,
                          const CertificateRecord& technician_cert, bool check_org,
                          Timestamp now) const;
  void link_child(const std::string& parent, const std::string& child);
  void unlink_child(const std::string& parent, const std::string& child);

  std::string nmi_org_id_;
  CertificateRecord root_certificate_;
  RegistryConfig config_;
  CertificateStore certificates_;
  std::map<std::string, Organisation, std::less<>> organisations_;
  std::map<std::string, Technician, std::less<>> technicians_;
  std::map<std::string, CalibrationReport, std::less<>> reports_;
  std::map<std::string, std::string, std::less<>> current_;
  std::map<std::string, std::set<std::string>, std::less<>> children_;
  std::map<std::string, TraceRecord, std::less<>> traces_;
};

}  // namespace caltrace
