#pragma once

// Deterministic synthetic calibration hierarchies for experiments and tests,
// plus the adversarial mutations used as fixtures.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "caltrace/crypto.hpp"
#include "caltrace/registry.hpp"

namespace caltrace {

struct HierarchySpec {
  /// Field devices, i.e. the deepest level.
  std::uint64_t n_devices = 100;
  /// Device levels below the NMI root device.
  int levels = 2;
  /// Organisations besides the NMI.
  int n_orgs = 4;
  std::uint64_t seed = 0;
  bool signatures_enabled = true;

  /// Throws Error(kInvalidInput).
  void validate() const;
};

Json to_json(const HierarchySpec& spec);
HierarchySpec hierarchy_spec_from_json(const Json& j);

/// floor(log10 n), at least 1.
int derive_levels(std::uint64_t n);

enum class OrgFormula {
  /// 2 * derive_levels(n); gives 4 organisations for 100 devices.
  kFromLevels,
  /// round(log2(n - 1)).
  kLiteralLog2,
};

int derive_orgs(std::uint64_t n, OrgFormula formula = OrgFormula::kFromLevels);

/// Spec for n field devices with levels and organisations derived from n.
HierarchySpec default_spec(std::uint64_t n, std::uint64_t seed = 0, bool signatures = true,
                           OrgFormula formula = OrgFormula::kFromLevels);

/// round(n^(1/levels)).
std::uint64_t branching_factor(std::uint64_t n, int levels);

/// Test-only private keys of every generated entity. Never part of contract state.
class KeyEscrow {
 public:
  void put(const std::string& id, KeyPair key) { keys_.insert_or_assign(id, std::move(key)); }
  const KeyPair& at(const std::string& id) const;
  bool contains(const std::string& id) const { return keys_.contains(id); }

 private:
  std::map<std::string, KeyPair, std::less<>> keys_;
};

inline constexpr Timestamp kGenerationEpoch = 1'700'000'000;
inline constexpr Timestamp kReportValidity = 365LL * 24 * 3600;

struct GeneratedHierarchy {
  HierarchySpec spec;
  Registry registry;
  KeyEscrow escrow;
  std::string root_device_id;
  /// device_levels[0] holds the root device; device_levels.back() the field devices.
  std::vector<std::vector<std::string>> device_levels;
  /// Non-NMI organisations and their technicians; technicians[i] belongs to org_ids[i].
  std::vector<std::string> org_ids;
  std::vector<std::string> technician_ids;
  std::string nmi_technician_id;
  Timestamp generated_at = kGenerationEpoch;

  const std::vector<std::string>& leaves() const { return device_levels.back(); }
  std::vector<std::string> all_devices() const;
};

/// Throws Error(kInfeasibleSpec) when 2^levels > n_devices.
GeneratedHierarchy generate_hierarchy(const HierarchySpec& spec,
                                      Timestamp now = kGenerationEpoch);

/// A single path of `depth` devices below the root device, each calibrated by
/// a different organisation's technician (round-robin over n_orgs).
GeneratedHierarchy generate_chain(int depth, bool signatures, std::uint64_t seed = 0,
                                  int n_orgs = 4, Timestamp now = kGenerationEpoch);

/// Reports and certificates in creation order, replayable as contract calls.
Json export_bundle(const GeneratedHierarchy& h);
/// Contract calls that rebuild the bundle on a ledger whose genesis matches it.
std::vector<ContractCall> bundle_calls(const Json& bundle);

enum class TamperMode {
  kCorruptParentSig,
  kCorruptTechSig,
  /// Deletes the target's current report, orphaning its subtree.
  kOrphanParent,
  kRevoke,
  /// Re-issues the target's report as a parentless root certified by a
  /// non-NMI organisation.
  kFakeRootOrg,
};

std::string_view tamper_mode_name(TamperMode mode);
TamperMode parse_tamper_mode(std::string_view name);

/// Applies exactly one mutation; returns the target plus its descendants.
/// Throws Error(kNotFound) for unknown targets.
std::vector<std::string> tamper(GeneratedHierarchy& h, const std::string& target_device,
                                TamperMode mode);

/// Signs a report with the given parent-device and technician keys.
void sign_report(CalibrationReport& report, const KeyPair& parent_device_key,
                 const KeyPair& technician_key);

}  // namespace caltrace
