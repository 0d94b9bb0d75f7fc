#pragma once

// Brute-force reference checks over a registry's entity graph. Deliberately
// shares no verification code with the contract: signatures are checked with
// libsodium directly, payloads are rebuilt from the report JSON, and the
// organisation chain is walked recursively.

#include <sodium.h>

#include <map>
#include <set>
#include <string>
#include <vector>

#include "caltrace/registry.hpp"

namespace oracle {

using caltrace::Bytes;
using caltrace::CalibrationReport;
using caltrace::CertificateRecord;
using caltrace::Json;
using caltrace::PublicKey;
using caltrace::Registry;
using caltrace::Signature;
using caltrace::SubjectKind;
using caltrace::Timestamp;

inline std::string hex(const unsigned char* p, std::size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    s += digits[p[i] >> 4];
    s += digits[p[i] & 0xf];
  }
  return s;
}

inline bool ed25519_over_sha256(const std::string& message, const Signature& sig,
                                const PublicKey& key) {
  if (message.empty() || sig.bytes.size() != crypto_sign_BYTES ||
      key.bytes.size() != crypto_sign_PUBLICKEYBYTES) {
    return false;
  }
  unsigned char key_digest[crypto_hash_sha256_BYTES];
  crypto_hash_sha256(key_digest, key.bytes.data(), key.bytes.size());
  if (sig.signer_key_id != hex(key_digest, 20)) return false;
  unsigned char digest[crypto_hash_sha256_BYTES];
  crypto_hash_sha256(digest, reinterpret_cast<const unsigned char*>(message.data()), message.size());
  return crypto_sign_verify_detached(sig.bytes.data(), digest, sizeof digest, key.bytes.data()) == 0;
}

inline std::string report_message(const CalibrationReport& r) {
  Json j = caltrace::to_json(r);
  j.erase("parent_signature");
  j.erase("technician_signature");
  j.erase("revoked");
  return j.dump();
}

inline std::string certificate_message(const CertificateRecord& c) {
  Json j = caltrace::to_json(c);
  return Json{{"public_key", j["public_key"]},
              {"subject_id", j["subject_id"]},
              {"subject_kind", j["subject_kind"]}}
      .dump();
}

class Oracle {
 public:
  Oracle(const Registry& reg, Timestamp now) : reg_(reg), now_(now) {
    sigs_ = reg.config().verify_signatures;
  }

  bool org_trusted(const std::string& org_id, int depth = 0) const {
    if (depth > 64) return false;
    if (auto hit = orgs_.find(org_id); hit != orgs_.end()) return hit->second;
    return orgs_[org_id] = org_trusted_uncached(org_id, depth);
  }

  /// Every report from the device up to a parentless one is present, fresh,
  /// signed by its parent device and its own certified technician.
  bool device_valid(const std::string& device_id, int depth = 0) const {
    if (depth > 4096) return false;
    if (auto hit = devices_.find(device_id); hit != devices_.end()) return hit->second;
    return devices_[device_id] = device_valid_uncached(device_id, depth);
  }

  bool technician_trusted(const std::string& tech_id) const {
    auto it = reg_.certificates().find(tech_id);
    if (it == reg_.certificates().end()) return false;
    const CertificateRecord& cert = it->second;
    if (cert.subject_kind != SubjectKind::kTechnician) return false;
    auto org = reg_.certificates().find(cert.issuer_id);
    if (org == reg_.certificates().end() || org->second.subject_kind != SubjectKind::kOrganisation) {
      return false;
    }
    if (sigs_ && !ed25519_over_sha256(certificate_message(cert), cert.issuer_signature,
                                      org->second.public_key)) {
      return false;
    }
    return org_trusted(cert.issuer_id);
  }

  /// Report id of the parentless report at the top of the device's chain.
  std::string root_report_id(const std::string& device_id) const {
    const CalibrationReport* r = reg_.current_report(device_id);
    for (int hops = 0; r != nullptr && !r->parent_device_id.empty() && hops < 4096; ++hops) {
      r = reg_.current_report(r->parent_device_id);
    }
    return r ? r->report_id : std::string();
  }

  bool rooted_at_nmi(const std::string& device_id) const {
    const CalibrationReport* r = reg_.current_report(device_id);
    for (int hops = 0; r != nullptr && !r->parent_device_id.empty() && hops < 4096; ++hops) {
      r = reg_.current_report(r->parent_device_id);
    }
    if (r == nullptr) return false;
    auto tech = reg_.technicians().find(r->technician_id);
    return tech != reg_.technicians().end() && tech->second.org_id == reg_.nmi_org_id();
  }

 private:
  bool org_trusted_uncached(const std::string& org_id, int depth) const {
    auto it = reg_.certificates().find(org_id);
    if (it == reg_.certificates().end()) return false;
    const CertificateRecord& cert = it->second;
    if (cert.subject_kind != SubjectKind::kOrganisation) return false;
    const CertificateRecord& root = reg_.root_certificate();
    if (org_id == root.subject_id) {
      if (!(cert == root) || root.issuer_id != root.subject_id) return false;
      return !sigs_ || ed25519_over_sha256(certificate_message(root), root.issuer_signature,
                                           root.public_key);
    }
    if (cert.issuer_id == cert.subject_id) return false;
    auto issuer = reg_.certificates().find(cert.issuer_id);
    if (issuer == reg_.certificates().end()) return false;
    if (issuer->second.subject_kind != SubjectKind::kOrganisation) return false;
    if (sigs_ && !ed25519_over_sha256(certificate_message(cert), cert.issuer_signature,
                                      issuer->second.public_key)) {
      return false;
    }
    return org_trusted(cert.issuer_id, depth + 1);
  }

  bool device_valid_uncached(const std::string& device_id, int depth) const {
    const CalibrationReport* r = reg_.current_report(device_id);
    if (r == nullptr) return false;
    if (r->revoked || now_ > r->valid_until) return false;
    if (!technician_trusted(r->technician_id)) return false;

    const CalibrationReport* parent = nullptr;
    if (!r->parent_device_id.empty()) {
      parent = reg_.current_report(r->parent_device_id);
      if (parent == nullptr) return false;
    }
    if (sigs_) {
      const std::string msg = report_message(*r);
      const PublicKey& tech_key = reg_.certificates().at(r->technician_id).public_key;
      if (!ed25519_over_sha256(msg, r->technician_signature, tech_key)) return false;
      const PublicKey& parent_key = parent ? parent->device_public_key : r->device_public_key;
      if (!ed25519_over_sha256(msg, r->parent_signature, parent_key)) return false;
    }
    if (parent == nullptr) return true;
    return device_valid(r->parent_device_id, depth + 1);
  }

  const Registry& reg_;
  Timestamp now_;
  bool sigs_ = true;
  // Memo tables; the registry must not change while an Oracle is alive.
  mutable std::map<std::string, bool> orgs_;
  mutable std::map<std::string, bool> devices_;
};

/// O(n^2) fixed-point enumeration over every report's parent pointer. The
/// target itself is not included.
inline std::set<std::string> descendants(const Registry& reg, const std::vector<std::string>& devices,
                                         const std::string& target) {
  std::set<std::string> closed{target};
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& d : devices) {
      if (closed.count(d)) continue;
      const CalibrationReport* r = reg.current_report(d);
      if (r && !r->parent_device_id.empty() && closed.count(r->parent_device_id)) {
        closed.insert(d);
        grew = true;
      }
    }
  }
  closed.erase(target);
  return closed;
}

}  // namespace oracle
