#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "caltrace/clock.hpp"
#include "caltrace/crypto.hpp"
#include "caltrace/hierarchy.hpp"
#include "caltrace/registry.hpp"

namespace fixture {

using namespace caltrace;

inline KeyPair key(const std::string& name) { return KeyPair::from_seed32(sha256("fixture:" + name)); }

inline constexpr Timestamp kNow = 1'700'000'000;

class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = std::filesystem::temp_directory_path() / ("caltrace-test-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// NPL root, MetroCal (level 1) and a hand-built chain
/// ref (NPL tech) -> l1 (MetroCal tech) -> l2 (MetroCal tech).
struct Small {
  KeyPair npl = key("NPL");
  KeyPair org1 = key("org-1");
  KeyPair org2 = key("org-2");
  KeyPair tech_npl = key("tech-npl");
  KeyPair tech1 = key("tech-1");
  KeyPair tech2 = key("tech-2");
  Registry reg;

  explicit Small(RegistryConfig config = {})
      : reg("NPL", "National Physical Laboratory", make_root_certificate("NPL", npl), config) {
    reg.create_organisation("org-1", "MetroCal Ltd",
                            issue_certificate("org-1", SubjectKind::kOrganisation, org1.public_key(),
                                              "NPL", npl),
                            1);
    reg.create_organisation("org-2", "Other Cal",
                            issue_certificate("org-2", SubjectKind::kOrganisation, org2.public_key(),
                                              "NPL", npl),
                            1);
    add_tech("tech-npl", "NPL", tech_npl, npl);
    add_tech("tech-1", "org-1", tech1, org1);
    add_tech("tech-2", "org-2", tech2, org2);
    add("ref", "", 1, "tech-npl");
    add("l1", "ref", 2, "tech-1");
    add("l2", "l1", 3, "tech-1");
  }

  void add_tech(const std::string& id, const std::string& org, const KeyPair& k, const KeyPair& org_key) {
    reg.create_technician(id, k.public_key().address(), org,
                          issue_certificate(id, SubjectKind::kTechnician, k.public_key(), org, org_key));
  }

  const KeyPair& tech_key(const std::string& id) const {
    if (id == "tech-npl") return tech_npl;
    if (id == "tech-1") return tech1;
    return tech2;
  }

  CalibrationReport make(const std::string& device, const std::string& parent, int level,
                         const std::string& tech, const std::string& report_id = "") const {
    CalibrationReport r;
    r.report_id = report_id.empty() ? "rep-" + device : report_id;
    r.device_id = device;
    r.parent_device_id = parent;
    r.technician_id = tech;
    r.issued_at = kNow - 10;
    r.valid_until = kNow + 86400;
    r.operating_range = {0.0, 100.0, "degC"};
    r.measurement_uncertainty = 0.01;
    r.device_public_key = key("dev:" + device).public_key();
    r.integrity_level = level;
    KeyPair parent_key = key("dev:" + (parent.empty() ? device : parent));
    sign_report(r, parent_key, tech_key(tech));
    return r;
  }

  void add(const std::string& device, const std::string& parent, int level, const std::string& tech) {
    reg.create_report(make(device, parent, level, tech), kNow);
  }
};

}  // namespace fixture
