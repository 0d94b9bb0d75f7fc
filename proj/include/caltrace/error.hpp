#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace caltrace {

enum class ErrorCode {
  kInvalidSeed,
  kInvalidInput,
  kUnknownCall,
  kOversizedTransaction,
  kEmptyMempool,
  kForkRejected,
  kInvalidPow,
  kInvalidBlock,
  kMiningTimeout,
  kAlreadyExists,
  kUntrustedCertificate,
  kUnknownOrganisation,
  kUnknownTechnician,
  kForgedParent,
  kForgedTechnician,
  kBrokenChain,
  kLevelViolation,
  kNotFound,
  kAlreadyRevoked,
  kForbidden,
  kInfeasibleSpec,
  kIllConditioned,
  kParse,
  kIo,
};

/// Stable kebab-case name, used in JSON outputs and reverted transactions.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace caltrace
