#include "caltrace/encoding.hpp"

#include <sodium.h>

#include <bit>
#include <cstdio>
#include <ctime>

#include "caltrace/error.hpp"

namespace caltrace {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidSeed: return "invalid-seed";
    case ErrorCode::kInvalidInput: return "invalid-input";
    case ErrorCode::kUnknownCall: return "unknown-call";
    case ErrorCode::kOversizedTransaction: return "oversized-transaction";
    case ErrorCode::kEmptyMempool: return "empty-mempool";
    case ErrorCode::kForkRejected: return "fork-rejected";
    case ErrorCode::kInvalidPow: return "invalid-pow";
    case ErrorCode::kInvalidBlock: return "invalid-block";
    case ErrorCode::kMiningTimeout: return "mining-timeout";
    case ErrorCode::kAlreadyExists: return "already-exists";
    case ErrorCode::kUntrustedCertificate: return "untrusted-certificate";
    case ErrorCode::kUnknownOrganisation: return "unknown-organisation";
    case ErrorCode::kUnknownTechnician: return "unknown-technician";
    case ErrorCode::kForgedParent: return "forged-parent";
    case ErrorCode::kForgedTechnician: return "forged-technician";
    case ErrorCode::kBrokenChain: return "broken-chain";
    case ErrorCode::kLevelViolation: return "level-violation";
    case ErrorCode::kNotFound: return "not-found";
    case ErrorCode::kAlreadyRevoked: return "already-revoked";
    case ErrorCode::kForbidden: return "forbidden";
    case ErrorCode::kInfeasibleSpec: return "infeasible-spec";
    case ErrorCode::kIllConditioned: return "ill-conditioned";
    case ErrorCode::kParse: return "parse-error";
    case ErrorCode::kIo: return "io-error";
  }
  return "unknown";
}

namespace {

void ensure_sodium() {
  static const bool ok = [] { return sodium_init() >= 0; }();
  if (!ok) throw std::runtime_error("libsodium initialisation failed");
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

}  // namespace

Hash256 sha256(std::span<const std::uint8_t> data) {
  ensure_sodium();
  Hash256 out;
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

Hash256 sha256(std::string_view data) {
  return sha256(std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

std::string to_hex(std::span<const std::uint8_t> data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(ErrorCode::kParse, "hex string has odd length");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::kParse, "invalid hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

Hash256 hash_from_hex(std::string_view hex) {
  Bytes raw = from_hex(hex);
  if (raw.size() != 32) throw Error(ErrorCode::kParse, "expected a 32-byte hash");
  Hash256 out;
  std::copy(raw.begin(), raw.end(), out.begin());
  return out;
}

int leading_zero_bits(const Hash256& hash) {
  int bits = 0;
  for (auto b : hash) {
    if (b == 0) {
      bits += 8;
      continue;
    }
    bits += std::countl_zero(b);
    break;
  }
  return bits;
}

std::string canonical_dump(const Json& value) { return value.dump(); }

Bytes canonical_bytes(const Json& value) {
  std::string s = value.dump();
  return Bytes(s.begin(), s.end());
}

std::string format_iso8601(Timestamp ts) {
  std::time_t t = static_cast<std::time_t>(ts);
  std::tm tm{};
  if (gmtime_r(&t, &tm) == nullptr) throw Error(ErrorCode::kInvalidInput, "timestamp out of range");
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
  return buf;
}

Timestamp parse_iso8601(std::string_view text) {
  if (text.size() != 20 || text[4] != '-' || text[7] != '-' || text[10] != 'T' ||
      text[13] != ':' || text[16] != ':' || text[19] != 'Z') {
    throw Error(ErrorCode::kParse, "timestamp must be YYYY-MM-DDTHH:MM:SSZ");
  }
  auto field = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (text[i] < '0' || text[i] > '9') throw Error(ErrorCode::kParse, "bad timestamp digit");
      v = v * 10 + (text[i] - '0');
    }
    return v;
  };
  std::tm tm{};
  tm.tm_year = field(0, 4) - 1900;
  tm.tm_mon = field(5, 2) - 1;
  tm.tm_mday = field(8, 2);
  tm.tm_hour = field(11, 2);
  tm.tm_min = field(14, 2);
  tm.tm_sec = field(17, 2);
  Timestamp ts = timegm(&tm);
  // Reject normalised-away dates like Feb 30.
  if (format_iso8601(ts) != text) throw Error(ErrorCode::kParse, "timestamp out of range");
  return ts;
}

}  // namespace caltrace
