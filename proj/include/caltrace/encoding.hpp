#pragma once

// Byte strings, hashing and the canonical serialization shared by every
// signed or hashed structure.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace caltrace {

using Bytes = std::vector<std::uint8_t>;
using Hash256 = std::array<std::uint8_t, 32>;
using Json = nlohmann::json;

/// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

Hash256 sha256(std::span<const std::uint8_t> data);
Hash256 sha256(std::string_view data);

/// Lowercase hex.
std::string to_hex(std::span<const std::uint8_t> data);

/// Strict decoding: even length, lowercase only. Throws Error(kParse).
Bytes from_hex(std::string_view hex);
Hash256 hash_from_hex(std::string_view hex);

inline constexpr Hash256 kZeroHash{};

/// Number of leading zero bits, 0..256.
int leading_zero_bits(const Hash256& hash);

/// Canonical form: object keys sorted, no insignificant whitespace. nlohmann's
/// default object type is an ordered std::map, so dump() is already canonical.
std::string canonical_dump(const Json& value);
Bytes canonical_bytes(const Json& value);

/// "YYYY-MM-DDTHH:MM:SSZ".
std::string format_iso8601(Timestamp ts);
/// Accepts exactly the format produced by format_iso8601. Throws Error(kParse).
Timestamp parse_iso8601(std::string_view text);

}  // namespace caltrace
