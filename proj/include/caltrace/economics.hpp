#pragma once

// Analytic throughput model for persisting trace results on a gas-limited chain.

#include <cstdint>
#include <optional>
#include <string>

#include "caltrace/encoding.hpp"

namespace caltrace {

struct EconParams {
  std::uint64_t write_gas = 200'000;
  std::uint64_t block_gas_limit = 8'000'000;
  double block_interval_s = 15.0;
  /// Hourly verification.
  std::uint64_t checks_per_device_per_day = 24;
  std::optional<std::uint64_t> daily_gas_per_device_override;

  /// Throws Error(kInvalidInput) unless every value is strictly positive.
  void validate() const;

  /// write 200,000; daily override 4,000,000; limit 8,000,000; 15 s blocks.
  static EconParams published();
};

std::uint64_t daily_gas_per_device(const EconParams& p);

struct Capacity {
  std::uint64_t value = 0;
  /// Set when a precondition failed and the value was clamped to zero.
  std::optional<std::string> warning;
};

/// floor(block_gas_limit / daily_gas_per_device); zero with a warning when a
/// single device's daily gas does not fit in one block.
Capacity devices_per_block(const EconParams& p);
std::uint64_t blocks_per_day(const EconParams& p);
/// blocks_per_day * devices_per_block.
std::uint64_t writes_per_day(const EconParams& p);
/// floor(block_gas_limit / write_gas).
std::uint64_t per_block_write_capacity(const EconParams& p);

struct EconReport {
  EconParams params;
  std::uint64_t daily_gas_per_device = 0;
  Capacity devices_per_block;
  std::uint64_t blocks_per_day = 0;
  std::uint64_t writes_per_day = 0;
  std::uint64_t per_block_write_capacity = 0;
};

EconReport evaluate(const EconParams& p);
Json to_json(const EconReport& report);
std::string format_text(const EconReport& report);
std::string format_csv(const EconReport& report);

}  // namespace caltrace
