#include "caltrace/economics.hpp"

#include <cmath>
#include <sstream>

#include "caltrace/error.hpp"

namespace caltrace {

void EconParams::validate() const {
  if (write_gas == 0 || block_gas_limit == 0 || !(block_interval_s > 0.0) ||
      !std::isfinite(block_interval_s) || checks_per_device_per_day == 0 ||
      (daily_gas_per_device_override && *daily_gas_per_device_override == 0)) {
    throw Error(ErrorCode::kInvalidInput, "economics parameters must be strictly positive");
  }
}

EconParams EconParams::published() {
  EconParams p;
  p.daily_gas_per_device_override = 4'000'000;
  return p;
}

std::uint64_t daily_gas_per_device(const EconParams& p) {
  p.validate();
  return p.daily_gas_per_device_override.value_or(p.write_gas * p.checks_per_device_per_day);
}

Capacity devices_per_block(const EconParams& p) {
  const std::uint64_t daily = daily_gas_per_device(p);
  if (daily > p.block_gas_limit) {
    return {0, "daily gas per device (" + std::to_string(daily) + ") exceeds the block gas limit (" +
                   std::to_string(p.block_gas_limit) + ")"};
  }
  return {p.block_gas_limit / daily, std::nullopt};
}

std::uint64_t blocks_per_day(const EconParams& p) {
  p.validate();
  return static_cast<std::uint64_t>(std::floor(86400.0 / p.block_interval_s));
}

std::uint64_t writes_per_day(const EconParams& p) {
  return blocks_per_day(p) * devices_per_block(p).value;
}

std::uint64_t per_block_write_capacity(const EconParams& p) {
  p.validate();
  return p.block_gas_limit / p.write_gas;
}

EconReport evaluate(const EconParams& p) {
  EconReport r;
  r.params = p;
  r.daily_gas_per_device = daily_gas_per_device(p);
  r.devices_per_block = devices_per_block(p);
  r.blocks_per_day = blocks_per_day(p);
  r.writes_per_day = r.blocks_per_day * r.devices_per_block.value;
  r.per_block_write_capacity = per_block_write_capacity(p);
  return r;
}

Json to_json(const EconReport& r) {
  Json j{{"block_gas_limit", r.params.block_gas_limit},
         {"block_interval_s", r.params.block_interval_s},
         {"blocks_per_day", r.blocks_per_day},
         {"checks_per_device_per_day", r.params.checks_per_device_per_day},
         {"daily_gas_per_device", r.daily_gas_per_device},
         {"devices_per_block", r.devices_per_block.value},
         {"per_block_write_capacity", r.per_block_write_capacity},
         {"write_gas", r.params.write_gas},
         {"writes_per_day", r.writes_per_day}};
  j["daily_gas_per_device_override"] = r.params.daily_gas_per_device_override
                                           ? Json(*r.params.daily_gas_per_device_override)
                                           : Json(nullptr);
  j["warning"] = r.devices_per_block.warning ? Json(*r.devices_per_block.warning) : Json(nullptr);
  return j;
}

std::string format_text(const EconReport& r) {
  std::ostringstream out;
  out << "quantity                   value\n";
  out << "daily_gas_per_device       " << r.daily_gas_per_device << "\n";
  out << "devices_per_block          " << r.devices_per_block.value << "\n";
  out << "writes_per_day             " << r.writes_per_day << "\n";
  out << "per_block_write_capacity   " << r.per_block_write_capacity << "\n";
  out << "blocks_per_day             " << r.blocks_per_day << "\n";
  if (r.devices_per_block.warning) out << "warning: " << *r.devices_per_block.warning << "\n";
  return out.str();
}

std::string format_csv(const EconReport& r) {
  std::ostringstream out;
  out << "quantity,value\n";
  out << "daily_gas_per_device," << r.daily_gas_per_device << "\n";
  out << "devices_per_block," << r.devices_per_block.value << "\n";
  out << "writes_per_day," << r.writes_per_day << "\n";
  out << "per_block_write_capacity," << r.per_block_write_capacity << "\n";
  out << "blocks_per_day," << r.blocks_per_day << "\n";
  return out.str();
}

}  // namespace caltrace
