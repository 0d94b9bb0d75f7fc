#pragma once

// Scaling experiments for trace verification: execution time against the
// number of field devices and against hierarchy depth, with and without
// signature verification. Only the trace_cal_read call is timed.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "caltrace/encoding.hpp"

namespace caltrace {

enum class SignatureMode { kBoth, kOn, kOff };
SignatureMode parse_signature_mode(std::string_view name);

struct BenchOptions {
  int trials = 30;
  /// Discarded before timing.
  int warmup = 3;
  std::uint64_t seed = 0;
  /// Hierarchies whose estimated footprint exceeds this are skipped.
  /// Defaults to 80% of available physical memory.
  std::optional<std::uint64_t> memory_budget_bytes;
  std::function<void(const std::string&)> progress;
};

struct BenchRecord {
  /// "devices" or "levels".
  std::string experiment;
  std::uint64_t n_devices = 0;
  int levels = 0;
  bool signatures_enabled = true;
  int trials = 0;
  double mean_exec_us = 0.0;
  double median_exec_us = 0.0;
  double p95_exec_us = 0.0;
  Timestamp timestamp = 0;
  bool skipped = false;

  friend bool operator==(const BenchRecord&, const BenchRecord&) = default;
};

struct TimingSummary {
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;
};

/// Nearest-rank p95.
TimingSummary summarize(std::vector<double> samples_us);

/// Times trace_cal_read on uniformly sampled leaves of a derived-shape
/// hierarchy for every n. Throws Error(kInvalidInput) for n < 10 or trials < 10.
std::vector<BenchRecord> run_device_scaling(std::span<const std::uint64_t> n_list,
                                            SignatureMode mode, const BenchOptions& options = {});

/// Times trace_cal_read on the deepest device of a single-path hierarchy.
/// Depths must be in 1..64.
std::vector<BenchRecord> run_level_scaling(std::span<const int> levels_list, SignatureMode mode,
                                           const BenchOptions& options = {});

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// OLS of mean_exec_us on levels. Needs >= 4 records; throws
/// Error(kIllConditioned) when all records share one level.
LinearFit fit_linear(std::span<const BenchRecord> records);
LinearFit fit_linear(std::span<const double> x, std::span<const double> y);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

enum class ResultFormat { kCsv, kJson, kPlotData };
ResultFormat parse_result_format(std::string_view name);

std::string render_results(std::span<const BenchRecord> records, ResultFormat format);
/// Throws Error(kInvalidInput) on no records, Error(kIo) on unwritable paths.
void emit_results(std::span<const BenchRecord> records, ResultFormat format,
                  const std::filesystem::path& path);
std::vector<BenchRecord> records_from_csv(const std::string& csv);
std::vector<BenchRecord> records_from_json(const Json& j);
Json to_json(const BenchRecord& record);

struct InvariantCheck {
  bool ok = true;
  std::vector<std::string> failures;
  std::vector<std::string> notes;
};

inline constexpr double kMinSpearman = 0.9;
inline constexpr double kMinRSquared = 0.9;
inline constexpr double kMonotoneTolerance = 0.05;

/// Signature overhead (on >= off at every point) for any run; for level runs
/// additionally Spearman, r^2 and near-monotonicity per signature mode.
InvariantCheck check_invariants(std::span<const BenchRecord> records);

}  // namespace caltrace
