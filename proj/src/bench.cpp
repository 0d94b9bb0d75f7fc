#include "caltrace/bench.hpp"

#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "caltrace/clock.hpp"
#include "caltrace/error.hpp"
#include "caltrace/hierarchy.hpp"

namespace caltrace {

namespace {

// Rough per-device footprint of a generated hierarchy (report, indices, keys).
constexpr std::uint64_t kBytesPerDeviceSigned = 3072;
constexpr std::uint64_t kBytesPerDeviceUnsigned = 1536;

std::uint64_t available_memory() {
  long pages = sysconf(_SC_AVPHYS_PAGES);
  long page_size = sysconf(_SC_PAGESIZE);
  if (pages <= 0 || page_size <= 0) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(pages) * static_cast<std::uint64_t>(page_size);
}

std::vector<bool> modes_of(SignatureMode mode) {
  switch (mode) {
    case SignatureMode::kOn: return {true};
    case SignatureMode::kOff: return {false};
    case SignatureMode::kBoth: return {true, false};
  }
  return {};
}

void check_options(const BenchOptions& o) {
  if (o.trials < 10) throw Error(ErrorCode::kInvalidInput, "benchmarks need at least 10 trials");
  if (o.warmup < 3) throw Error(ErrorCode::kInvalidInput, "benchmarks need at least 3 warm-up runs");
}

/// Times `devices[pick()]` reads, returning microseconds per trial.
template <typename Pick>
std::vector<double> time_reads(const Registry& registry, Timestamp now, int warmup, int trials,
                               Pick pick) {
  using Clock = std::chrono::steady_clock;
  std::vector<double> samples;
  samples.reserve(trials);
  for (int i = 0; i < warmup + trials; ++i) {
    const std::string& device = pick();
    auto start = Clock::now();
    const CalibrationReport* root = registry.trace_cal_read(device, now);
    auto stop = Clock::now();
    if (root == nullptr) {
      throw Error(ErrorCode::kBrokenChain, "generated device failed verification: " + device);
    }
    if (i >= warmup) samples.push_back(std::chrono::duration<double, std::micro>(stop - start).count());
  }
  return samples;
}

BenchRecord make_record(std::string experiment, std::uint64_t n, int levels, bool sigs, int trials,
                        const TimingSummary& t) {
  BenchRecord r;
  r.experiment = std::move(experiment);
  r.n_devices = n;
  r.levels = levels;
  r.signatures_enabled = sigs;
  r.trials = trials;
  r.mean_exec_us = t.mean;
  r.median_exec_us = t.median;
  r.p95_exec_us = t.p95;
  r.timestamp = SystemClock().now();
  return r;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kParse, "bad number in results: " + std::string(s));
  }
  return v;
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

constexpr std::string_view kCsvHeader =
    "experiment,n_devices,levels,signatures_enabled,trials,mean_exec_us,median_exec_us,"
    "p95_exec_us,timestamp,skipped";

}  // namespace

SignatureMode parse_signature_mode(std::string_view name) {
  if (name == "both") return SignatureMode::kBoth;
  if (name == "on") return SignatureMode::kOn;
  if (name == "off") return SignatureMode::kOff;
  throw Error(ErrorCode::kInvalidInput, "signature mode must be both|on|off");
}

TimingSummary summarize(std::vector<double> samples) {
  if (samples.empty()) throw Error(ErrorCode::kInvalidInput, "no samples");
  std::sort(samples.begin(), samples.end());
  TimingSummary t;
  t.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  const std::size_t n = samples.size();
  t.median = n % 2 ? samples[n / 2] : (samples[n / 2 - 1] + samples[n / 2]) / 2.0;
  std::size_t rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  t.p95 = samples[std::max<std::size_t>(rank, 1) - 1];
  return t;
}

std::vector<BenchRecord> run_device_scaling(std::span<const std::uint64_t> n_list,
                                            SignatureMode mode, const BenchOptions& options) {
  check_options(options);
  for (auto n : n_list) {
    if (n < 10) throw Error(ErrorCode::kInvalidInput, "device scaling needs n >= 10");
  }
  const std::uint64_t budget = options.memory_budget_bytes.value_or(available_memory() / 10 * 8);
  std::vector<BenchRecord> out;
  for (auto n : n_list) {
    for (bool sigs : modes_of(mode)) {
      HierarchySpec spec = default_spec(n, options.seed, sigs);
      const std::uint64_t per = sigs ? kBytesPerDeviceSigned : kBytesPerDeviceUnsigned;
      if (n > budget / per) {
        BenchRecord r = make_record("devices", n, spec.levels, sigs, 0, {});
        r.skipped = true;
        if (options.progress) options.progress("skip n=" + std::to_string(n) + " (memory)");
        out.push_back(r);
        continue;
      }
      if (options.progress) {
        options.progress("devices n=" + std::to_string(n) + " sigs=" + (sigs ? "on" : "off"));
      }
      GeneratedHierarchy h = generate_hierarchy(spec);
      const auto& leaves = h.leaves();
      std::mt19937_64 rng(options.seed ^ n);
      auto pick = [&]() -> const std::string& { return leaves[rng() % leaves.size()]; };
      auto samples = time_reads(h.registry, h.generated_at, options.warmup, options.trials, pick);
      out.push_back(make_record("devices", n, spec.levels, sigs, options.trials, summarize(samples)));
    }
  }
  return out;
}

std::vector<BenchRecord> run_level_scaling(std::span<const int> levels_list, SignatureMode mode,
                                           const BenchOptions& options) {
  check_options(options);
  for (int levels : levels_list) {
    if (levels < 1 || levels > 64) throw Error(ErrorCode::kInvalidInput, "levels must be in 1..64");
  }
  std::vector<BenchRecord> out;
  for (int levels : levels_list) {
    for (bool sigs : modes_of(mode)) {
      if (options.progress) {
        options.progress("levels=" + std::to_string(levels) + " sigs=" + (sigs ? "on" : "off"));
      }
      GeneratedHierarchy h = generate_chain(levels, sigs, options.seed);
      const std::string& deepest = h.leaves().front();
      auto pick = [&]() -> const std::string& { return deepest; };
      auto samples = time_reads(h.registry, h.generated_at, options.warmup, options.trials, pick);
      out.push_back(make_record("levels", 1, levels, sigs, options.trials, summarize(samples)));
    }
  }
  return out;
}

LinearFit fit_linear(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kInvalidInput, "x and y differ in length");
  if (x.size() < 4) throw Error(ErrorCode::kInvalidInput, "linear fit needs at least 4 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw Error(ErrorCode::kIllConditioned, "all points share one x value");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double e = y[i] - (fit.slope * x[i] + fit.intercept);
    ss_res += e * e;
  }
  // A constant response is fitted exactly by a flat line.
  fit.r_squared = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
  return fit;
}

LinearFit fit_linear(std::span<const BenchRecord> records) {
  std::vector<double> x, y;
  for (const auto& r : records) {
    if (r.skipped) continue;
    x.push_back(static_cast<double>(r.levels));
    y.push_back(r.mean_exec_us);
  }
  return fit_linear(x, y);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorCode::kInvalidInput, "spearman needs two equal-length series of >= 2 points");
  }
  auto rx = ranks(x);
  auto ry = ranks(y);
  // Pearson correlation of the ranks handles ties correctly.
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

ResultFormat parse_result_format(std::string_view name) {
  if (name == "csv") return ResultFormat::kCsv;
  if (name == "json") return ResultFormat::kJson;
  if (name == "plotdata") return ResultFormat::kPlotData;
  throw Error(ErrorCode::kInvalidInput, "format must be csv|json|plotdata");
}

Json to_json(const BenchRecord& r) {
  return Json{{"experiment", r.experiment},
              {"levels", r.levels},
              {"mean_exec_us", r.mean_exec_us},
              {"median_exec_us", r.median_exec_us},
              {"n_devices", r.n_devices},
              {"p95_exec_us", r.p95_exec_us},
              {"signatures_enabled", r.signatures_enabled},
              {"skipped", r.skipped},
              {"timestamp", r.timestamp},
              {"trials", r.trials}};
}

std::vector<BenchRecord> records_from_json(const Json& j) {
  std::vector<BenchRecord> out;
  for (const auto& e : j.at("records")) {
    BenchRecord r;
    r.experiment = e.at("experiment").get<std::string>();
    r.levels = e.at("levels").get<int>();
    r.mean_exec_us = e.at("mean_exec_us").get<double>();
    r.median_exec_us = e.at("median_exec_us").get<double>();
    r.n_devices = e.at("n_devices").get<std::uint64_t>();
    r.p95_exec_us = e.at("p95_exec_us").get<double>();
    r.signatures_enabled = e.at("signatures_enabled").get<bool>();
    r.skipped = e.at("skipped").get<bool>();
    r.timestamp = e.at("timestamp").get<Timestamp>();
    r.trials = e.at("trials").get<int>();
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<BenchRecord> records_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw Error(ErrorCode::kParse, "unexpected CSV header");
  }
  std::vector<BenchRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    for (std::string col; std::getline(ls, col, ',');) cols.push_back(col);
    if (cols.size() != 10) throw Error(ErrorCode::kParse, "CSV row needs 10 columns");
    BenchRecord r;
    r.experiment = cols[0];
    r.n_devices = std::stoull(cols[1]);
    r.levels = std::stoi(cols[2]);
    r.signatures_enabled = cols[3] == "true";
    r.trials = std::stoi(cols[4]);
    r.mean_exec_us = parse_double(cols[5]);
    r.median_exec_us = parse_double(cols[6]);
    r.p95_exec_us = parse_double(cols[7]);
    r.timestamp = std::stoll(cols[8]);
    r.skipped = cols[9] == "true";
    out.push_back(std::move(r));
  }
  return out;
}

std::string render_results(std::span<const BenchRecord> records, ResultFormat format) {
  if (records.empty()) throw Error(ErrorCode::kInvalidInput, "no benchmark records to emit");
  std::ostringstream out;
  switch (format) {
    case ResultFormat::kCsv:
      out << kCsvHeader << "\n";
      for (const auto& r : records) {
        out << r.experiment << ',' << r.n_devices << ',' << r.levels << ','
            << (r.signatures_enabled ? "true" : "false") << ',' << r.trials << ','
            << format_double(r.mean_exec_us) << ',' << format_double(r.median_exec_us) << ','
            << format_double(r.p95_exec_us) << ',' << r.timestamp << ','
            << (r.skipped ? "true" : "false") << "\n";
      }
      break;
    case ResultFormat::kJson: {
      Json j{{"records", Json::array()}};
      for (const auto& r : records) j["records"].push_back(to_json(r));
      out << j.dump(2) << "\n";
      break;
    }
    case ResultFormat::kPlotData: {
      // x is the level count for depth runs and the device count otherwise.
      std::map<std::uint64_t, std::pair<std::optional<double>, std::optional<double>>> rows;
      for (const auto& r : records) {
        if (r.skipped) continue;
        std::uint64_t x = r.experiment == "levels" ? static_cast<std::uint64_t>(r.levels) : r.n_devices;
        (r.signatures_enabled ? rows[x].first : rows[x].second) = r.mean_exec_us;
      }
      out << "# x y_sigs_on y_sigs_off\n";
      for (const auto& [x, ys] : rows) {
        out << x << ' ' << (ys.first ? format_double(*ys.first) : "nan") << ' '
            << (ys.second ? format_double(*ys.second) : "nan") << "\n";
      }
      break;
    }
  }
  return out.str();
}

void emit_results(std::span<const BenchRecord> records, ResultFormat format,
                  const std::filesystem::path& path) {
  std::string text = render_results(records, format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out.flush()) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

InvariantCheck check_invariants(std::span<const BenchRecord> records) {
  InvariantCheck check;
  auto fail = [&](std::string msg) {
    check.ok = false;
    check.failures.push_back(std::move(msg));
  };

  // Signature overhead at every shared x.
  std::map<std::pair<std::string, std::uint64_t>, std::pair<double, double>> paired;
  std::map<std::pair<std::string, std::uint64_t>, int> seen;
  for (const auto& r : records) {
    if (r.skipped) continue;
    std::uint64_t x = r.experiment == "levels" ? static_cast<std::uint64_t>(r.levels) : r.n_devices;
    auto key = std::make_pair(r.experiment, x);
    (r.signatures_enabled ? paired[key].first : paired[key].second) = r.mean_exec_us;
    seen[key] |= r.signatures_enabled ? 1 : 2;
  }
  for (const auto& [key, mask] : seen) {
    if (mask != 3) continue;
    const auto& [on, off] = paired[key];
    if (on < off) {
      fail("signature overhead: " + key.first + " x=" + std::to_string(key.second) + " on " +
           format_double(on) + "us < off " + format_double(off) + "us");
    }
  }

  for (bool sigs : {true, false}) {
    std::vector<const BenchRecord*> series;
    for (const auto& r : records) {
      if (r.experiment == "levels" && !r.skipped && r.signatures_enabled == sigs) series.push_back(&r);
    }
    if (series.empty()) continue;
    std::sort(series.begin(), series.end(), [](auto a, auto b) { return a->levels < b->levels; });
    const std::string tag = sigs ? "sigs on" : "sigs off";
    std::vector<double> x, y;
    for (auto* r : series) {
      x.push_back(r->levels);
      y.push_back(r->mean_exec_us);
    }
    for (std::size_t i = 1; i < y.size(); ++i) {
      if (y[i] < y[i - 1] * (1.0 - kMonotoneTolerance)) {
        fail(tag + ": time drops from " + std::to_string(series[i - 1]->levels) + " to " +
             std::to_string(series[i]->levels) + " levels beyond tolerance");
      }
    }
    if (series.size() >= 8) {
      double rho = spearman(x, y);
      check.notes.push_back(tag + ": spearman " + format_double(rho));
      if (rho < kMinSpearman) fail(tag + ": spearman " + format_double(rho) + " < 0.9");
    }
    if (series.size() >= 4) {
      LinearFit fit = fit_linear(x, y);
      check.notes.push_back(tag + ": slope " + format_double(fit.slope) + " us/level, r^2 " +
                            format_double(fit.r_squared));
      if (fit.r_squared < kMinRSquared) fail(tag + ": r^2 " + format_double(fit.r_squared) + " < 0.9");
      if (fit.slope <= 0.0) fail(tag + ": non-positive slope");
    }
  }
  return check;
}

}  // namespace caltrace
