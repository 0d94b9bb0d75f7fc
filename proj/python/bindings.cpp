#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "caltrace/bench.hpp"
#include "caltrace/clock.hpp"
#include "caltrace/economics.hpp"
#include "caltrace/error.hpp"
#include "caltrace/hierarchy.hpp"
#include "caltrace/ledger.hpp"

namespace py = pybind11;
using namespace caltrace;

namespace {

// JSON crosses the boundary as text; the json module does the rest.
// Handles are leaked so nothing is released after interpreter shutdown.
py::object to_py(const Json& j) {
  static py::handle loads = py::object(py::module_::import("json").attr("loads")).release();
  return loads(j.dump());
}

Json from_py(const py::handle& obj) {
  static py::handle dumps = py::object(py::module_::import("json").attr("dumps")).release();
  return Json::parse(dumps(obj).cast<std::string>());
}

Bytes bytes_of(const py::bytes& b) {
  std::string s = b;
  return Bytes(s.begin(), s.end());
}

py::bytes py_bytes(std::span<const std::uint8_t> b) {
  return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
}

/// Owns the clock a Ledger refers to.
class PyLedger {
 public:
  PyLedger(std::unique_ptr<FixedClock> clock, std::unique_ptr<Ledger> ledger)
      : clock_(std::move(clock)), ledger_(std::move(ledger)) {}

  Ledger& get() { return *ledger_; }
  FixedClock& clock() { return *clock_; }

 private:
  std::unique_ptr<FixedClock> clock_;
  std::unique_ptr<Ledger> ledger_;
};

py::exception<Error>* g_error_type = nullptr;

std::vector<py::dict> records_to_py(const std::vector<BenchRecord>& records) {
  std::vector<py::dict> out;
  for (const auto& r : records) out.push_back(to_py(to_json(r)).cast<py::dict>());
  return out;
}

}  // namespace

PYBIND11_MODULE(_caltrace, m) {
  m.doc() = "caltrace core bindings";

  g_error_type = new py::exception<Error>(m, "CaltraceError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object cls = py::reinterpret_borrow<py::object>(g_error_type->ptr());
      py::object exc = cls(py::str(std::string(error_code_name(e.code()))), py::str(e.what()));
      exc.attr("code") = std::string(error_code_name(e.code()));
      PyErr_SetObject(g_error_type->ptr(), exc.ptr());
    }
  });

  // economics
  m.def(
      "econ",
      [](std::uint64_t write_gas, std::uint64_t block_gas_limit, double block_interval_s,
         std::uint64_t checks_per_day, std::optional<std::uint64_t> daily_gas_override) {
        EconParams p;
        p.write_gas = write_gas;
        p.block_gas_limit = block_gas_limit;
        p.block_interval_s = block_interval_s;
        p.checks_per_device_per_day = checks_per_day;
        p.daily_gas_per_device_override = daily_gas_override;
        return to_py(to_json(evaluate(p)));
      },
      py::arg("write_gas") = 200'000, py::arg("block_gas_limit") = 8'000'000,
      py::arg("block_interval_s") = 15.0, py::arg("checks_per_day") = 24,
      py::arg("daily_gas_override") = std::optional<std::uint64_t>(4'000'000),
      "Throughput of persisted trace writes. Pass daily_gas_override=None to compute it.");

  // hierarchy shape
  m.def("derive_levels", &derive_levels, py::arg("n"));
  m.def(
      "derive_orgs",
      [](std::uint64_t n, bool literal_log2) {
        return derive_orgs(n, literal_log2 ? OrgFormula::kLiteralLog2 : OrgFormula::kFromLevels);
      },
      py::arg("n"), py::arg("literal_log2") = false);
  m.def("branching_factor", &branching_factor, py::arg("n"), py::arg("levels"));

  // crypto
  py::class_<KeyPair>(m, "KeyPair")
      .def_property_readonly("public_key", [](const KeyPair& k) { return k.public_key().hex(); })
      .def_property_readonly("key_id", [](const KeyPair& k) { return k.public_key().key_id(); })
      .def_property_readonly("address", [](const KeyPair& k) { return k.public_key().address(); })
      .def_property_readonly("seed", [](const KeyPair& k) { return py_bytes(k.seed()); })
      .def(
          "sign",
          [](const KeyPair& k, const py::bytes& message) {
            Signature s = sign(bytes_of(message), k);
            return py::make_tuple(py_bytes(s.bytes), s.signer_key_id);
          },
          py::arg("message"), "Returns (signature, signer_key_id).");

  m.def(
      "generate_keypair",
      [](std::optional<py::bytes> seed) {
        if (!seed) return generate_keypair();
        Bytes b = bytes_of(*seed);
        return generate_keypair(std::span<const std::uint8_t>(b));
      },
      py::arg("seed") = py::none());
  m.def(
      "verify",
      [](const std::string& public_key_hex, const py::bytes& message, const py::bytes& signature,
         const std::string& signer_key_id) {
        return verify(bytes_of(message), Signature{bytes_of(signature), signer_key_id},
                      PublicKey::from_hex(public_key_hex));
      },
      py::arg("public_key"), py::arg("message"), py::arg("signature"), py::arg("signer_key_id"));

  // generated hierarchies
  py::class_<GeneratedHierarchy>(m, "Hierarchy")
      .def(py::init([](std::uint64_t n, std::optional<int> levels, std::optional<int> n_orgs,
                       std::uint64_t seed, bool signatures, Timestamp now) {
             HierarchySpec spec = default_spec(n, seed, signatures);
             if (levels) spec.levels = *levels;
             if (n_orgs) spec.n_orgs = *n_orgs;
             return generate_hierarchy(spec, now);
           }),
           py::arg("n_devices"), py::arg("levels") = py::none(), py::arg("n_orgs") = py::none(),
           py::arg("seed") = 0, py::arg("signatures") = true, py::arg("now") = kGenerationEpoch)
      .def_property_readonly("spec", [](const GeneratedHierarchy& h) { return to_py(to_json(h.spec)); })
      .def_property_readonly("root_device", [](const GeneratedHierarchy& h) { return h.root_device_id; })
      .def_property_readonly("generated_at", [](const GeneratedHierarchy& h) { return h.generated_at; })
      .def("leaves", &GeneratedHierarchy::leaves)
      .def("devices", &GeneratedHierarchy::all_devices)
      .def(
          "trace_read",
          [](const GeneratedHierarchy& h, const std::string& device, std::optional<Timestamp> now) {
            const auto* r = h.registry.trace_cal_read(device, now.value_or(h.generated_at));
            return r ? to_py(to_json(*r)) : py::object(py::none());
          },
          py::arg("device"), py::arg("now") = py::none(),
          "Root report dict, or None when the trace is invalid.")
      .def(
          "tamper",
          [](GeneratedHierarchy& h, const std::string& target, const std::string& mode) {
            return tamper(h, target, parse_tamper_mode(mode));
          },
          py::arg("target"), py::arg("mode"))
      .def("descendants",
           [](const GeneratedHierarchy& h, const std::string& d) { return h.registry.descendants(d); })
      .def("state_digest",
           [](const GeneratedHierarchy& h) { return to_hex(h.registry.state_digest()); })
      .def("bundle", [](const GeneratedHierarchy& h) { return to_py(export_bundle(h)); });

  m.def(
      "bundle_calls",
      [](const py::dict& bundle) {
        py::list out;
        for (const auto& c : bundle_calls(from_py(bundle))) out.append(py::make_tuple(c.function, to_py(c.args)));
        return out;
      },
      py::arg("bundle"), "(function, args) pairs that rebuild a bundle on a matching ledger.");
  m.def(
      "chain",
      [](int depth, bool signatures, std::uint64_t seed) {
        return generate_chain(depth, signatures, seed);
      },
      py::arg("depth"), py::arg("signatures") = true, py::arg("seed") = 0,
      "Single-path hierarchy of the given depth.");

  // ledger
  py::class_<PyLedger>(m, "Ledger")
      .def_static(
          "create",
          [](const std::string& path, const py::bytes& nmi_seed, int difficulty_bits,
             std::uint64_t block_gas_limit, Timestamp now, const std::string& nmi_id,
             const std::string& nmi_name) {
            auto clock = std::make_unique<FixedClock>(now);
            Bytes seed = bytes_of(nmi_seed);
            KeyPair nmi = generate_keypair(std::span<const std::uint8_t>(seed));
            LedgerConfig cfg;
            cfg.difficulty_bits = difficulty_bits;
            cfg.block_gas_limit = block_gas_limit;
            GenesisParams genesis{nmi_id, nmi_name, make_root_certificate(nmi_id, nmi)};
            auto ledger = Ledger::create(path, cfg, genesis, *clock);
            return std::make_unique<PyLedger>(std::move(clock), std::move(ledger));
          },
          py::arg("path"), py::arg("nmi_seed"), py::arg("difficulty_bits") = 8,
          py::arg("block_gas_limit") = 8'000'000, py::arg("now") = kGenerationEpoch,
          py::arg("nmi_id") = "NPL", py::arg("nmi_name") = "National Physical Laboratory")
      .def_static(
          "for_hierarchy",
          [](const std::string& path, const GeneratedHierarchy& h, int difficulty_bits,
             std::uint64_t block_gas_limit) {
            auto clock = std::make_unique<FixedClock>(h.generated_at);
            LedgerConfig cfg;
            cfg.difficulty_bits = difficulty_bits;
            cfg.block_gas_limit = block_gas_limit;
            cfg.contract.verify_signatures = h.spec.signatures_enabled;
            GenesisParams genesis{h.registry.nmi_org_id(), *h.registry.get_org_name(h.registry.nmi_org_id()),
                                  h.registry.root_certificate()};
            auto ledger = Ledger::create(path, cfg, genesis, *clock);
            return std::make_unique<PyLedger>(std::move(clock), std::move(ledger));
          },
          py::arg("path"), py::arg("hierarchy"), py::arg("difficulty_bits") = 8,
          py::arg("block_gas_limit") = 8'000'000,
          "New chain whose genesis pins the hierarchy's NMI root; the clock starts at its generation time.")
      .def_static(
          "open",
          [](const std::string& path, Timestamp now) {
            auto clock = std::make_unique<FixedClock>(now);
            auto ledger = Ledger::open(path, *clock);
            return std::make_unique<PyLedger>(std::move(clock), std::move(ledger));
          },
          py::arg("path"), py::arg("now") = kGenerationEpoch)
      .def(
          "submit",
          [](PyLedger& l, const std::string& function, const py::dict& args, const std::string& sender) {
            return to_hex(l.get().submit_transaction({function, from_py(args)}, sender));
          },
          py::arg("function"), py::arg("args"), py::arg("sender"))
      .def("commit_pending", [](PyLedger& l) { return l.get().commit_pending(); },
           py::call_guard<py::gil_scoped_release>())
      .def(
          "read",
          [](PyLedger& l, const std::string& function, const py::dict& args) {
            return to_py(l.get().read_state({function, from_py(args)}));
          },
          py::arg("function"), py::arg("args"))
      .def_property_readonly("height", [](PyLedger& l) { return l.get().height(); })
      .def_property_readonly("mempool_size", [](PyLedger& l) { return l.get().mempool_size(); })
      .def_property_readonly("head_hash", [](PyLedger& l) { return to_hex(l.get().head().block_hash); })
      .def("state_digest", [](PyLedger& l) { return to_hex(l.get().state().state_digest()); })
      .def("set_time", [](PyLedger& l, Timestamp t) { l.clock().set(t); })
      .def("validate", [](PyLedger& l) {
        ChainValidation v = l.get().validate_chain();
        py::dict d;
        d["valid"] = v.valid;
        d["first_bad_index"] = v.first_bad_index ? py::cast(*v.first_bad_index) : py::none();
        d["reason"] = v.reason;
        return d;
      });

  m.def(
      "validate_chain_file",
      [](const std::string& path) {
        ChainValidation v = validate_chain_file(path);
        py::dict d;
        d["valid"] = v.valid;
        d["first_bad_index"] = v.first_bad_index ? py::cast(*v.first_bad_index) : py::none();
        d["reason"] = v.reason;
        return d;
      },
      py::arg("path"));

  // benchmarks
  auto bench_opts = [](int trials, std::uint64_t seed) {
    BenchOptions o;
    o.trials = trials;
    o.seed = seed;
    return o;
  };
  m.def(
      "run_device_scaling",
      [bench_opts](std::vector<std::uint64_t> n_list, const std::string& signatures, int trials,
                   std::uint64_t seed) {
        std::vector<BenchRecord> r;
        {
          py::gil_scoped_release release;
          r = run_device_scaling(n_list, parse_signature_mode(signatures), bench_opts(trials, seed));
        }
        return records_to_py(r);
      },
      py::arg("n_list"), py::arg("signatures") = "both", py::arg("trials") = 30, py::arg("seed") = 0);
  m.def(
      "run_level_scaling",
      [bench_opts](std::vector<int> levels, const std::string& signatures, int trials,
                   std::uint64_t seed) {
        std::vector<BenchRecord> r;
        {
          py::gil_scoped_release release;
          r = run_level_scaling(levels, parse_signature_mode(signatures), bench_opts(trials, seed));
        }
        return records_to_py(r);
      },
      py::arg("levels"), py::arg("signatures") = "both", py::arg("trials") = 30, py::arg("seed") = 0);
  m.def(
      "fit_linear",
      [](std::vector<double> x, std::vector<double> y) {
        LinearFit f = fit_linear(x, y);
        py::dict d;
        d["slope"] = f.slope;
        d["intercept"] = f.intercept;
        d["r_squared"] = f.r_squared;
        return d;
      },
      py::arg("x"), py::arg("y"));
  m.def(
      "spearman", [](std::vector<double> x, std::vector<double> y) { return spearman(x, y); },
      py::arg("x"), py::arg("y"));
}
