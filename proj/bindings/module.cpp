// Python bindings. The API is deliberately JSON-in/JSON-out: callers hand over
// strings, the core keeps full ownership of parsing and ordering so traces
// stay byte-identical with the C++ surface.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bz/harness.hpp"
#include "bz/policy.hpp"
#include "bz/reasoning.hpp"

namespace py = pybind11;
using bz::json;

namespace {

std::string fmt_policy(const std::string& text) {
  return bz::canonical_print(bz::parse_policy(text));
}

std::string lint_policy(const std::string& text) {
  auto diags = bz::lint(bz::parse_policy(text), bz::AttributeSchema::standard());
  json out = json::array();
  for (const auto& d : diags)
    out.push_back({{"code", d.code},
                   {"rule", d.rule},
                   {"message", d.message},
                   {"line", d.line},
                   {"col", d.col}});
  return out.dump();
}

class PyEngine {
 public:
  PyEngine(const std::string& config_json, int64_t sim_start_ms) {
    bz::EngineConfig cfg;
    if (!config_json.empty()) cfg = bz::EngineConfig::from_json(json::parse(config_json));
    std::shared_ptr<bz::Clock> clock;
    if (cfg.clock_mode == "real")
      clock = std::make_shared<bz::RealClock>();
    else
      clock = std::make_shared<bz::SimClock>(sim_start_ms);
    engine_ = std::make_unique<bz::Engine>(cfg, clock);
  }

  uint64_t load_world(const std::string& doc) {
    return engine_->load_world(json::parse(doc));
  }
  uint64_t load_policy(const std::string& text) { return engine_->load_policy(text); }

  std::string authorize(const std::string& request_json) {
    bz::Request r = bz::request_from_json(json::parse(request_json));
    return engine_->authorize(r).to_json().dump();
  }

  void ingest(const std::string& event_json, bool run_detectors) {
    engine_->ingest(bz::event_from_json(json::parse(event_json)), run_detectors);
  }

  std::string respond_challenge(const std::string& challenge_id,
                                const std::map<std::string, std::string>& payload) {
    return bz::to_string(engine_->respond_challenge(challenge_id, payload));
  }

  void lift_containment(const std::string& id, const std::string& authority) {
    engine_->lift_containment(id, bz::lift_authority_from(authority));
  }

  std::string containments(const std::string& accessor_id) {
    json out = json::array();
    for (const bz::Containment* c : engine_->challenges().containments_for(accessor_id))
      out.push_back(bz::containment_to_json(*c));
    return out.dump();
  }

  std::string trace() const { return engine_->trace_dump(); }
  uint64_t long_store_reads() const { return engine_->intake().long_store_reads(); }

 private:
  std::unique_ptr<bz::Engine> engine_;
};

}  // namespace

PYBIND11_MODULE(_bzcore, m) {
  m.doc() = "Deterministic zero-trust authorization engine";

  m.def("fmt_policy", &fmt_policy, py::arg("text"),
        "Parse a policy and return its canonical form.");
  m.def("lint_policy", &lint_policy, py::arg("text"),
        "Parse and lint a policy; returns diagnostics as a JSON array string.");
  m.def(
      "gen_world",
      [](uint64_t seed, int accessors, int resources) {
        return bz::gen_synthetic_world(seed, accessors, resources).dump();
      },
      py::arg("seed"), py::arg("accessors"), py::arg("resources"));
  m.def(
      "run_scenario",
      [](const std::string& path, const std::string& golden) {
        bz::ScenarioResult r = bz::run_scenario(path, golden);
        return json{{"ok", r.ok}, {"trace", r.trace}, {"failures", r.failures}}.dump();
      },
      py::arg("path"), py::arg("golden") = std::string());

  py::register_exception<bz::Error>(m, "EngineError");

  py::class_<PyEngine>(m, "Engine")
      .def(py::init<const std::string&, int64_t>(), py::arg("config_json") = std::string(),
           py::arg("sim_start_ms") = int64_t{0})
      .def("load_world", &PyEngine::load_world, py::arg("doc_json"))
      .def("load_policy", &PyEngine::load_policy, py::arg("text"))
      .def("authorize", &PyEngine::authorize, py::arg("request_json"))
      .def("ingest", &PyEngine::ingest, py::arg("event_json"),
           py::arg("run_detectors") = true)
      .def("respond_challenge", &PyEngine::respond_challenge, py::arg("challenge_id"),
           py::arg("payload"))
      .def("lift_containment", &PyEngine::lift_containment, py::arg("containment_id"),
           py::arg("authority") = "manual")
      .def("containments", &PyEngine::containments, py::arg("accessor_id"))
      .def("trace", &PyEngine::trace)
      .def("long_store_reads", &PyEngine::long_store_reads);
}
