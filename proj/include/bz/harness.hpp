#pragma once

#include <memory>
#include <string>
#include <vector>

#include "bz/reasoning.hpp"

namespace bz {

struct ScenarioResult {
  bool ok = true;
  std::string trace;                   // NDJSON, byte-stable per run
  std::vector<std::string> failures;   // expectation/golden mismatches
};

/// Executes a scenario file against a fresh in-process engine (simulated
/// clock). Every expect step is asserted; when golden_path is given the trace
/// is byte-compared against it.
ScenarioResult run_scenario(const std::string& path, const std::string& golden_path = "");

/// Reproducible synthetic world + event fixtures: same seed, same bytes.
/// Writes world.json and events.ndjson under out_dir.
void gen_synthetic(uint64_t seed, int n_accessors, int n_resources, int n_events,
                   const std::string& out_dir);

json gen_synthetic_world(uint64_t seed, int n_accessors, int n_resources);
std::vector<json> gen_synthetic_events(uint64_t seed, const json& world, int n_events);

struct BenchReport {
  double decisions_per_sec = 0.0;
  double p50_ms = 0.0;
  double p99_ms = 0.0;
  uint64_t long_store_reads = 0;
  std::size_t decisions = 0;
  std::size_t rules = 0;
  std::vector<double> samples_ms;  // raw latency dump for recomputation

  json to_json(bool include_samples = false) const;
};

/// In-process authorize load against synthetic fixtures with n compiled rules.
/// duration_ms > 0 runs until the wall clock elapses instead of a fixed count;
/// issuers > 1 drives the engine from that many concurrent threads.
BenchReport bench(int n_policies, int n_decisions, uint64_t seed = 7,
                  int64_t duration_ms = 0, int issuers = 1);

/// Generated rule set used by bench (exposed so tests can reuse it).
std::string gen_bench_policy(int n_policies);

/// Feeds events and embedded authorize requests from an NDJSON file in order;
/// returns the engine trace. Lines with a "kind" field are events, lines with
/// accessor/resource/operation are requests.
std::string replay_log(const std::string& log_path, Engine& engine);

}  // namespace bz
