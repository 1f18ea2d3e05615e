#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <httplib.h>

#include "bz/harness.hpp"
#include "bz/policy.hpp"
#include "bz/service.hpp"

namespace {

using bz::json;

int cmd_policy_lint(const std::string& file) {
  bz::PolicySet ps;
  try {
    ps = bz::parse_policy(bz::read_file(file));
  } catch (const bz::Error& e) {
    std::cerr << file << ": " << e.code() << ": " << e.what() << "\n";
    return 1;
  }
  auto diags = bz::lint(ps, bz::AttributeSchema::standard());
  for (const auto& d : diags)
    std::cout << file << ":" << d.line << ":" << d.col << ": [" << d.code << "] rule \""
              << d.rule << "\": " << d.message << "\n";
  bool fatal = false;
  for (const auto& d : diags)
    if (d.code == "unknown-attribute" || d.code == "type-mismatch") fatal = true;
  if (!fatal)
    std::cout << file << ": " << ps.rules.size() << " rule(s), "
              << (diags.empty() ? "clean" : "warnings only") << "\n";
  return fatal ? 1 : 0;
}

int cmd_policy_fmt(const std::string& file, bool in_place) {
  std::string formatted;
  try {
    formatted = bz::canonical_print(bz::parse_policy(bz::read_file(file)));
  } catch (const bz::Error& e) {
    std::cerr << file << ": " << e.code() << ": " << e.what() << "\n";
    return 1;
  }
  if (in_place) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out << formatted;
  } else {
    std::cout << formatted;
  }
  return 0;
}

std::string env_or(const char* key, const std::string& fallback) {
  const char* v = std::getenv(key);
  return v ? v : fallback;
}

// Same workload as the in-process bench, but every decision goes over HTTP
// against a service bound to an ephemeral port. Measures the wire round trip.
bz::BenchReport bench_wire(int n_policies, int n_decisions, uint64_t seed,
                           int64_t duration_ms) {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() /
                 ("bz-bench-" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  json world = bz::gen_synthetic_world(seed, 50, 100);
  {
    std::ofstream out(dir / "world.json", std::ios::binary);
    out << world.dump() << "\n";
  }
  {
    std::ofstream out(dir / "bench.bzp", std::ios::binary);
    out << bz::gen_bench_policy(n_policies);
  }

  bz::ServiceConfig cfg;
  cfg.listen_addr = "127.0.0.1:0";
  cfg.world_path = (dir / "world.json").string();
  cfg.policy_path = (dir / "bench.bzp").string();
  cfg.clock_mode = "sim";
  bz::DecisionService svc(std::move(cfg));
  int port = svc.start();

  std::vector<std::string> accessors, resources;
  for (const auto& a : world.at("accessors"))
    if (a.at("kind") == "human") accessors.push_back(a.at("id"));
  for (const auto& r : world.at("resources")) resources.push_back(r.at("id"));
  static const char* kOps[] = {"read", "write", "bulk_export", "admin_op"};

  httplib::Client cli("127.0.0.1", port);
  std::mt19937_64 rng(seed);
  bz::BenchReport report;
  report.rules = static_cast<std::size_t>(n_policies);
  auto t0 = std::chrono::steady_clock::now();
  auto deadline = t0 + std::chrono::milliseconds(duration_ms);
  for (int i = 0;; ++i) {
    if (duration_ms > 0) {
      if (std::chrono::steady_clock::now() >= deadline) break;
    } else if (i >= n_decisions) {
      break;
    }
    json body = {{"id", "wire-" + std::to_string(i)},
                 {"accessor_id", accessors[rng() % accessors.size()]},
                 {"resource_id", resources[rng() % resources.size()]},
                 {"operation", kOps[rng() % 4]}};
    auto s0 = std::chrono::steady_clock::now();
    auto res = cli.Post("/v1/authorize", body.dump(), "application/json");
    auto s1 = std::chrono::steady_clock::now();
    if (!res || res->status != 200) throw bz::Error("bad-request", "wire bench request failed");
    report.samples_ms.push_back(std::chrono::duration<double, std::milli>(s1 - s0).count());
  }
  auto t1 = std::chrono::steady_clock::now();
  report.decisions = report.samples_ms.size();
  double elapsed_s = std::chrono::duration<double>(t1 - t0).count();
  report.decisions_per_sec =
      elapsed_s > 0 ? static_cast<double>(report.decisions) / elapsed_s : 0.0;
  report.long_store_reads = svc.engine().intake().long_store_reads();
  std::vector<double> sorted = report.samples_ms;
  std::sort(sorted.begin(), sorted.end());
  if (!sorted.empty()) {
    report.p50_ms = sorted[sorted.size() / 2];
    report.p99_ms = sorted[std::min(sorted.size() - 1,
                                    static_cast<std::size_t>(sorted.size() * 0.99))];
  }
  svc.stop();
  fs::remove_all(dir);
  return report;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Beyond Zero policy decision point"};
  app.require_subcommand(1);

  // bz policy lint|fmt
  auto* policy = app.add_subcommand("policy", "Lint and format policy files");
  policy->require_subcommand(1);
  std::string policy_file;
  bool fmt_in_place = false;
  auto* lint_cmd = policy->add_subcommand("lint", "Check a policy file");
  lint_cmd->add_option("file", policy_file)->required();
  auto* fmt_cmd = policy->add_subcommand("fmt", "Canonically format a policy file");
  fmt_cmd->add_option("file", policy_file)->required();
  fmt_cmd->add_flag("-i,--in-place", fmt_in_place, "Rewrite the file");

  // bz run --scenario
  auto* run = app.add_subcommand("run", "Run a scenario file");
  std::string scenario_path, golden_path, trace_out;
  run->add_option("--scenario", scenario_path)->required();
  run->add_option("--golden", golden_path);
  run->add_option("--out", trace_out, "Write the trace here");

  // bz gen
  auto* gen = app.add_subcommand("gen", "Generate synthetic world/event fixtures");
  uint64_t seed = 7;
  int n_accessors = 20, n_resources = 40, n_events = 200;
  std::string out_dir = ".";
  gen->add_option("--seed", seed);
  gen->add_option("--accessors", n_accessors);
  gen->add_option("--resources", n_resources);
  gen->add_option("--events", n_events);
  gen->add_option("--out-dir", out_dir);

  // bz bench
  auto* bench_cmd = app.add_subcommand("bench", "Authorize throughput benchmark");
  int n_policies = 100, n_decisions = 50000, issuers = 1;
  double duration_s = 0.0;
  uint64_t bench_seed = 7;
  bool wire = false, dump_samples = false;
  std::string report_out;
  bench_cmd->add_option("--policies", n_policies);
  bench_cmd->add_option("--decisions", n_decisions, "Decisions per issuer (count mode)");
  bench_cmd->add_option("--duration", duration_s, "Run for this many seconds instead");
  bench_cmd->add_option("--issuers", issuers, "Concurrent issuer threads");
  bench_cmd->add_option("--seed", bench_seed);
  bench_cmd->add_flag("--wire", wire, "Drive the HTTP endpoint instead of in-process");
  bench_cmd->add_flag("--samples", dump_samples, "Include raw latency samples");
  bench_cmd->add_option("--out", report_out);

  // bz replay
  auto* replay = app.add_subcommand("replay", "Replay an NDJSON event/request log");
  std::string replay_log_path, replay_world, replay_policy, replay_config, replay_out;
  replay->add_option("--log", replay_log_path)->required();
  replay->add_option("--world", replay_world);
  replay->add_option("--policy", replay_policy);
  replay->add_option("--config", replay_config);
  replay->add_option("--out", replay_out);

  // bz containment lift
  auto* containment = app.add_subcommand("containment", "Containment administration");
  containment->require_subcommand(1);
  auto* lift = containment->add_subcommand("lift", "Manually lift a containment");
  std::string containment_id, lift_reason, addr;
  lift->add_option("id", containment_id)->required();
  lift->add_option("--reason", lift_reason)->required();
  lift->add_option("--addr", addr, "Service address (default BZ_LISTEN_ADDR)");

  // bz serve
  auto* serve = app.add_subcommand("serve", "Run the decision service");
  std::string serve_addr, world_path, policy_path, config_path, event_log;
  serve->add_option("--addr", serve_addr);
  serve->add_option("--world", world_path);
  serve->add_option("--policy", policy_path);
  serve->add_option("--config", config_path);
  serve->add_option("--event-log", event_log);

  CLI11_PARSE(app, argc, argv);

  try {
    if (lint_cmd->parsed()) return cmd_policy_lint(policy_file);
    if (fmt_cmd->parsed()) return cmd_policy_fmt(policy_file, fmt_in_place);

    if (run->parsed()) {
      bz::ScenarioResult res = bz::run_scenario(scenario_path, golden_path);
      if (!trace_out.empty()) {
        std::ofstream out(trace_out, std::ios::binary | std::ios::trunc);
        out << res.trace;
      }
      for (const auto& f : res.failures) std::cerr << "FAIL " << f << "\n";
      std::cout << (res.ok ? "scenario passed" : "scenario FAILED") << " ("
                << scenario_path << ")\n";
      return res.ok ? 0 : 1;
    }

    if (gen->parsed()) {
      bz::gen_synthetic(seed, n_accessors, n_resources, n_events, out_dir);
      std::cout << "wrote " << out_dir << "/world.json and " << out_dir
                << "/events.ndjson\n";
      return 0;
    }

    if (bench_cmd->parsed()) {
      bz::BenchReport report =
          wire ? bench_wire(n_policies, n_decisions, bench_seed,
                            static_cast<int64_t>(duration_s * 1000.0))
               : bz::bench(n_policies, n_decisions, bench_seed,
                           static_cast<int64_t>(duration_s * 1000.0), issuers);
      std::string text = report.to_json(dump_samples).dump(2) + "\n";
      if (!report_out.empty()) {
        std::ofstream out(report_out, std::ios::binary | std::ios::trunc);
        out << text;
      }
      std::cout << text;
      return 0;
    }

    if (replay->parsed()) {
      std::string world = !replay_world.empty() ? replay_world : env_or("BZ_WORLD_PATH", "");
      std::string pol = !replay_policy.empty() ? replay_policy : env_or("BZ_POLICY_PATH", "");
      std::string cfg = !replay_config.empty() ? replay_config : env_or("BZ_CONFIG", "");
      if (world.empty() || pol.empty()) {
        std::cerr << "replay needs --world/--policy (or BZ_WORLD_PATH/BZ_POLICY_PATH)\n";
        return 1;
      }
      auto engine = bz::make_engine(world, pol, cfg, "sim");
      std::string trace = bz::replay_log(replay_log_path, *engine);
      if (!replay_out.empty()) {
        std::ofstream out(replay_out, std::ios::binary | std::ios::trunc);
        out << trace;
      } else {
        std::cout << trace;
      }
      return 0;
    }

    if (lift->parsed()) {
      std::string target = !addr.empty() ? addr : env_or("BZ_LISTEN_ADDR", "127.0.0.1:8080");
      httplib::Client client("http://" + target);
      json body = {{"authority", "manual"}, {"reason", lift_reason}};
      auto res = client.Post("/v1/containments/" + containment_id + "/lift",
                             body.dump(), "application/json");
      if (!res) {
        std::cerr << "cannot reach service at " << target << "\n";
        return 1;
      }
      std::cout << res->body << "\n";
      return res->status == 200 ? 0 : 1;
    }

    if (serve->parsed()) {
      bz::ServiceConfig cfg = bz::ServiceConfig::from_env();
      if (!serve_addr.empty()) cfg.listen_addr = serve_addr;
      if (!world_path.empty()) cfg.world_path = world_path;
      if (!policy_path.empty()) cfg.policy_path = policy_path;
      if (!config_path.empty()) cfg.config_path = config_path;
      if (!event_log.empty()) cfg.event_log_path = event_log;
      bz::DecisionService service(std::move(cfg));
      std::cout << "listening on " << service.port() << "\n";
      service.run();
      return 0;
    }
  } catch (const bz::Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
