#pragma once

#include <memory>
#include <string>
#include <thread>

#include "bz/reasoning.hpp"

namespace bz {

struct ServiceConfig {
  std::string listen_addr = "127.0.0.1:8080";
  std::string world_path;
  std::string policy_path;
  std::string config_path;   // optional engine config JSON
  std::string clock_mode;    // overrides config when non-empty: real | sim
  uint64_t seed = 0;
  std::string event_log_path;  // optional NDJSON persistence

  /// Reads BZ_LISTEN_ADDR, BZ_WORLD_PATH, BZ_POLICY_PATH, BZ_CONFIG,
  /// BZ_CLOCK and BZ_SEED.
  static ServiceConfig from_env();
};

/// JSON-over-HTTP policy decision point. Fail-closed: construction refuses a
/// world or policy that does not validate/compile, and a bad reload keeps the
/// previous compiled set.
class DecisionService {
 public:
  explicit DecisionService(ServiceConfig cfg);
  ~DecisionService();

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  void stop();

  /// Serves on the calling thread until stop() or a signal.
  void run();

  Engine& engine() { return *engine_; }
  int port() const { return port_; }

 private:
  struct Impl;
  void setup_routes();

  ServiceConfig cfg_;
  std::unique_ptr<Engine> engine_;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = -1;
};

std::string read_file(const std::string& path);

/// Builds an engine from file paths (shared by the service, CLI and harness).
std::unique_ptr<Engine> make_engine(const std::string& world_path,
                                    const std::string& policy_path,
                                    const std::string& config_path,
                                    const std::string& clock_mode_override = "",
                                    int64_t sim_start_ms = 0);

}  // namespace bz
