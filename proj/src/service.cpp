#include "bz/service.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>

namespace bz {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io-error", "cannot read file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ServiceConfig ServiceConfig::from_env() {
  ServiceConfig c;
  auto env = [](const char* k) -> std::string {
    const char* v = std::getenv(k);
    return v ? v : "";
  };
  if (auto v = env("BZ_LISTEN_ADDR"); !v.empty()) c.listen_addr = v;
  c.world_path = env("BZ_WORLD_PATH");
  c.policy_path = env("BZ_POLICY_PATH");
  c.config_path = env("BZ_CONFIG");
  c.clock_mode = env("BZ_CLOCK");
  if (auto v = env("BZ_SEED"); !v.empty()) c.seed = std::strtoull(v.c_str(), nullptr, 10);
  return c;
}

std::unique_ptr<Engine> make_engine(const std::string& world_path,
                                    const std::string& policy_path,
                                    const std::string& config_path,
                                    const std::string& clock_mode_override,
                                    int64_t sim_start_ms) {
  EngineConfig cfg;
  if (!config_path.empty()) cfg = EngineConfig::from_json(json::parse(read_file(config_path)));
  if (!clock_mode_override.empty()) cfg.clock_mode = clock_mode_override;
  std::shared_ptr<Clock> clock;
  if (cfg.clock_mode == "sim")
    clock = std::make_shared<SimClock>(sim_start_ms);
  else
    clock = std::make_shared<RealClock>();
  auto engine = std::make_unique<Engine>(cfg, clock);
  engine->load_world(json::parse(read_file(world_path)));
  engine->load_policy(read_file(policy_path));
  return engine;
}

struct DecisionService::Impl {
  httplib::Server server;
};

DecisionService::DecisionService(ServiceConfig cfg)
    : cfg_(std::move(cfg)), impl_(std::make_unique<Impl>()) {
  engine_ = make_engine(cfg_.world_path, cfg_.policy_path, cfg_.config_path,
                        cfg_.clock_mode);
  if (!cfg_.event_log_path.empty()) engine_->intake().set_log_path(cfg_.event_log_path);
  setup_routes();
}

DecisionService::~DecisionService() { stop(); }

namespace {

int status_for(const Error& e) {
  const std::string& c = e.code();
  if (c == "unknown-entity" || c == "unknown-challenge" || c == "unknown-accessor")
    return 404;
  if (c == "already-terminal" || c == "not-active" || c == "wrong-authority" ||
      c == "compile-rejected" || c == "invariant-violation" || c == "invalid-reference")
    return 409;
  if (c == "expired") return 410;
  return 400;
}

void reply_error(httplib::Response& res, const Error& e) {
  res.status = status_for(e);
  res.set_content(json{{"error", e.code()}, {"message", e.what()}}.dump(),
                  "application/json");
}

}  // namespace

void DecisionService::setup_routes() {
  auto& svr = impl_->server;

  svr.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"status", "ok"}}.dump(), "application/json");
  });

  svr.Post("/v1/authorize", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      Request r = request_from_json(json::parse(req.body));
      DecisionRecord rec = engine_->authorize(r);
      res.set_content(rec.to_json().dump(), "application/json");
    } catch (const Error& e) {
      reply_error(res, e);
    } catch (const std::exception& e) {
      reply_error(res, Error("bad-request", e.what()));
    }
  });

  svr.Post("/v1/events", [this](const httplib::Request& req, httplib::Response& res) {
    int accepted = 0;
    json rejected = json::array();
    std::istringstream in(req.body);
    std::string line;
    int line_no = 0;
    std::set<std::string> touched;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        Event e = event_from_json(json::parse(line));
        engine_->ingest(e, false);
        touched.insert(e.accessor_id);
        ++accepted;
      } catch (const std::exception& e) {
        rejected.push_back({{"line", line_no}, {"error", e.what()}});
      }
    }
    for (const auto& a : touched) engine_->pump_detectors(a);
    res.status = 202;
    res.set_content(json{{"accepted", accepted}, {"rejected", rejected}}.dump(),
                    "application/json");
  });

  svr.Post(R"(/v1/challenges/([^/]+)/response)",
           [this](const httplib::Request& req, httplib::Response& res) {
             try {
               json body = json::parse(req.body);
               std::map<std::string, std::string> payload;
               if (body.contains("payload"))
                 for (const auto& [k, v] : body.at("payload").items())
                   payload[k] = v.get<std::string>();
               ChallengeState st = engine_->respond_challenge(req.matches[1], payload);
               res.set_content(json{{"state", to_string(st)}}.dump(), "application/json");
             } catch (const Error& e) {
               reply_error(res, e);
             } catch (const std::exception& e) {
               reply_error(res, Error("bad-request", e.what()));
             }
           });

  svr.Get("/v1/containments", [this](const httplib::Request& req, httplib::Response& res) {
    std::string accessor = req.get_param_value("accessor");
    json out = json::array();
    for (const Containment* c : engine_->challenges().containments_for(accessor))
      out.push_back(containment_to_json(*c));
    res.set_content(out.dump(), "application/json");
  });

  svr.Post(R"(/v1/containments/([^/]+)/lift)",
           [this](const httplib::Request& req, httplib::Response& res) {
             try {
               json body = json::parse(req.body);
               LiftAuthority auth =
                   lift_authority_from(body.value("authority", "manual"));
               engine_->lift_containment(req.matches[1], auth);
               res.set_content(json{{"lifted", true}}.dump(), "application/json");
             } catch (const Error& e) {
               reply_error(res, e);
             } catch (const std::exception& e) {
               reply_error(res, Error("bad-request", e.what()));
             }
           });

  svr.Post("/v1/admin/reload", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      json body = json::parse(req.body);
      std::string path = body.value("policy_path", cfg_.policy_path);
      uint64_t version = engine_->load_policy(read_file(path));
      res.set_content(json{{"policy_version", version}}.dump(), "application/json");
    } catch (const Error& e) {
      reply_error(res, e);  // old compiled policy stays active
    } catch (const std::exception& e) {
      reply_error(res, Error("bad-request", e.what()));
    }
  });

  svr.Post("/v1/admin/world", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      uint64_t version = engine_->load_world(json::parse(req.body));
      res.set_content(json{{"new_version", version}}.dump(), "application/json");
    } catch (const Error& e) {
      reply_error(res, e);
    } catch (const std::exception& e) {
      reply_error(res, Error("bad-request", e.what()));
    }
  });
}

namespace {

std::pair<std::string, int> split_addr(const std::string& addr) {
  auto pos = addr.rfind(':');
  if (pos == std::string::npos) return {addr, 8080};
  return {addr.substr(0, pos), std::atoi(addr.c_str() + pos + 1)};
}

}  // namespace

int DecisionService::start() {
  auto [host, port] = split_addr(cfg_.listen_addr);
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
  } else {
    if (!impl_->server.bind_to_port(host, port))
      throw Error("bind-failure", "cannot bind " + cfg_.listen_addr);
    port_ = port;
  }
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void DecisionService::run() {
  auto [host, port] = split_addr(cfg_.listen_addr);
  if (!impl_->server.bind_to_port(host, port))
    throw Error("bind-failure", "cannot bind " + cfg_.listen_addr);
  port_ = port;
  impl_->server.listen_after_bind();
  engine_->intake().flush();
}

void DecisionService::stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
  if (engine_) engine_->intake().flush();  // graceful shutdown flushes the log
}

}  // namespace bz
