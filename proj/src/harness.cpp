#include "bz/harness.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "bz/service.hpp"

namespace bz {

namespace {

std::string resolve_relative(const std::string& base_file, const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_file).parent_path() / p).string();
}

}  // namespace

// ---------------------------------------------------------------------------
// Scenario runner

ScenarioResult run_scenario(const std::string& path, const std::string& golden_path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const std::exception& e) {
    throw Error("malformed-scenario", e.what());
  }
  if (!doc.contains("script") || !doc.at("script").is_array())
    throw Error("malformed-scenario", "scenario has no script array");

  EngineConfig cfg;
  if (doc.contains("config")) cfg = EngineConfig::from_json(doc.at("config"));
  cfg.clock_mode = "sim";
  int64_t start_ts = doc.value("start_ts", int64_t{1000000000000});
  auto clock = std::make_shared<SimClock>(start_ts);
  Engine engine(cfg, clock);

  if (doc.at("world").is_string())
    engine.load_world(json::parse(read_file(resolve_relative(path, doc.at("world")))));
  else
    engine.load_world(doc.at("world"));
  if (doc.at("policy").is_string() &&
      doc.at("policy").get<std::string>().ends_with(".bzp"))
    engine.load_policy(read_file(resolve_relative(path, doc.at("policy"))));
  else
    engine.load_policy(doc.at("policy").get<std::string>());

  ScenarioResult result;
  auto fail = [&](int step_no, const std::string& msg) {
    result.ok = false;
    result.failures.push_back("step " + std::to_string(step_no) + ": " + msg);
  };

  int step_no = 0;
  for (const auto& step : doc.at("script")) {
    ++step_no;
    std::string kind = step.value("step", "");
    if (kind == "advance_clock") {
      clock->advance(step.at("ms").get<int64_t>());
    } else if (kind == "ingest_event") {
      engine.ingest(event_from_json(step.at("event")));
    } else if (kind == "authorize") {
      engine.authorize(request_from_json(step.at("request")));
    } else if (kind == "respond_challenge") {
      std::string id = "ch-" + step.at("request").get<std::string>() + "-" +
                       step.at("kind").get<std::string>();
      std::map<std::string, std::string> payload;
      if (step.contains("payload"))
        for (const auto& [k, v] : step.at("payload").items())
          payload[k] = v.get<std::string>();
      try {
        engine.respond_challenge(id, payload);
      } catch (const Error& e) {
        if (!step.value("expect_error", std::string()).empty()) {
          if (e.code() != step.at("expect_error").get<std::string>())
            fail(step_no, "expected error " + step.at("expect_error").get<std::string>() +
                              ", got " + e.code());
        } else {
          fail(step_no, std::string("respond_challenge error: ") + e.what());
        }
        continue;
      }
      if (!step.value("expect_error", std::string()).empty())
        fail(step_no, "expected error " + step.at("expect_error").get<std::string>() +
                          ", got success");
    } else if (kind == "expect") {
      if (step.contains("decision")) {
        const DecisionRecord* rec = engine.find_decision(step.at("decision"));
        if (!rec) {
          fail(step_no, "no decision for request " + step.at("decision").get<std::string>());
          continue;
        }
        if (step.contains("verdict") &&
            std::string(to_string(rec->verdict)) != step.at("verdict").get<std::string>())
          fail(step_no, "expected verdict " + step.at("verdict").get<std::string>() +
                            ", got " + to_string(rec->verdict));
        if (step.contains("obligations")) {
          std::vector<std::string> want =
              step.at("obligations").get<std::vector<std::string>>();
          std::vector<std::string> got;
          for (const auto& o : rec->obligations) got.push_back(to_string(o.kind));
          if (want != got) {
            std::string g;
            for (const auto& x : got) g += x + " ";
            fail(step_no, "obligation mismatch, got: " + g);
          }
        }
      } else if (step.contains("challenge")) {
        const json& c = step.at("challenge");
        std::string id = "ch-" + c.at("request").get<std::string>() + "-" +
                         c.at("kind").get<std::string>();
        const Challenge* ch = engine.challenges().find_challenge(id);
        if (!ch) {
          fail(step_no, "no challenge " + id);
        } else if (std::string(to_string(ch->state)) != c.at("state").get<std::string>()) {
          fail(step_no, "challenge " + id + " state " + to_string(ch->state) +
                            ", expected " + c.at("state").get<std::string>());
        }
      } else if (step.contains("containment")) {
        const json& c = step.at("containment");
        const Containment* active =
            engine.challenges().active_containment(c.at("accessor"));
        bool want_active = c.value("active", true);
        if (want_active != (active != nullptr)) {
          fail(step_no, "containment active mismatch for " +
                            c.at("accessor").get<std::string>());
        } else if (active && c.contains("level") &&
                   std::string(to_string(active->level)) !=
                       c.at("level").get<std::string>()) {
          fail(step_no, "containment level mismatch");
        }
      } else if (step.contains("attribute")) {
        const json& a = step.at("attribute");
        auto attr = engine.risk().get(a.at("accessor"), a.at("name"),
                                      clock->now_ms());
        if (a.value("absent", false)) {
          if (attr) fail(step_no, "attribute unexpectedly present: " +
                                      a.at("name").get<std::string>());
        } else if (!attr) {
          fail(step_no, "attribute missing: " + a.at("name").get<std::string>());
        } else if (a.contains("min") && attr->value < a.at("min").get<double>()) {
          fail(step_no, "attribute below min: " + a.at("name").get<std::string>());
        }
      } else {
        fail(step_no, "unrecognized expect clause");
      }
    } else {
      throw Error("malformed-scenario", "unknown step kind: " + kind);
    }
  }

  result.trace = engine.trace_dump();
  if (!golden_path.empty()) {
    std::string golden = read_file(golden_path);
    if (golden != result.trace) {
      result.ok = false;
      std::istringstream a(golden), b(result.trace);
      std::string la, lb;
      int line = 0;
      while (true) {
        ++line;
        bool ga = static_cast<bool>(std::getline(a, la));
        bool gb = static_cast<bool>(std::getline(b, lb));
        if (!ga && !gb) break;
        if (la != lb || ga != gb) {
          result.failures.push_back("golden mismatch at line " + std::to_string(line));
          break;
        }
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Synthetic generator. Uses explicit modulo draws so outputs are stable for a
// seed independent of the standard library's distribution implementations.

namespace {

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}
  uint64_t next(uint64_t bound) { return bound ? gen_() % bound : 0; }
  bool chance(int percent) { return next(100) < static_cast<uint64_t>(percent); }

 private:
  std::mt19937_64 gen_;
};

const char* kTagPool[] = {"sales", "finserv", "strategy", "finance-reporting",
                          "billing-system", "software", "user_data", "marketing",
                          "support", "legal", "research", "operations"};
const char* kJobs[] = {"account_manager", "software_dev", "sysadmin", "analyst",
                       "support_agent"};
const char* kOps[] = {"read", "write", "bulk_export", "admin_op"};
constexpr int64_t kBaseTs = 1000000000000;

}  // namespace

json gen_synthetic_world(uint64_t seed, int n_accessors, int n_resources) {
  Rng rng(seed);
  json world;
  json org = json::array();
  int n_teams = std::max(2, std::min(8, n_accessors));
  org.push_back({{"id", "t0"}, {"name", "root"}, {"topic_tags", {kTagPool[0]}}});
  for (int i = 1; i < n_teams; ++i) {
    json tags = json::array();
    int n_tags = 1 + static_cast<int>(rng.next(3));
    for (int t = 0; t < n_tags; ++t)
      tags.push_back(kTagPool[rng.next(std::size(kTagPool))]);
    org.push_back({{"id", "t" + std::to_string(i)},
                   {"name", "team-" + std::to_string(i)},
                   {"topic_tags", tags},
                   {"parent", "t" + std::to_string(rng.next(static_cast<uint64_t>(i)))}});
  }
  world["org"] = org;

  json accessors = json::array();
  std::vector<std::string> humans;
  for (int i = 0; i < n_accessors; ++i) {
    std::string id = "u" + std::to_string(i);
    bool agent = i > 0 && !humans.empty() && rng.chance(20);
    json a = {{"id", id},
              {"kind", agent ? "agent" : "human"},
              {"job_function", kJobs[rng.next(std::size(kJobs))]},
              {"role", rng.chance(15) ? "manager" : "ic"},
              {"seniority", rng.chance(50) ? "senior" : "junior"},
              {"team_id", "t" + std::to_string(rng.next(static_cast<uint64_t>(n_teams)))},
              {"static_risk_tier",
               rng.chance(15) ? "elevated" : (rng.chance(5) ? "high" : "low")}};
    if (agent)
      a["controlling_human"] = humans[rng.next(humans.size())];
    else
      humans.push_back(id);
    accessors.push_back(a);
  }
  world["accessors"] = accessors;

  json resources = json::array();
  static const char* kSens[] = {"public", "internal", "confidential",
                                "highly_confidential"};
  for (int i = 0; i < n_resources; ++i) {
    int sens = static_cast<int>(rng.next(4));
    json tags = json::array();
    int n_tags = (sens >= 2 ? 1 : 0) + static_cast<int>(rng.next(3));
    for (int t = 0; t < n_tags; ++t)
      tags.push_back(kTagPool[rng.next(std::size(kTagPool))]);
    if (rng.chance(20)) tags.push_back("customer:c" + std::to_string(rng.next(5)));
    resources.push_back(
        {{"id", "r" + std::to_string(i)},
         {"sensitivity", kSens[sens]},
         {"data_type", rng.chance(30) ? "user_data" : "document"},
         {"owning_team", "t" + std::to_string(rng.next(static_cast<uint64_t>(n_teams)))},
         {"topic_tags", tags}});
  }
  world["resources"] = resources;

  json assignments = json::array();
  for (int i = 0; i < n_accessors; ++i) {
    if (!rng.chance(80)) continue;
    json topics = json::array();
    int n_topics = 1 + static_cast<int>(rng.next(3));
    for (int t = 0; t < n_topics; ++t)
      topics.push_back(kTagPool[rng.next(std::size(kTagPool))]);
    json customers = json::array();
    if (rng.chance(30)) customers.push_back("c" + std::to_string(rng.next(5)));
    assignments.push_back(
        {{"accessor_id", "u" + std::to_string(i)},
         {"scope_customers", customers},
         {"scope_topics", topics},
         {"scope_teams", {"t" + std::to_string(rng.next(static_cast<uint64_t>(n_teams)))}},
         {"active_from", kBaseTs - 30LL * 24 * 3600 * 1000},
         {"active_to", kBaseTs + 30LL * 24 * 3600 * 1000}});
  }
  world["assignments"] = assignments;
  return world;
}

std::vector<json> gen_synthetic_events(uint64_t seed, const json& world, int n_events) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::string> accessors, resources;
  for (const auto& a : world.at("accessors")) accessors.push_back(a.at("id"));
  for (const auto& r : world.at("resources")) resources.push_back(r.at("id"));
  std::vector<json> events;
  int64_t ts = kBaseTs;
  static const char* kKinds[] = {"access",  "access", "access",        "file_op",
                                 "query",   "access", "bulk_export",   "access",
                                 "access",  "email_external"};
  for (int i = 0; i < n_events; ++i) {
    ts += 500 + static_cast<int64_t>(rng.next(5000));
    json e = {{"id", "e" + std::to_string(i)},
              {"ts", ts},
              {"accessor_id", accessors[rng.next(accessors.size())]},
              {"kind", kKinds[rng.next(std::size(kKinds))]}};
    if (!resources.empty() && rng.chance(85))
      e["resource_id"] = resources[rng.next(resources.size())];
    e["operation"] = kOps[rng.next(std::size(kOps))];
    if (e["kind"] == "query" && rng.chance(30))
      e["payload"] = {{"tags", std::string("basic_question ") +
                                   kTagPool[rng.next(std::size(kTagPool))]}};
    events.push_back(std::move(e));
  }
  return events;
}

void gen_synthetic(uint64_t seed, int n_accessors, int n_resources, int n_events,
                   const std::string& out_dir) {
  if (n_accessors < 1) throw Error("bad-request", "need at least one accessor");
  std::filesystem::create_directories(out_dir);
  json world = gen_synthetic_world(seed, n_accessors, n_resources);
  {
    std::ofstream out(out_dir + "/world.json", std::ios::binary);
    out << world.dump(2) << "\n";
  }
  {
    std::ofstream out(out_dir + "/events.ndjson", std::ios::binary);
    for (const auto& e : gen_synthetic_events(seed, world, n_events))
      out << e.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Bench

std::string gen_bench_policy(int n_policies) {
  static const char* kSens[] = {"public", "internal", "confidential",
                                "highly_confidential"};
  std::string out;
  out += "policy \"baseline_allow\" { when assignment_covers() then allow }\n";
  for (int i = 1; i < n_policies; ++i) {
    const char* effect = i % 7 == 0   ? "deny"
                         : i % 3 == 0 ? "challenge(justification)"
                                      : "allow";
    out += "policy \"gen_" + std::to_string(i) + "\" { when resource.sensitivity == \"" +
           kSens[i % 4] + "\" && request.operation == \"" + kOps[i % 4] +
           "\" && risk.gen_signal_" + std::to_string(i % 10) + " >= " +
           std::to_string(0.5 + (i % 5) * 0.1) + " then " + effect + " }\n";
  }
  return out;
}

json BenchReport::to_json(bool include_samples) const {
  json j;
  j["decisions"] = decisions;
  j["rules"] = rules;
  j["decisions_per_sec"] = decisions_per_sec;
  j["p50_ms"] = p50_ms;
  j["p99_ms"] = p99_ms;
  j["long_store_reads"] = long_store_reads;
  if (include_samples) j["samples_ms"] = samples_ms;
  return j;
}

BenchReport bench(int n_policies, int n_decisions, uint64_t seed, int64_t duration_ms,
                  int issuers) {
  if (n_policies < 1)
    throw Error("policy-compile-failure", "bench refuses an empty policy set");
  EngineConfig cfg;
  cfg.clock_mode = "sim";
  auto clock = std::make_shared<SimClock>(kBaseTs);
  Engine engine(cfg, clock);
  engine.load_world(gen_synthetic_world(seed, 50, 100));
  engine.load_policy(gen_bench_policy(n_policies));

  SnapshotPtr snap = engine.world().snapshot();
  std::vector<std::string> accessors, resources;
  for (const auto& [id, a] : snap->accessors)
    if (a.kind == AccessorKind::human) accessors.push_back(id);
  for (const auto& [id, r] : snap->resources) resources.push_back(id);

  BenchReport report;
  report.rules = static_cast<std::size_t>(n_policies);

  if (issuers < 1) issuers = 1;
  auto issue_loop = [&](int issuer, std::vector<double>& samples) {
    Rng rng(seed + static_cast<uint64_t>(issuer) * 0x100000001b3ULL);
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::milliseconds(duration_ms);
    for (int i = 0;; ++i) {
      if (duration_ms > 0) {
        if (std::chrono::steady_clock::now() >= deadline) break;
      } else if (i >= n_decisions) {
        break;
      }
      Request req;
      req.id = "bench-" + std::to_string(issuer) + "-" + std::to_string(i);
      req.accessor_id = accessors[rng.next(accessors.size())];
      req.resource_id = resources[rng.next(resources.size())];
      req.operation = kOps[rng.next(std::size(kOps))];
      auto s0 = std::chrono::steady_clock::now();
      engine.authorize(req);
      auto s1 = std::chrono::steady_clock::now();
      samples.push_back(std::chrono::duration<double, std::milli>(s1 - s0).count());
    }
  };

  uint64_t reads_before = engine.intake().long_store_reads();
  auto t0 = std::chrono::steady_clock::now();
  if (issuers == 1) {
    report.samples_ms.reserve(static_cast<std::size_t>(std::max(n_decisions, 0)));
    issue_loop(0, report.samples_ms);
  } else {
    std::vector<std::vector<double>> per_thread(static_cast<std::size_t>(issuers));
    std::vector<std::thread> threads;
    for (int t = 0; t < issuers; ++t)
      threads.emplace_back(issue_loop, t, std::ref(per_thread[static_cast<std::size_t>(t)]));
    for (auto& th : threads) th.join();
    for (auto& s : per_thread)
      report.samples_ms.insert(report.samples_ms.end(), s.begin(), s.end());
  }
  auto t1 = std::chrono::steady_clock::now();
  report.decisions = report.samples_ms.size();
  double elapsed_s = std::chrono::duration<double>(t1 - t0).count();
  report.decisions_per_sec =
      elapsed_s > 0 ? static_cast<double>(report.decisions) / elapsed_s : 0.0;
  report.long_store_reads = engine.intake().long_store_reads() - reads_before;

  std::vector<double> sorted = report.samples_ms;
  std::sort(sorted.begin(), sorted.end());
  if (!sorted.empty()) {
    report.p50_ms = sorted[sorted.size() / 2];
    report.p99_ms = sorted[std::min(sorted.size() - 1,
                                    static_cast<std::size_t>(sorted.size() * 0.99))];
  }
  return report;
}

// ---------------------------------------------------------------------------
// Replay

std::string replay_log(const std::string& log_path, Engine& engine) {
  std::istringstream in(read_file(log_path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception&) {
      throw Error("malformed-line", "line " + std::to_string(line_no) +
                                        ": invalid JSON");
    }
    try {
      if (j.contains("kind"))
        engine.ingest(event_from_json(j));
      else if (j.contains("accessor_id") && j.contains("resource_id"))
        engine.authorize(request_from_json(j));
      else
        throw Error("malformed-line",
                    "line " + std::to_string(line_no) + ": neither event nor request");
    } catch (const Error& e) {
      if (e.code() == "malformed-line") throw;
      throw Error("malformed-line",
                  "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return engine.trace_dump();
}

}  // namespace bz
