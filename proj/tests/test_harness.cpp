#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "bz/harness.hpp"
#include "bz/service.hpp"
#include "testutil.hpp"

using namespace bz;

namespace {

std::string fx(const std::string& rel) { return bztest::fixtures_dir() + "/" + rel; }

std::unique_ptr<Engine> fresh_engine() {
  EngineConfig cfg;
  cfg.clock_mode = "sim";
  auto eng = std::make_unique<Engine>(cfg, std::make_shared<SimClock>(1000000000000));
  eng->load_world(json::parse(read_file(fx("world.json"))));
  eng->load_policy(read_file(fx("policies/base.bzp")));
  return eng;
}

}  // namespace

TEST_CASE("fixture scenarios run green against their goldens") {
  for (const char* name : {"curious_contractor", "foolish_admin", "rogue_agent"}) {
    ScenarioResult r = run_scenario(fx(std::string("scenarios/") + name + ".scn"),
                                    fx(std::string("goldens/") + name + ".trace"));
    for (const auto& f : r.failures) MESSAGE(name << ": " << f);
    CHECK(r.ok);
    CHECK(r.failures.empty());
  }
}

TEST_CASE("scenario traces are byte-identical across repeated in-process runs") {
  std::string p = fx("scenarios/rogue_agent.scn");
  ScenarioResult a = run_scenario(p);
  ScenarioResult b = run_scenario(p);
  CHECK(a.trace == b.trace);
  CHECK_FALSE(a.trace.empty());
}

TEST_CASE("scenario expectation failures are reported, not thrown") {
  std::string path = "harness_failing.scn";
  {
    std::ofstream f(path);
    json scn = {
        {"name", "failing"},
        {"start_ts", 1000000000000},
        {"world", json::parse(read_file(fx("world.json")))},
        {"policy", "policy \"all\" { when true then allow }"},
        {"script",
         {{{"step", "authorize"},
           {"request",
            {{"id", "q1"}, {"ts", 1000000001000}, {"accessor_id", "carl"},
             {"resource_id", "pub-wiki"}, {"operation", "read"}}}},
          {{"step", "expect"}, {"decision", "q1"}, {"verdict", "deny"}}}}};
    f << scn.dump();
  }
  ScenarioResult r = run_scenario(path);
  CHECK_FALSE(r.ok);
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].find("step 2") != std::string::npos);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(run_scenario("no_such_scenario.scn"), Error);
}

TEST_CASE("gen is deterministic per seed and differs across seeds") {
  json w1 = gen_synthetic_world(42, 20, 30);
  json w2 = gen_synthetic_world(42, 20, 30);
  json w3 = gen_synthetic_world(43, 20, 30);
  CHECK(w1.dump() == w2.dump());
  CHECK(w1.dump() != w3.dump());

  auto e1 = gen_synthetic_events(42, w1, 50);
  auto e2 = gen_synthetic_events(42, w1, 50);
  REQUIRE(e1.size() == 50);
  for (std::size_t i = 0; i < e1.size(); ++i) CHECK(e1[i].dump() == e2[i].dump());

  // Generated worlds always validate, and the events always ingest.
  WorldStore store;
  store.load_document(w1);
  Intake intake;
  for (const auto& e : e1) intake.ingest(event_from_json(e), *store.snapshot());
  CHECK(intake.log_size() == 50);

  // The file writer emits the same bytes as the in-memory generator.
  std::string dir = "harness_gen_out";
  gen_synthetic(42, 20, 30, 10, dir);
  CHECK(json::parse(read_file(dir + "/world.json")).dump() == w1.dump());
  std::filesystem::remove_all(dir);
}

TEST_CASE("bench smoke: compiled rules, zero long-store reads, sane percentiles") {
  BenchReport r = bench(20, 300, /*seed=*/7);
  CHECK(r.decisions == 300);
  CHECK(r.rules == 20);
  CHECK(r.long_store_reads == 0);
  CHECK(r.decisions_per_sec > 0.0);
  REQUIRE(r.samples_ms.size() == 300);

  // Percentiles recompute from the raw sample dump.
  std::vector<double> sorted = r.samples_ms;
  std::sort(sorted.begin(), sorted.end());
  CHECK(r.p50_ms == sorted[sorted.size() / 2]);
  CHECK(r.p99_ms == sorted[static_cast<std::size_t>(sorted.size() * 0.99)]);
  CHECK(r.p50_ms <= r.p99_ms);

  json j = r.to_json(true);
  CHECK(j.at("samples_ms").size() == 300);
  CHECK(j.at("long_store_reads") == 0);

  // Multi-issuer mode completes and merges every thread's samples.
  BenchReport multi = bench(20, 50, 7, 0, 4);
  CHECK(multi.decisions == 200);
  CHECK(multi.long_store_reads == 0);
}

TEST_CASE("replay: identical input yields byte-identical traces on fresh engines") {
  // Build a replay log mixing events and requests, including a challenge-worthy
  // request so the trace has decision + risk lines.
  std::string path = "harness_replay.ndjson";
  {
    std::ofstream f(path);
    f << json{{"id", "rp-e1"}, {"ts", 1000000001000}, {"accessor_id", "carl"},
              {"kind", "access"}, {"resource_id", "fin-report"},
              {"operation", "read"}}.dump()
      << "\n";
    f << json{{"id", "rp-q1"}, {"ts", 1000000002000}, {"accessor_id", "carl"},
              {"resource_id", "doc-strategy"}, {"operation", "read"}}.dump()
      << "\n";
    f << json{{"id", "rp-e2"}, {"ts", 1000000003000}, {"accessor_id", "ada"},
              {"kind", "file_op"}, {"resource_id", "billing-config"},
              {"operation", "write"}}.dump()
      << "\n";
    f << json{{"id", "rp-q2"}, {"ts", 1000000004000}, {"accessor_id", "ada"},
              {"resource_id", "billing-config"}, {"operation", "admin_op"}}.dump()
      << "\n";
  }
  auto e1 = fresh_engine();
  auto e2 = fresh_engine();
  std::string t1 = replay_log(path, *e1);
  std::string t2 = replay_log(path, *e2);
  CHECK(t1 == t2);
  CHECK_FALSE(t1.empty());
  // Events were externally ingested, so the slow path ran.
  CHECK(e1->intake().long_store_reads() > 0);
  std::filesystem::remove(path);
}

TEST_CASE("replay rejects malformed lines with the line number") {
  std::string path = "harness_replay_bad.ndjson";
  SUBCASE("invalid JSON") {
    std::ofstream(path) << "{ok}\n";
  }
  SUBCASE("neither event nor request") {
    std::ofstream(path) << json{{"id", "x"}}.dump() << "\n";
  }
  SUBCASE("unknown accessor inside an otherwise valid event") {
    std::ofstream(path) << json{{"id", "x"}, {"ts", 1}, {"accessor_id", "ghost"},
                                {"kind", "access"}}.dump()
                        << "\n";
  }
  auto eng = fresh_engine();
  try {
    replay_log(path, *eng);
    FAIL("expected malformed-line");
  } catch (const Error& e) {
    CHECK(e.code() == "malformed-line");
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
  std::filesystem::remove(path);
}
