#include <doctest.h>

#include <random>

#include "bz/reasoning.hpp"
#include "testutil.hpp"

using namespace bz;

namespace {

RuleOutcome out(std::vector<Effect> effects) {
  RuleOutcome o;
  o.rule_name = "r";
  o.effects = std::move(effects);
  return o;
}

Effect eff_allow() { return {Effect::Kind::allow, ChallengeKind::justification, ContainLevel::soft}; }
Effect eff_deny() { return {Effect::Kind::deny, ChallengeKind::justification, ContainLevel::soft}; }
Effect eff_chal(ChallengeKind k) { return {Effect::Kind::challenge, k, ContainLevel::soft}; }
Effect eff_contain(ContainLevel l) { return {Effect::Kind::contain, ChallengeKind::justification, l}; }

Effect random_effect(std::mt19937_64& rng) {
  switch (rng() % 4) {
    case 0: return eff_allow();
    case 1: return eff_deny();
    case 2: return eff_chal(static_cast<ChallengeKind>(rng() % 5));
    default: return eff_contain(static_cast<ContainLevel>(rng() % 2));
  }
}

std::shared_ptr<Engine> make_engine(const json& world, const std::string& policy,
                                    int64_t start_ts = 1000000000000,
                                    EngineConfig cfg = {}) {
  cfg.clock_mode = "sim";
  auto eng = std::make_shared<Engine>(cfg, std::make_shared<SimClock>(start_ts));
  eng->load_world(world);
  eng->load_policy(policy);
  return eng;
}

}  // namespace

TEST_CASE("combine: zero-trust default and lattice joins") {
  CHECK(combine({}, ObligationSet::none).verdict == Verdict::deny);

  CHECK(combine({out({eff_allow()})}, ObligationSet::none).verdict == Verdict::allow);
  CHECK(combine({out({eff_allow()}), out({eff_deny()})}, ObligationSet::none).verdict ==
        Verdict::deny);
  auto ch = combine({out({eff_allow()}), out({eff_chal(ChallengeKind::verification),
                                              eff_chal(ChallengeKind::justification)})},
                    ObligationSet::none);
  CHECK(ch.verdict == Verdict::challenge);
  // Obligations deduped and ordered by rank.
  CHECK(ch.obligations == std::vector<ChallengeKind>{ChallengeKind::justification,
                                                     ChallengeKind::verification});

  auto hard = combine({out({eff_contain(ContainLevel::soft)}),
                       out({eff_contain(ContainLevel::hard)})},
                      ObligationSet::none);
  CHECK(hard.verdict == Verdict::contain);
  CHECK(hard.contain_level == ContainLevel::hard);

  // Deny swallows challenge obligations entirely.
  auto d = combine({out({eff_chal(ChallengeKind::biometric)}), out({eff_deny()})},
                   ObligationSet::none);
  CHECK(d.verdict == Verdict::deny);
  CHECK(d.obligations.empty());
}

TEST_CASE("combine: containment-injected obligations") {
  auto soft = combine({out({eff_allow()})}, ObligationSet::require_verification);
  CHECK(soft.verdict == Verdict::challenge);
  CHECK(soft.obligations == std::vector<ChallengeKind>{ChallengeKind::verification});

  CHECK(combine({out({eff_allow()})}, ObligationSet::deny_all).verdict == Verdict::deny);
  // Even with no matching rules the injected effect applies (not the default).
  CHECK(combine({}, ObligationSet::require_verification).verdict == Verdict::challenge);
}

TEST_CASE("combine is a join: order-independent, idempotent, monotone") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<RuleOutcome> xs;
    int n = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < n; ++i) {
      std::vector<Effect> effs;
      int m = 1 + static_cast<int>(rng() % 3);
      for (int j = 0; j < m; ++j) effs.push_back(random_effect(rng));
      xs.push_back(out(std::move(effs)));
    }
    auto base = combine(xs, ObligationSet::none);

    auto shuffled = xs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto perm = combine(shuffled, ObligationSet::none);
    CHECK(perm.verdict == base.verdict);
    CHECK(perm.obligations == base.obligations);

    auto doubled = xs;
    doubled.insert(doubled.end(), xs.begin(), xs.end());
    auto idem = combine(doubled, ObligationSet::none);
    CHECK(idem.verdict == base.verdict);
    CHECK(idem.obligations == base.obligations);

    auto grown = xs;
    grown.push_back(out({random_effect(rng)}));
    CHECK(severity(combine(grown, ObligationSet::none).verdict) >=
          severity(base.verdict));
  }
}

TEST_CASE("intent_alignment is Jaccard over declared tags; absent context is 0") {
  ResourceDescriptor r;
  r.topic_tags = {"sales", "pipeline", "q3"};
  CHECK(intent_alignment(std::nullopt, r) == 0.0);
  AgentContext ac;
  ac.declared_intent_tags = {"sales", "roadmap"};
  CHECK(intent_alignment(ac, r) == doctest::Approx(1.0 / 4.0));
  ac.declared_intent_tags = {};
  CHECK(intent_alignment(ac, r) == 0.0);
}

// ---------------------------------------------------------------------------
// Detectors

TEST_CASE("peer volume: 60 distinct vs peer median 10 fires; 50 does not") {
  json w = {{"org", {{{"id", "t"}, {"topic_tags", json::array()}}}},
            {"accessors", json::array()},
            {"resources", json::array()},
            {"assignments", json::array()}};
  w["accessors"].push_back({{"id", "me"}, {"kind", "human"}, {"job_function", "analyst"}, {"team_id", "t"}});
  for (int p = 0; p < 4; ++p)
    w["accessors"].push_back({{"id", "peer" + std::to_string(p)}, {"kind", "human"},
                              {"job_function", "analyst"}, {"team_id", "t"}});
  for (int r = 0; r < 70; ++r)
    w["resources"].push_back({{"id", "r" + std::to_string(r)}, {"sensitivity", "internal"},
                              {"owning_team", "t"}, {"topic_tags", json::array()}});
  WorldStore store;
  store.load_document(w);
  auto snap = store.snapshot();
  EngineConfig cfg;

  auto build = [&](int mine) {
    std::vector<Event> log;
    int n = 0;
    auto add = [&](const std::string& who, int res) {
      Event e;
      e.id = "e" + std::to_string(n++);
      e.ts = 500000 + n;
      e.accessor_id = who;
      e.kind = EventKind::access;
      e.resource_id = "r" + std::to_string(res);
      log.push_back(e);
    };
    for (int i = 0; i < mine; ++i) add("me", i % 70);
    for (int p = 0; p < 4; ++p)
      for (int i = 0; i < 10; ++i) add("peer" + std::to_string(p), i);
    return log;
  };

  int64_t now = 600000, win = 3600 * 1000;
  auto hot = detect_peer_volume_anomaly(build(60), *snap, "me", win, now, cfg);
  REQUIRE(hot.has_value());
  CHECK(hot->value == doctest::Approx(0.6));
  CHECK(hot->evidence.size() == 60);
  CHECK_FALSE(detect_peer_volume_anomaly(build(50), *snap, "me", win, now, cfg));
}

TEST_CASE("detector hand cases on the small fixed world") {
  bztest::DetectorWorld w;
  EngineConfig cfg;
  int64_t now = 1000000, win = 3600 * 1000;

  SUBCASE("rapid succession: humans only, needs 10 ops in 5s") {
    std::vector<Event> log;
    for (int i = 0; i < 10; ++i) {
      Event e;
      e.id = "e" + std::to_string(i);
      e.ts = 900000 + i * 500;
      e.accessor_id = "x";
      e.kind = EventKind::file_op;
      log.push_back(e);
    }
    CHECK(detect_rapid_succession(log, *w.snap, "x", win, now, cfg).has_value());
    // Spread the same ops over 9 seconds: no 10-op burst within 5s.
    for (int i = 0; i < 10; ++i) log[i].ts = 900000 + i * 1000;
    CHECK_FALSE(detect_rapid_succession(log, *w.snap, "x", win, now, cfg));
    // An agent at full speed is not anomalous.
    for (auto& e : log) {
      e.accessor_id = "bot";
      e.ts = 900000;
    }
    CHECK_FALSE(detect_rapid_succession(log, *w.snap, "bot", win, now, cfg));
    // Nor does the bot's burst count against its controlling human.
    CHECK_FALSE(detect_rapid_succession(log, *w.snap, "x", win, now, cfg));
  }

  SUBCASE("knowledge inconsistency: basic questions about the accessor's own topics") {
    std::vector<Event> log;
    for (int i = 0; i < 3; ++i) {
      Event e;
      e.id = "q" + std::to_string(i);
      e.ts = 990000 + i;
      e.accessor_id = "x";
      e.kind = EventKind::query;
      e.payload["tags"] = "basic_question alpha";
      log.push_back(e);
    }
    auto hit = detect_knowledge_inconsistency(log, *w.snap, "x", win, now, cfg);
    REQUIRE(hit.has_value());
    CHECK(hit->value == doctest::Approx(0.8));
    // Questions about someone else's topic don't count ("x" has alpha/beta).
    for (auto& e : log) e.payload["tags"] = "basic_question gamma";
    CHECK_FALSE(detect_knowledge_inconsistency(log, *w.snap, "x", win, now, cfg));
    // Two qualifying questions are below the minimum of three.
    log[0].payload["tags"] = "basic_question alpha";
    log[1].payload["tags"] = "basic_question beta";
    CHECK_FALSE(detect_knowledge_inconsistency(log, *w.snap, "x", win, now, cfg));
  }

  SUBCASE("exfiltration: three exports of confidential material, agent counts for human") {
    std::vector<Event> log;
    for (int i = 0; i < 3; ++i) {
      Event e;
      e.id = "x" + std::to_string(i);
      e.ts = 990000 + i;
      e.accessor_id = i == 0 ? "x" : "bot";  // mixed human + controlled agent
      e.kind = i % 2 ? EventKind::email_external : EventKind::bulk_export;
      e.resource_id = "res2";  // confidential
      log.push_back(e);
    }
    auto hit = detect_exfiltration_pattern(log, *w.snap, "x", win, now, cfg);
    REQUIRE(hit.has_value());
    CHECK(hit->value == 1.0);
    CHECK(hit->evidence == std::vector<std::string>{"x0", "x1", "x2"});
    // Internal-sensitivity exports are fine.
    for (auto& e : log) e.resource_id = "res1";
    CHECK_FALSE(detect_exfiltration_pattern(log, *w.snap, "x", win, now, cfg));
    // The bot's events never count toward an unrelated human.
    for (auto& e : log) e.resource_id = "res2";
    CHECK_FALSE(detect_exfiltration_pattern(log, *w.snap, "p1", win, now, cfg));
  }
}

TEST_CASE("all five detectors match brute-force oracles on random logs") {
  bztest::DetectorWorld w;
  EngineConfig cfg;
  std::mt19937_64 rng(77);
  const int64_t base = 1000000;
  int fired[5] = {0, 0, 0, 0, 0};
  for (int trial = 0; trial < 300; ++trial) {
    auto log = bztest::random_log(rng, base, 120);
    int64_t now = base + static_cast<int64_t>(rng() % 400000);
    int64_t win = static_cast<int64_t>(1000 + rng() % 500000);
    for (const char* who : {"x", "p1", "p2", "q", "bot"}) {
      auto check = [&](int idx, auto detect, auto oracle) {
        auto got = detect(log, *w.snap, who, win, now, cfg);
        auto want = oracle(log, *w.snap, who, win, now, cfg);
        CHECK(got.has_value() == want.has_value());
        if (got && want) {
          CHECK(got->value == doctest::Approx(*want));
          ++fired[idx];
        }
      };
      check(0, detect_peer_volume_anomaly, bztest::oracle_peer_volume);
      check(1, detect_scope_deviation, bztest::oracle_scope_deviation);
      check(2, detect_rapid_succession, bztest::oracle_rapid);
      check(3, detect_knowledge_inconsistency, bztest::oracle_knowledge);
      check(4, detect_exfiltration_pattern, bztest::oracle_exfil);
    }
  }
  // The random logs must actually exercise every detector's firing branch.
  for (int i = 0; i < 5; ++i) CHECK(fired[i] > 0);
}

// ---------------------------------------------------------------------------
// Engine end-to-end paths

namespace {

json engine_world() {
  return json::parse(R"({
    "org": [{"id": "t1", "topic_tags": ["alpha"]}],
    "accessors": [
      {"id": "h", "kind": "human", "job_function": "analyst", "team_id": "t1"},
      {"id": "g", "kind": "agent", "job_function": "analyst", "team_id": "t1",
       "controlling_human": "h"}
    ],
    "resources": [
      {"id": "doc", "sensitivity": "confidential", "owning_team": "t1", "topic_tags": ["alpha"]},
      {"id": "wiki", "sensitivity": "public", "owning_team": "t1", "topic_tags": []}
    ],
    "assignments": [
      {"accessor_id": "h", "scope_topics": ["alpha"],
       "active_from": 0, "active_to": 2000000000000}
    ]
  })");
}

}  // namespace

TEST_CASE("authorize: no matching rule denies; fast path never reads the long store") {
  auto eng = make_engine(engine_world(),
                         "policy \"p\" { when request.operation == \"write\" then allow }");
  Request req;
  req.id = "r1";
  req.ts = 1000000001000;
  req.accessor_id = "h";
  req.resource_id = "wiki";
  req.operation = "read";
  auto rec = eng->authorize(req);
  CHECK(rec.verdict == Verdict::deny);
  CHECK(rec.matched_rules.empty());
  CHECK(eng->intake().long_store_reads() == 0);
  // The decision emitted its own event into intake.
  CHECK(eng->intake().log_size() == 1);
  CHECK(eng->intake().ring_size("h") == 1);

  // Unknown entities are rejected up front.
  Request bad = req;
  bad.id = "r2";
  bad.resource_id = "nope";
  CHECK_THROWS_AS(eng->authorize(bad), Error);
  // agent_context from a human violates an invariant.
  Request human_agent = req;
  human_agent.id = "r3";
  human_agent.agent_context = AgentContext{};
  CHECK_THROWS_AS(eng->authorize(human_agent), Error);
}

TEST_CASE("authorize: challenge issues per-kind challenges with deterministic ids") {
  auto eng = make_engine(
      engine_world(),
      "policy \"c\" { when resource.sensitivity >= \"confidential\" then "
      "challenge(verification), challenge(justification) investigate_on_fail }");
  Request req;
  req.id = "r1";
  req.ts = 1000000001000;
  req.accessor_id = "h";
  req.resource_id = "doc";
  req.operation = "read";
  auto rec = eng->authorize(req);
  CHECK(rec.verdict == Verdict::challenge);
  REQUIRE(rec.obligations.size() == 2);
  CHECK(rec.obligations[0].kind == ChallengeKind::justification);
  CHECK(rec.obligations[1].kind == ChallengeKind::verification);
  CHECK(rec.obligations[0].challenge_id == "ch-r1-justification");
  CHECK(rec.obligations[1].challenge_id == "ch-r1-verification");
  const Challenge* ch = eng->challenges().find_challenge("ch-r1-verification");
  REQUIRE(ch != nullptr);
  CHECK(ch->investigate_on_fail);

  // Re-authorizing the same request id reuses the pending challenges.
  auto rec2 = eng->authorize(req);
  CHECK(rec2.obligations[0].challenge_id == rec.obligations[0].challenge_id);
}

TEST_CASE("risk attributes: TTL expiry through the sim clock, exact boundary") {
  auto eng = make_engine(engine_world(),
                         "policy \"risky\" { when risk.sig > 0.5 then deny }\n"
                         "policy \"base\" { when true then allow }");
  RiskAttribute a;
  a.name = "sig";
  a.value = 0.7;
  a.issued_ts = 1000000000000;
  a.ttl_ms = 10000;
  eng->publish_attribute("h", a);

  auto ask = [&](const std::string& id, int64_t ts) {
    Request req;
    req.id = id;
    req.ts = ts;
    req.accessor_id = "h";
    req.resource_id = "wiki";
    req.operation = "read";
    return eng->authorize(req).verdict;
  };
  CHECK(ask("q1", 1000000005000) == Verdict::deny);
  // issued + ttl is still live (expired means issued + ttl < now)…
  CHECK(ask("q2", 1000000010000) == Verdict::deny);
  // …one millisecond later it is gone.
  CHECK(ask("q3", 1000000010001) == Verdict::allow);
  CHECK_FALSE(eng->risk().get("h", "sig", 1000000010001).has_value());
}

TEST_CASE("risk is per accessor: an agent does not inherit its human's attributes") {
  auto eng = make_engine(engine_world(),
                         "policy \"risky\" { when risk.sig > 0.5 then deny }\n"
                         "policy \"base\" { when true then allow }");
  RiskAttribute a;
  a.name = "sig";
  a.value = 0.9;
  a.issued_ts = 1000000000000;
  a.ttl_ms = 1000000;
  eng->publish_attribute("h", a);

  Request req;
  req.id = "r1";
  req.ts = 1000000001000;
  req.accessor_id = "g";
  req.resource_id = "wiki";
  req.operation = "read";
  AgentContext ac;
  ac.declared_intent_tags = {"alpha"};
  req.agent_context = ac;
  CHECK(eng->authorize(req).verdict == Verdict::allow);
}

TEST_CASE("risk threshold opens an investigation; challenge_passed_* never does") {
  auto eng = make_engine(engine_world(), "policy \"base\" { when true then allow }");
  RiskAttribute trust;
  trust.name = "challenge_passed_verification";
  trust.value = 1.0;
  trust.issued_ts = 1000000000000;
  trust.ttl_ms = 10000000;
  eng->publish_attribute("h", trust);

  Request req;
  req.id = "r1";
  req.ts = 1000000001000;
  req.accessor_id = "h";
  req.resource_id = "wiki";
  req.operation = "read";
  eng->authorize(req);
  for (const auto& line : eng->trace_lines())
    CHECK(json::parse(line).at("type") != "investigation");

  RiskAttribute hot;
  hot.name = "scope_deviation";
  hot.value = 0.9;
  hot.issued_ts = 1000000001000;
  hot.ttl_ms = 10000000;
  eng->publish_attribute("h", hot);
  req.id = "r2";
  req.ts = 1000000002000;
  eng->authorize(req);
  bool investigated = false;
  for (const auto& line : eng->trace_lines()) {
    json j = json::parse(line);
    if (j.at("type") == "investigation") {
      investigated = true;
      CHECK(j.at("trigger") == "risk_threshold");
      CHECK(j.at("subject") == "h");
    }
  }
  CHECK(investigated);
}

TEST_CASE("republishing an identical live value neither traces nor refreshes the TTL") {
  auto eng = make_engine(engine_world(), "policy \"base\" { when true then allow }");
  RiskAttribute a;
  a.name = "sig";
  a.value = 0.4;
  a.issued_ts = 1000000000000;
  a.ttl_ms = 5000;
  eng->publish_attribute("h", a);
  std::size_t traces = eng->trace_lines().size();

  RiskAttribute again = a;
  again.issued_ts = 1000000003000;  // would extend the TTL if accepted
  eng->publish_attribute("h", again);
  CHECK(eng->trace_lines().size() == traces);
  CHECK(eng->risk().get("h", "sig", 1000000004000).has_value());
  CHECK_FALSE(eng->risk().get("h", "sig", 1000000006000).has_value());

  // A changed value does replace and trace.
  again.value = 0.6;
  eng->publish_attribute("h", again);
  CHECK(eng->trace_lines().size() == traces + 1);
}

TEST_CASE("investigation resolves agents to their controlling human and applies action") {
  EngineConfig cfg;
  auto eng = make_engine(engine_world(), "policy \"base\" { when true then allow }",
                         1000000000000, cfg);
  // Five out-of-scope accesses (wiki has no tags; doc is covered by h's
  // assignment, so use a second uncovered confidential resource).
  ResourceDescriptor stray;
  stray.id = "stray";
  stray.sensitivity = Sensitivity::confidential;
  stray.owning_team = "t1";
  stray.topic_tags = {"zeta"};
  eng->world().upsert_resource(stray);

  for (int i = 0; i < 5; ++i) {
    Event e;
    e.id = "a" + std::to_string(i);
    e.ts = 1000000000000 + i;
    e.accessor_id = "g";
    e.kind = EventKind::access;
    e.resource_id = "stray";
    eng->ingest(e, /*run_detectors=*/false);
  }
  for (int i = 0; i < 3; ++i) {
    Event e;
    e.id = "b" + std::to_string(i);
    e.ts = 1000000000100 + i;
    e.accessor_id = "g";
    e.kind = EventKind::bulk_export;
    e.resource_id = "stray";
    eng->ingest(e, /*run_detectors=*/false);
  }

  auto report = eng->open_investigation(
      {InvestigationTrigger::Kind::challenge_failed, "test"}, "g");
  CHECK(report.subject == "h");
  CHECK(report.action == InvestigationReport::Action::contain_hard);
  std::set<std::string> names;
  for (const auto& f : report.findings) names.insert(f.name);
  CHECK(names.count("scope_deviation") == 1);
  CHECK(names.count("exfiltration_pattern") == 1);
  const Containment* c = eng->challenges().active_containment("h");
  REQUIRE(c != nullptr);
  CHECK(c->level == ContainLevel::hard);
  // The contained human's agent is denied too.
  CHECK(eng->challenges().active_obligations("g", *eng->world().snapshot()) ==
        ObligationSet::deny_all);
}

TEST_CASE("investigation action rule: lone finding needs >= 0.8; both force hard") {
  // Only scope_deviation at exactly the fraction threshold 0.5 -> below 0.8,
  // so no containment; trace still records the investigation.
  EngineConfig cfg;
  auto eng = make_engine(engine_world(), "policy \"base\" { when true then allow }",
                         1000000000000, cfg);
  ResourceDescriptor stray;
  stray.id = "stray";
  stray.sensitivity = Sensitivity::internal_;
  stray.owning_team = "t1";
  stray.topic_tags = {"zeta"};
  eng->world().upsert_resource(stray);
  for (int i = 0; i < 10; ++i) {
    Event e;
    e.id = "a" + std::to_string(i);
    // Spaced well apart so rapid_succession stays quiet.
    e.ts = 1000000000000 + static_cast<int64_t>(i) * 600000;
    e.accessor_id = "h";
    e.kind = EventKind::access;
    e.resource_id = i < 5 ? "stray" : "doc";  // half deviating, half covered
    eng->ingest(e, /*run_detectors=*/false);
  }
  auto report = eng->open_investigation(
      {InvestigationTrigger::Kind::risk_threshold, "test"}, "h");
  REQUIRE(report.findings.size() == 1);
  CHECK(report.findings[0].name == "scope_deviation");
  CHECK(report.findings[0].value == doctest::Approx(0.5));
  CHECK(report.action == InvestigationReport::Action::none);
  CHECK(eng->challenges().active_containment("h") == nullptr);
}
