#include "bz/reasoning.hpp"

#include <algorithm>

namespace bz {

EngineConfig EngineConfig::from_json(const json& j) {
  EngineConfig c;
  c.ring_k = j.value("ring_k", c.ring_k);
  c.peer_volume_threshold = j.value("peer_volume_threshold", c.peer_volume_threshold);
  c.peer_volume_ttl_ms = j.value("peer_volume_ttl_ms", c.peer_volume_ttl_ms);
  c.scope_fraction = j.value("scope_fraction", c.scope_fraction);
  c.scope_min_support = j.value("scope_min_support", c.scope_min_support);
  c.scope_crossover_max = j.value("scope_crossover_max", c.scope_crossover_max);
  c.scope_ttl_ms = j.value("scope_ttl_ms", c.scope_ttl_ms);
  c.rapid_ops = j.value("rapid_ops", c.rapid_ops);
  c.rapid_subwindow_ms = j.value("rapid_subwindow_ms", c.rapid_subwindow_ms);
  c.rapid_ttl_ms = j.value("rapid_ttl_ms", c.rapid_ttl_ms);
  c.knowledge_min = j.value("knowledge_min", c.knowledge_min);
  c.knowledge_value = j.value("knowledge_value", c.knowledge_value);
  c.knowledge_ttl_ms = j.value("knowledge_ttl_ms", c.knowledge_ttl_ms);
  c.exfil_min = j.value("exfil_min", c.exfil_min);
  c.exfil_ttl_ms = j.value("exfil_ttl_ms", c.exfil_ttl_ms);
  c.investigation_trigger = j.value("investigation_trigger", c.investigation_trigger);
  c.investigation_window_ms = j.value("investigation_window_ms", c.investigation_window_ms);
  c.detector_window_ms = j.value("detector_window_ms", c.detector_window_ms);
  c.challenge_expiry_ms = j.value("challenge_expiry_ms", c.challenge_expiry_ms);
  c.challenge_pass_ttl_ms = j.value("challenge_pass_ttl_ms", c.challenge_pass_ttl_ms);
  c.clock_mode = j.value("clock_mode", c.clock_mode);
  c.seed = j.value("seed", c.seed);
  return c;
}

Request request_from_json(const json& j) {
  Request r;
  r.id = j.at("id").get<std::string>();
  r.ts = j.value("ts", int64_t{0});
  r.accessor_id = j.at("accessor_id").get<std::string>();
  r.resource_id = j.at("resource_id").get<std::string>();
  r.operation = j.value("operation", "read");
  if (j.contains("agent_context") && !j.at("agent_context").is_null()) {
    AgentContext ac;
    const json& a = j.at("agent_context");
    if (a.contains("declared_intent_tags"))
      for (const auto& t : a.at("declared_intent_tags"))
        ac.declared_intent_tags.insert(to_lower(t.get<std::string>()));
    ac.plan_summary = a.value("plan_summary", "");
    r.agent_context = std::move(ac);
  }
  return r;
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::allow: return "allow";
    case Verdict::challenge: return "challenge";
    case Verdict::deny: return "deny";
    case Verdict::contain: return "contain";
  }
  return "deny";
}

int severity(Verdict v) { return static_cast<int>(v); }

json DecisionRecord::to_json() const {
  json j;
  j["request_id"] = request_id;
  j["ts"] = ts;
  j["verdict"] = to_string(verdict);
  json obs = json::array();
  for (const auto& o : obligations)
    obs.push_back({{"challenge_id", o.challenge_id}, {"kind", to_string(o.kind)}});
  j["obligations"] = obs;
  j["matched_rules"] = matched_rules;
  json attrs = json::object();
  for (const auto& [k, v] : attributes_used) attrs[k] = v;
  j["attributes_used"] = attrs;
  j["snapshot_version"] = snapshot_version;
  j["policy_version"] = policy_version;
  return j;
}

CombineResult combine(const std::vector<RuleOutcome>& outcomes, ObligationSet active) {
  CombineResult out;
  bool any_effect = false;
  int max_sev = -1;
  std::set<int> challenge_ranks;
  int contain_level = -1;

  auto feed = [&](const Effect& e) {
    any_effect = true;
    int sev = 0;
    switch (e.kind) {
      case Effect::Kind::allow: sev = 0; break;
      case Effect::Kind::challenge:
        sev = 1;
        challenge_ranks.insert(challenge_rank(e.challenge));
        break;
      case Effect::Kind::deny: sev = 2; break;
      case Effect::Kind::contain:
        sev = 3;
        contain_level = std::max(contain_level, static_cast<int>(e.contain));
        break;
    }
    max_sev = std::max(max_sev, sev);
  };

  for (const auto& o : outcomes)
    for (const auto& e : o.effects) feed(e);
  if (active == ObligationSet::require_verification)
    feed({Effect::Kind::challenge, ChallengeKind::verification, ContainLevel::soft});
  else if (active == ObligationSet::deny_all)
    feed({Effect::Kind::deny, ChallengeKind::justification, ContainLevel::soft});

  if (!any_effect) {
    out.verdict = Verdict::deny;  // zero-trust default
    return out;
  }
  out.verdict = static_cast<Verdict>(max_sev);
  if (out.verdict == Verdict::challenge)
    for (int r : challenge_ranks) out.obligations.push_back(static_cast<ChallengeKind>(r));
  if (out.verdict == Verdict::contain && contain_level >= 0)
    out.contain_level = static_cast<ContainLevel>(contain_level);
  return out;
}

double intent_alignment(const std::optional<AgentContext>& agent_ctx,
                        const ResourceDescriptor& resource) {
  if (!agent_ctx) return 0.0;
  return jaccard(agent_ctx->declared_intent_tags, resource.topic_tags);
}

// ---------------------------------------------------------------------------
// Engine

Engine::Engine(EngineConfig cfg, std::shared_ptr<Clock> clock)
    : cfg_(cfg), clock_(std::move(clock)), intake_(cfg.ring_k) {}

SimClock* Engine::sim_clock() { return dynamic_cast<SimClock*>(clock_.get()); }

uint64_t Engine::load_world(const json& doc) { return world_.load_document(doc); }

uint64_t Engine::load_policy(const std::string& text) {
  PolicySet ps = parse_policy(text);
  auto compiled =
      std::make_shared<CompiledPolicySet>(compile(ps, AttributeSchema::standard()));
  std::lock_guard<std::mutex> lk(mu_);
  policy_ = std::move(compiled);
  return ++policy_version_;
}

void Engine::trace_line(json j) { trace_.push_back(j.dump()); }

RequestContext Engine::build_context(const Request& req) {
  std::lock_guard<std::mutex> lk(mu_);
  return build_context_locked(req);
}

RequestContext Engine::build_context_locked(const Request& req) {
  RequestContext ctx;
  ctx.request = req;
  ctx.snapshot = world_.snapshot();
  const WorldSnapshot& snap = *ctx.snapshot;
  const AccessorProfile* acc = snap.find_accessor(req.accessor_id);
  const ResourceDescriptor* res = snap.find_resource(req.resource_id);
  if (!acc || !res)
    throw Error("unknown-entity", "unknown accessor or resource in request " + req.id);
  if (req.agent_context && acc->kind != AccessorKind::agent)
    throw Error("invariant-violation",
                "agent_context on a request from a human accessor");

  int64_t now = clock_->now_ms();
  auto& s = ctx.eval.str_attrs;
  s["accessor.id"] = acc->id;
  s["accessor.kind"] = to_string(acc->kind);
  s["accessor.job_function"] = acc->job_function;
  s["accessor.role"] = acc->role;
  s["accessor.seniority"] = acc->seniority;
  s["accessor.team_id"] = acc->team_id;
  s["accessor.static_risk_tier"] = to_string(acc->static_risk_tier);
  s["resource.id"] = res->id;
  s["resource.sensitivity"] = to_string(res->sensitivity);
  s["resource.data_type"] = res->data_type;
  s["resource.owning_team"] = res->owning_team;
  s["request.operation"] = req.operation;
  ctx.eval.set_attrs["accessor.topic_tags"] = acc->topic_tags;
  ctx.eval.set_attrs["resource.topic_tags"] = res->topic_tags;
  ctx.eval.set_attrs["resource.authorized_worker_functions"] =
      res->authorized_worker_functions;
  ctx.eval.risk = risk_.view(req.accessor_id, now);
  ctx.eval.covers = assignment_covers(snap, req.accessor_id, req.resource_id, now);
  ctx.eval.crossover = subject_crossover(snap, req.accessor_id, req.resource_id);
  ctx.eval.intent_alignment = intent_alignment(req.agent_context, *res);
  return ctx;
}

DecisionRecord Engine::authorize(const Request& req) {
  std::lock_guard<std::mutex> lk(mu_);
  if (!policy_) throw Error("policy-compile-failure", "engine has no compiled policy");
  int64_t now = clock_->now_ms();
  if (auto* sim = sim_clock(); sim && req.ts > 0) {
    sim->advance_to(req.ts);
    now = sim->now_ms();
  }

  RequestContext ctx = build_context_locked(req);
  std::vector<RuleOutcome> outcomes = policy_->evaluate(ctx.eval);
  ObligationSet active =
      challenges_.active_obligations(req.accessor_id, *ctx.snapshot);
  CombineResult cr = combine(outcomes, active);

  DecisionRecord rec;
  rec.request_id = req.id;
  rec.ts = now;
  rec.verdict = cr.verdict;
  for (const auto& o : outcomes) rec.matched_rules.push_back(o.rule_name);
  std::sort(rec.matched_rules.begin(), rec.matched_rules.end());
  for (const auto& [name, value] : ctx.eval.risk)
    rec.attributes_used["risk." + name] = value;
  rec.attributes_used["builtin.assignment_covers"] = ctx.eval.covers ? 1.0 : 0.0;
  rec.attributes_used["builtin.crossover"] = ctx.eval.crossover;
  rec.attributes_used["builtin.intent_alignment"] = ctx.eval.intent_alignment;
  rec.snapshot_version = ctx.snapshot->version;
  rec.policy_version = policy_version_;

  if (cr.verdict == Verdict::challenge) {
    for (ChallengeKind kind : cr.obligations) {
      bool investigate = false;
      for (const auto& o : outcomes) {
        if (!o.investigate_on_fail) continue;
        for (const auto& e : o.effects)
          if (e.kind == Effect::Kind::challenge && e.challenge == kind)
            investigate = true;
      }
      Challenge& ch = challenges_.issue(kind, req.accessor_id, req.id, investigate, now,
                                        cfg_.challenge_expiry_ms);
      rec.obligations.push_back({ch.id, kind});
    }
  }

  decisions_[req.id] = rec;
  decision_requests_[req.id] = req;
  trace_line({{"type", "decision"}, {"record", rec.to_json()}});

  if (cr.verdict == Verdict::contain) {
    bool changed = false;
    LiftAuthority auth = cr.contain_level == ContainLevel::hard
                             ? LiftAuthority::manual
                             : LiftAuthority::challenge_pass;
    Containment& c = challenges_.apply_containment(
        req.accessor_id, cr.contain_level, "policy rule containment", auth, now,
        &changed);
    if (changed) trace_line({{"type", "containment"}, {"containment", containment_to_json(c)}});
  }

  // The fast path emits its own access event into intake (write-only; detector
  // passes run on external ingests, not here).
  Event evt;
  evt.id = "evt-" + req.id;
  evt.ts = now;
  evt.accessor_id = req.accessor_id;
  evt.kind = EventKind::access;
  evt.resource_id = req.resource_id;
  evt.operation = req.operation;
  evt.payload["verdict"] = to_string(cr.verdict);
  try {
    intake_.ingest(evt, *ctx.snapshot);
  } catch (const Error&) {
    // duplicate request id: the decision stands, the event is not re-logged
  }

  // Risk-threshold investigation trigger. challenge_passed_* attributes are
  // positive trust signals and never count toward it.
  for (const auto& [name, value] : ctx.eval.risk) {
    if (name.rfind("challenge_passed_", 0) == 0) continue;
    if (value >= cfg_.investigation_trigger) {
      investigate_locked({InvestigationTrigger::Kind::risk_threshold,
                          "risk." + name + " >= threshold at request " + req.id},
                         req.accessor_id);
      break;
    }
  }
  return rec;
}

void Engine::ingest(const Event& e, bool run_detectors) {
  std::lock_guard<std::mutex> lk(mu_);
  if (auto* sim = sim_clock(); sim && e.ts > 0) sim->advance_to(e.ts);
  Event copy = e;
  if (copy.ts == 0) copy.ts = clock_->now_ms();
  intake_.ingest(copy, *world_.snapshot());
  if (run_detectors) pump_locked(e.accessor_id);
}

void Engine::pump_detectors(const std::string& accessor_id) {
  std::lock_guard<std::mutex> lk(mu_);
  pump_locked(accessor_id);
}

void Engine::pump_locked(const std::string& accessor_id) {
  SnapshotPtr snap = world_.snapshot();
  int64_t now = clock_->now_ms();
  const auto& log = intake_.scan_log();
  int64_t w = cfg_.detector_window_ms;
  const std::array<std::optional<RiskAttribute>, 5> results = {
      detect_peer_volume_anomaly(log, *snap, accessor_id, w, now, cfg_),
      detect_scope_deviation(log, *snap, accessor_id, w, now, cfg_),
      detect_rapid_succession(log, *snap, accessor_id, w, now, cfg_),
      detect_knowledge_inconsistency(log, *snap, accessor_id, w, now, cfg_),
      detect_exfiltration_pattern(log, *snap, accessor_id, w, now, cfg_),
  };
  for (const auto& r : results)
    if (r) publish_locked(accessor_id, *r);
}

void Engine::publish_attribute(const std::string& accessor_id, RiskAttribute attr) {
  std::lock_guard<std::mutex> lk(mu_);
  publish_locked(accessor_id, std::move(attr));
}

void Engine::publish_locked(const std::string& accessor_id, RiskAttribute attr) {
  // Re-publishing an identical live value keeps the original TTL and stays out
  // of the trace.
  auto cur = risk_.get(accessor_id, attr.name, clock_->now_ms());
  if (cur && cur->value == attr.value) return;
  trace_line({{"type", "risk_attribute"},
              {"accessor_id", accessor_id},
              {"name", attr.name},
              {"value", attr.value},
              {"ttl_ms", attr.ttl_ms}});
  risk_.publish(accessor_id, std::move(attr));
}

ChallengeState Engine::respond_challenge(
    const std::string& challenge_id, const std::map<std::string, std::string>& payload) {
  std::lock_guard<std::mutex> lk(mu_);
  return respond_locked(challenge_id, payload);
}

ChallengeState Engine::respond_locked(
    const std::string& challenge_id, const std::map<std::string, std::string>& payload) {
  const Challenge* ch = challenges_.find_challenge(challenge_id);
  if (!ch) throw Error("unknown-challenge", "unknown challenge: " + challenge_id);
  SnapshotPtr snap = world_.snapshot();

  ChallengeManager::AdjudicationContext ctx;
  ctx.snapshot = snap.get();
  ctx.now_ms = clock_->now_ms();
  auto rit = decision_requests_.find(ch->linked_decision);
  if (rit != decision_requests_.end())
    ctx.resource = snap->find_resource(rit->second.resource_id);

  const Containment* before = challenges_.active_containment(ch->subject_accessor);
  std::string before_id = before ? before->id : "";

  ChallengeState state = challenges_.respond(challenge_id, payload, ctx);
  trace_line({{"type", "challenge"},
              {"id", challenge_id},
              {"kind", to_string(ch->kind)},
              {"subject", ch->subject_accessor},
              {"state", to_string(state)}});

  if (state == ChallengeState::passed) {
    RiskAttribute passed;
    passed.name = std::string("challenge_passed_") + to_string(ch->kind);
    passed.value = 1.0;
    passed.issued_ts = ctx.now_ms;
    passed.ttl_ms = cfg_.challenge_pass_ttl_ms;
    passed.detector_id = "challenge";
    passed.evidence = {challenge_id};
    publish_locked(ch->subject_accessor, std::move(passed));
    if (!before_id.empty() && !challenges_.active_containment(ch->subject_accessor)) {
      trace_line({{"type", "containment_lifted"},
                  {"id", before_id},
                  {"authority", "challenge_pass"}});
    }
  } else if (state == ChallengeState::failed && ch->investigate_on_fail) {
    investigate_locked({InvestigationTrigger::Kind::challenge_failed,
                        "challenge " + challenge_id + " failed"},
                       ch->subject_accessor);
  }
  return state;
}

void Engine::lift_containment(const std::string& containment_id,
                              LiftAuthority authority) {
  std::lock_guard<std::mutex> lk(mu_);
  challenges_.lift_containment(containment_id, authority);
  trace_line({{"type", "containment_lifted"},
              {"id", containment_id},
              {"authority", to_string(authority)}});
}

InvestigationReport Engine::open_investigation(InvestigationTrigger trigger,
                                               const std::string& accessor_id) {
  std::lock_guard<std::mutex> lk(mu_);
  return investigate_locked(std::move(trigger), accessor_id);
}

InvestigationReport Engine::investigate_locked(InvestigationTrigger trigger,
                                               const std::string& accessor_id) {
  SnapshotPtr snap = world_.snapshot();
  int64_t now = clock_->now_ms();

  std::string subject = accessor_id;
  if (const AccessorProfile* acc = snap->find_accessor(accessor_id);
      acc && acc->kind == AccessorKind::agent && acc->controlling_human)
    subject = *acc->controlling_human;

  InvestigationReport report;
  report.trigger = std::move(trigger);
  report.subject = subject;
  report.window_ms = cfg_.investigation_window_ms;

  const auto& log = intake_.scan_log();
  int64_t w = cfg_.investigation_window_ms;
  const std::array<std::optional<RiskAttribute>, 5> results = {
      detect_peer_volume_anomaly(log, *snap, subject, w, now, cfg_),
      detect_scope_deviation(log, *snap, subject, w, now, cfg_),
      detect_rapid_succession(log, *snap, subject, w, now, cfg_),
      detect_knowledge_inconsistency(log, *snap, subject, w, now, cfg_),
      detect_exfiltration_pattern(log, *snap, subject, w, now, cfg_),
  };
  bool exfil = false, scope = false;
  double max_key_value = 0.0;
  for (const auto& r : results) {
    if (!r) continue;
    report.findings.push_back(*r);
    publish_locked(subject, *r);
    if (r->name == "exfiltration_pattern") {
      exfil = true;
      max_key_value = std::max(max_key_value, r->value);
    }
    if (r->name == "scope_deviation") {
      scope = true;
      max_key_value = std::max(max_key_value, r->value);
    }
  }
  if (exfil && scope) {
    report.action = InvestigationReport::Action::contain_hard;
  } else if ((exfil || scope) && max_key_value >= 0.8) {
    // A lone finding must itself be high-confidence before containing.
    report.action = InvestigationReport::Action::contain_soft;
  }

  json findings = json::array();
  for (const auto& f : report.findings)
    findings.push_back({{"name", f.name}, {"value", f.value}});
  trace_line({{"type", "investigation"},
              {"trigger", report.trigger.kind == InvestigationTrigger::Kind::challenge_failed
                              ? "challenge_failed"
                              : "risk_threshold"},
              {"subject", subject},
              {"findings", findings},
              {"action", report.action == InvestigationReport::Action::contain_hard
                             ? "contain_hard"
                         : report.action == InvestigationReport::Action::contain_soft
                             ? "contain_soft"
                             : "none"},
              {"escalated", report.escalated}});

  if (report.action != InvestigationReport::Action::none) {
    bool hard = report.action == InvestigationReport::Action::contain_hard;
    bool changed = false;
    Containment& c = challenges_.apply_containment(
        subject, hard ? ContainLevel::hard : ContainLevel::soft,
        "autonomous investigation", hard ? LiftAuthority::manual : LiftAuthority::challenge_pass,
        now, &changed);
    if (changed)
      trace_line({{"type", "containment"}, {"containment", containment_to_json(c)}});
  }
  return report;
}

const DecisionRecord* Engine::find_decision(const std::string& request_id) const {
  auto it = decisions_.find(request_id);
  return it == decisions_.end() ? nullptr : &it->second;
}

std::string Engine::trace_dump() const {
  std::string out;
  for (const auto& line : trace_) {
    out += line;
    out += "\n";
  }
  return out;
}

}  // namespace bz
