#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bz/challenge.hpp"
#include "bz/clock.hpp"
#include "bz/intake.hpp"
#include "bz/policy.hpp"
#include "bz/risk.hpp"
#include "bz/world.hpp"

namespace bz {

struct EngineConfig {
  std::size_t ring_k = 256;

  // Detector thresholds. The peer-volume rule fires at 6x the peer median
  // ("baseline plus five times baseline").
  double peer_volume_threshold = 6.0;
  int64_t peer_volume_ttl_ms = 24 * 3600 * 1000LL;
  double scope_fraction = 0.5;
  int scope_min_support = 5;
  double scope_crossover_max = 0.2;
  int64_t scope_ttl_ms = 24 * 3600 * 1000LL;
  int rapid_ops = 10;
  int64_t rapid_subwindow_ms = 5000;
  int64_t rapid_ttl_ms = 3600 * 1000LL;
  int knowledge_min = 3;
  double knowledge_value = 0.8;
  int64_t knowledge_ttl_ms = 12 * 3600 * 1000LL;
  int exfil_min = 3;
  int64_t exfil_ttl_ms = 24 * 3600 * 1000LL;

  double investigation_trigger = 0.8;
  int64_t investigation_window_ms = 7 * 24 * 3600 * 1000LL;
  int64_t detector_window_ms = 24 * 3600 * 1000LL;
  int64_t challenge_expiry_ms = 24 * 3600 * 1000LL;
  int64_t challenge_pass_ttl_ms = 3600 * 1000LL;

  std::string clock_mode = "real";  // real | sim
  uint64_t seed = 0;

  static EngineConfig from_json(const json& j);
};

struct AgentContext {
  std::set<std::string> declared_intent_tags;
  std::string plan_summary;
};

struct Request {
  std::string id;
  int64_t ts = 0;
  std::string accessor_id;
  std::string resource_id;
  std::string operation;
  std::optional<AgentContext> agent_context;
};

Request request_from_json(const json& j);

enum class Verdict { allow = 0, challenge = 1, deny = 2, contain = 3 };
const char* to_string(Verdict v);
int severity(Verdict v);

struct Obligation {
  std::string challenge_id;
  ChallengeKind kind;
};

struct DecisionRecord {
  std::string request_id;
  int64_t ts = 0;
  Verdict verdict = Verdict::deny;
  std::vector<Obligation> obligations;       // non-empty iff verdict == challenge
  std::vector<std::string> matched_rules;    // sorted
  std::map<std::string, double> attributes_used;
  uint64_t snapshot_version = 0;
  uint64_t policy_version = 0;

  json to_json() const;
};

/// One request with everything resolved against a single snapshot + hot cache.
struct RequestContext {
  Request request;
  SnapshotPtr snapshot;
  EvalContext eval;
};

struct CombineResult {
  Verdict verdict = Verdict::deny;
  std::vector<ChallengeKind> obligations;  // set union, ordered by kind rank
  ContainLevel contain_level = ContainLevel::soft;  // when verdict == contain
};

/// Joins matched effects plus containment-injected obligations under the
/// severity lattice allow < challenge < deny < contain. Empty input is deny.
CombineResult combine(const std::vector<RuleOutcome>& outcomes, ObligationSet active);

/// Jaccard overlap of an agent's declared intent tags and the resource's
/// topic tags; 0 without agent context.
double intent_alignment(const std::optional<AgentContext>& agent_ctx,
                        const ResourceDescriptor& resource);

// ---------------------------------------------------------------------------
// Slow-path detectors. Pure over an event log slice so brute-force oracles can
// check them; the engine feeds them the long-term log.

std::optional<RiskAttribute> detect_peer_volume_anomaly(
    const std::vector<Event>& log, const WorldSnapshot& snap,
    const std::string& accessor_id, int64_t window_ms, int64_t now_ms,
    const EngineConfig& cfg);

std::optional<RiskAttribute> detect_scope_deviation(
    const std::vector<Event>& log, const WorldSnapshot& snap,
    const std::string& accessor_id, int64_t window_ms, int64_t now_ms,
    const EngineConfig& cfg);

std::optional<RiskAttribute> detect_rapid_succession(
    const std::vector<Event>& log, const WorldSnapshot& snap,
    const std::string& accessor_id, int64_t window_ms, int64_t now_ms,
    const EngineConfig& cfg);

std::optional<RiskAttribute> detect_knowledge_inconsistency(
    const std::vector<Event>& log, const WorldSnapshot& snap,
    const std::string& accessor_id, int64_t window_ms, int64_t now_ms,
    const EngineConfig& cfg);

std::optional<RiskAttribute> detect_exfiltration_pattern(
    const std::vector<Event>& log, const WorldSnapshot& snap,
    const std::string& accessor_id, int64_t window_ms, int64_t now_ms,
    const EngineConfig& cfg);

struct InvestigationTrigger {
  enum class Kind { challenge_failed, risk_threshold };
  Kind kind = Kind::risk_threshold;
  std::string detail;
};

struct InvestigationReport {
  InvestigationTrigger trigger;
  std::string subject;  // agents resolve to the controlling human
  int64_t window_ms = 0;
  std::vector<RiskAttribute> findings;
  enum class Action { none, contain_soft, contain_hard };
  Action action = Action::none;
  bool escalated = false;  // human-review routing is recorded, not implemented
};

// ---------------------------------------------------------------------------

/// The policy decision point: fast-path authorization over compiled policy and
/// live risk attributes, slow-path detectors and investigations behind it.
class Engine {
 public:
  Engine(EngineConfig cfg, std::shared_ptr<Clock> clock);

  uint64_t load_world(const json& doc);
  uint64_t load_policy(const std::string& text);  // throws compile-rejected

  RequestContext build_context(const Request& req);
  DecisionRecord authorize(const Request& req);
  void ingest(const Event& e, bool run_detectors = true);
  ChallengeState respond_challenge(const std::string& challenge_id,
                                   const std::map<std::string, std::string>& payload);
  InvestigationReport open_investigation(InvestigationTrigger trigger,
                                         const std::string& accessor_id);

  /// Runs every detector for one accessor over the long-term log and publishes
  /// what fires. Called after externally ingested events, never by authorize.
  void pump_detectors(const std::string& accessor_id);

  void publish_attribute(const std::string& accessor_id, RiskAttribute attr);
  void lift_containment(const std::string& containment_id, LiftAuthority authority);

  WorldStore& world() { return world_; }
  Intake& intake() { return intake_; }
  RiskTable& risk() { return risk_; }
  ChallengeManager& challenges() { return challenges_; }
  Clock& clock() { return *clock_; }
  SimClock* sim_clock();
  const EngineConfig& config() const { return cfg_; }

  uint64_t policy_version() const { return policy_version_; }
  std::shared_ptr<const CompiledPolicySet> policy() const { return policy_; }
  const DecisionRecord* find_decision(const std::string& request_id) const;

  const std::vector<std::string>& trace_lines() const { return trace_; }
  std::string trace_dump() const;

  std::mutex& mutex() { return mu_; }

 private:
  void trace_line(json j);
  InvestigationReport investigate_locked(InvestigationTrigger trigger,
                                         const std::string& accessor_id);
  void pump_locked(const std::string& accessor_id);
  void publish_locked(const std::string& accessor_id, RiskAttribute attr);
  ChallengeState respond_locked(const std::string& challenge_id,
                                const std::map<std::string, std::string>& payload);
  RequestContext build_context_locked(const Request& req);

  EngineConfig cfg_;
  std::shared_ptr<Clock> clock_;
  WorldStore world_;
  Intake intake_;
  RiskTable risk_;
  ChallengeManager challenges_;
  std::shared_ptr<const CompiledPolicySet> policy_;
  uint64_t policy_version_ = 0;
  std::map<std::string, DecisionRecord> decisions_;
  std::map<std::string, Request> decision_requests_;
  std::vector<std::string> trace_;
  mutable std::mutex mu_;
};

}  // namespace bz
