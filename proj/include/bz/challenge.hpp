#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bz/policy.hpp"
#include "bz/util.hpp"
#include "bz/world.hpp"

namespace bz {

enum class ChallengeState { pending, passed, failed, expired };
enum class LiftAuthority { challenge_pass, manual };

const char* to_string(ChallengeState s);
const char* to_string(LiftAuthority a);
LiftAuthority lift_authority_from(const std::string& s);

struct Challenge {
  std::string id;
  ChallengeKind kind = ChallengeKind::justification;
  std::string subject_accessor;
  std::string linked_decision;
  ChallengeState state = ChallengeState::pending;
  int64_t issued_ts = 0;
  int64_t expiry_ms = 0;
  bool investigate_on_fail = false;
  std::map<std::string, std::string> response_payload;
};

struct Containment {
  std::string id;
  std::string accessor_id;
  ContainLevel level = ContainLevel::soft;
  std::string reason;
  int64_t created_ts = 0;
  bool lifted = false;
  LiftAuthority lift_authority = LiftAuthority::manual;
};

json challenge_to_json(const Challenge& c);
json containment_to_json(const Containment& c);

/// Count of tokens shared between the lowercased justification text and the
/// resource's topic tags; the pass threshold is >= 1.
int verify_justification(const std::string& text, const ResourceDescriptor& resource);

/// Effects a containment injects into every authorization for its accessor.
enum class ObligationSet { none, require_verification, deny_all };

/// Challenge issuance/response state machines plus the containment lifecycle.
/// Adjudication of a response needs the world and the linked decision's
/// resource, which the caller supplies.
class ChallengeManager {
 public:
  struct AdjudicationContext {
    const WorldSnapshot* snapshot = nullptr;
    const ResourceDescriptor* resource = nullptr;  // of the linked decision
    int64_t now_ms = 0;
  };

  /// Idempotent on (kind, subject, linked_decision): re-issuing returns the
  /// existing pending challenge.
  Challenge& issue(ChallengeKind kind, const std::string& subject,
                   const std::string& linked_decision, bool investigate_on_fail,
                   int64_t now_ms, int64_t expiry_ms);

  /// Adjudicates a pending challenge. Throws "unknown-challenge",
  /// "already-terminal" or "expired". On pass, lifts any soft containment of
  /// the subject whose lift authority is challenge_pass.
  ChallengeState respond(const std::string& challenge_id,
                         const std::map<std::string, std::string>& payload,
                         const AdjudicationContext& ctx);

  Containment& apply_containment(const std::string& accessor_id, ContainLevel level,
                                 const std::string& reason, LiftAuthority authority,
                                 int64_t now_ms, bool* changed = nullptr);

  void lift_containment(const std::string& containment_id, LiftAuthority authority);

  /// Containment-injected effects, resolving agents to their controlling
  /// human so containing a human also contains their agents.
  ObligationSet active_obligations(const std::string& accessor_id,
                                   const WorldSnapshot& snap) const;

  const Challenge* find_challenge(const std::string& id) const;
  const Containment* active_containment(const std::string& accessor_id) const;
  std::vector<const Containment*> containments_for(const std::string& accessor_id) const;

 private:
  Containment* active_mut(const std::string& accessor_id);

  std::map<std::string, Challenge> challenges_;  // by id
  std::vector<Containment> containments_;
  uint64_t containment_seq_ = 0;
};

}  // namespace bz
