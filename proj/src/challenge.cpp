#include "bz/challenge.hpp"

namespace bz {

const char* to_string(ChallengeState s) {
  switch (s) {
    case ChallengeState::pending: return "pending";
    case ChallengeState::passed: return "passed";
    case ChallengeState::failed: return "failed";
    case ChallengeState::expired: return "expired";
  }
  return "pending";
}

const char* to_string(LiftAuthority a) {
  return a == LiftAuthority::challenge_pass ? "challenge_pass" : "manual";
}

LiftAuthority lift_authority_from(const std::string& s) {
  if (s == "challenge_pass") return LiftAuthority::challenge_pass;
  if (s == "manual") return LiftAuthority::manual;
  throw Error("wrong-authority", "unknown lift authority: " + s);
}

json challenge_to_json(const Challenge& c) {
  json j;
  j["id"] = c.id;
  j["kind"] = to_string(c.kind);
  j["subject_accessor"] = c.subject_accessor;
  j["linked_decision"] = c.linked_decision;
  j["state"] = to_string(c.state);
  j["issued_ts"] = c.issued_ts;
  j["expiry_ms"] = c.expiry_ms;
  return j;
}

json containment_to_json(const Containment& c) {
  json j;
  j["id"] = c.id;
  j["accessor_id"] = c.accessor_id;
  j["level"] = to_string(c.level);
  j["reason"] = c.reason;
  j["created_ts"] = c.created_ts;
  j["lifted"] = c.lifted;
  j["lift_authority"] = to_string(c.lift_authority);
  return j;
}

int verify_justification(const std::string& text, const ResourceDescriptor& resource) {
  int shared = 0;
  std::set<std::string> seen;
  for (const auto& tok : tokenize(text)) {
    if (resource.topic_tags.count(tok) && seen.insert(tok).second) ++shared;
  }
  return shared;
}

Challenge& ChallengeManager::issue(ChallengeKind kind, const std::string& subject,
                                   const std::string& linked_decision,
                                   bool investigate_on_fail, int64_t now_ms,
                                   int64_t expiry_ms) {
  std::string id = "ch-" + linked_decision + "-" + to_string(kind);
  auto it = challenges_.find(id);
  if (it != challenges_.end() && it->second.state == ChallengeState::pending)
    return it->second;
  if (it != challenges_.end()) return it->second;  // terminal stays terminal
  Challenge c;
  c.id = id;
  c.kind = kind;
  c.subject_accessor = subject;
  c.linked_decision = linked_decision;
  c.issued_ts = now_ms;
  c.expiry_ms = expiry_ms;
  c.investigate_on_fail = investigate_on_fail;
  return challenges_.emplace(id, std::move(c)).first->second;
}

namespace {

bool team_is_ancestor_or_self(const WorldSnapshot& snap, const std::string& candidate,
                              const std::string& team) {
  const OrgNode* cur = nullptr;
  auto it = snap.org.find(team);
  if (it == snap.org.end()) return false;
  cur = &it->second;
  std::size_t hops = 0;
  for (;;) {
    if (cur->id == candidate) return true;
    if (!cur->parent) return false;
    auto pit = snap.org.find(*cur->parent);
    if (pit == snap.org.end()) return false;
    cur = &pit->second;
    if (++hops > snap.org.size()) return false;
  }
}

bool adjudicate(const Challenge& c, const std::map<std::string, std::string>& payload,
                const ChallengeManager::AdjudicationContext& ctx) {
  auto field = [&](const char* k) -> std::string {
    auto it = payload.find(k);
    return it == payload.end() ? "" : it->second;
  };
  switch (c.kind) {
    case ChallengeKind::verification:
    case ChallengeKind::biometric:
      // Hardware and biometric verifiers are simulated; a real verifier slots
      // in behind this check.
      return field("asserted") == "true";
    case ChallengeKind::approval_owner: {
      if (!ctx.snapshot || !ctx.resource) return false;
      const AccessorProfile* approver = ctx.snapshot->find_accessor(field("approver"));
      return approver && approver->kind == AccessorKind::human &&
             approver->team_id == ctx.resource->owning_team;
    }
    case ChallengeKind::approval_manager: {
      if (!ctx.snapshot) return false;
      const AccessorProfile* approver = ctx.snapshot->find_accessor(field("approver"));
      const AccessorProfile* subject =
          ctx.snapshot->find_accessor(c.subject_accessor);
      if (!approver || !subject || approver->kind != AccessorKind::human) return false;
      if (approver->id == subject->id) return false;
      if (subject->kind == AccessorKind::agent && subject->controlling_human)
        subject = ctx.snapshot->find_accessor(*subject->controlling_human);
      if (!subject) return false;
      return approver->role == "manager" &&
             team_is_ancestor_or_self(*ctx.snapshot, approver->team_id,
                                      subject->team_id);
    }
    case ChallengeKind::justification: {
      if (!ctx.resource) return false;
      return verify_justification(field("text"), *ctx.resource) >= 1;
    }
  }
  return false;
}

}  // namespace

ChallengeState ChallengeManager::respond(const std::string& challenge_id,
                                         const std::map<std::string, std::string>& payload,
                                         const AdjudicationContext& ctx) {
  auto it = challenges_.find(challenge_id);
  if (it == challenges_.end())
    throw Error("unknown-challenge", "unknown challenge: " + challenge_id);
  Challenge& c = it->second;
  if (c.state != ChallengeState::pending)
    throw Error("already-terminal",
                "challenge " + challenge_id + " is " + to_string(c.state));
  if (ctx.now_ms > c.issued_ts + c.expiry_ms) {
    c.state = ChallengeState::expired;
    throw Error("expired", "challenge " + challenge_id + " expired");
  }
  c.response_payload = payload;
  c.state = adjudicate(c, payload, ctx) ? ChallengeState::passed : ChallengeState::failed;

  if (c.state == ChallengeState::passed) {
    Containment* active = active_mut(c.subject_accessor);
    if (active && active->level == ContainLevel::soft &&
        active->lift_authority == LiftAuthority::challenge_pass)
      active->lifted = true;
  }
  return c.state;
}

Containment& ChallengeManager::apply_containment(const std::string& accessor_id,
                                                 ContainLevel level,
                                                 const std::string& reason,
                                                 LiftAuthority authority, int64_t now_ms,
                                                 bool* changed) {
  if (level == ContainLevel::hard) authority = LiftAuthority::manual;
  Containment* active = active_mut(accessor_id);
  if (active) {
    if (level == ContainLevel::hard && active->level == ContainLevel::soft) {
      active->level = ContainLevel::hard;
      active->lift_authority = LiftAuthority::manual;
      active->reason = reason;
      if (changed) *changed = true;
    } else {
      if (changed) *changed = false;  // same or lower level keeps the active one
    }
    return *active;
  }
  Containment c;
  c.id = "ct-" + accessor_id + "-" + std::to_string(containment_seq_++);
  c.accessor_id = accessor_id;
  c.level = level;
  c.reason = reason;
  c.created_ts = now_ms;
  c.lift_authority = authority;
  containments_.push_back(std::move(c));
  if (changed) *changed = true;
  return containments_.back();
}

void ChallengeManager::lift_containment(const std::string& containment_id,
                                        LiftAuthority authority) {
  for (auto& c : containments_) {
    if (c.id != containment_id) continue;
    if (c.lifted) throw Error("not-active", "containment already lifted");
    if (c.level == ContainLevel::hard && authority != LiftAuthority::manual)
      throw Error("wrong-authority", "hard containment requires a manual lift");
    c.lifted = true;
    return;
  }
  throw Error("not-active", "unknown containment: " + containment_id);
}

ObligationSet ChallengeManager::active_obligations(const std::string& accessor_id,
                                                   const WorldSnapshot& snap) const {
  auto level_for = [&](const std::string& id) -> std::optional<ContainLevel> {
    const Containment* c = active_containment(id);
    return c ? std::optional<ContainLevel>(c->level) : std::nullopt;
  };
  std::optional<ContainLevel> own = level_for(accessor_id);
  const AccessorProfile* acc = snap.find_accessor(accessor_id);
  if (acc && acc->kind == AccessorKind::agent && acc->controlling_human) {
    std::optional<ContainLevel> human = level_for(*acc->controlling_human);
    if (human && (!own || *human > *own)) own = human;
  }
  if (!own) return ObligationSet::none;
  return *own == ContainLevel::hard ? ObligationSet::deny_all
                                    : ObligationSet::require_verification;
}

const Challenge* ChallengeManager::find_challenge(const std::string& id) const {
  auto it = challenges_.find(id);
  return it == challenges_.end() ? nullptr : &it->second;
}

const Containment* ChallengeManager::active_containment(
    const std::string& accessor_id) const {
  for (const auto& c : containments_)
    if (c.accessor_id == accessor_id && !c.lifted) return &c;
  return nullptr;
}

Containment* ChallengeManager::active_mut(const std::string& accessor_id) {
  for (auto& c : containments_)
    if (c.accessor_id == accessor_id && !c.lifted) return &c;
  return nullptr;
}

std::vector<const Containment*> ChallengeManager::containments_for(
    const std::string& accessor_id) const {
  std::vector<const Containment*> out;
  for (const auto& c : containments_)
    if (c.accessor_id == accessor_id) out.push_back(&c);
  return out;
}

}  // namespace bz
