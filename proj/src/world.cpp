#include "bz/world.hpp"

#include <algorithm>

namespace bz {

const char* to_string(AccessorKind k) {
  return k == AccessorKind::human ? "human" : "agent";
}

const char* to_string(Sensitivity s) {
  switch (s) {
    case Sensitivity::public_: return "public";
    case Sensitivity::internal_: return "internal";
    case Sensitivity::confidential: return "confidential";
    case Sensitivity::highly_confidential: return "highly_confidential";
  }
  return "public";
}

const char* to_string(RiskTier t) {
  switch (t) {
    case RiskTier::low: return "low";
    case RiskTier::elevated: return "elevated";
    case RiskTier::high: return "high";
  }
  return "low";
}

AccessorKind accessor_kind_from(const std::string& s) {
  if (s == "human") return AccessorKind::human;
  if (s == "agent") return AccessorKind::agent;
  throw Error("invalid-reference", "unknown accessor kind: " + s);
}

Sensitivity sensitivity_from(const std::string& s) {
  if (s == "public") return Sensitivity::public_;
  if (s == "internal") return Sensitivity::internal_;
  if (s == "confidential") return Sensitivity::confidential;
  if (s == "highly_confidential") return Sensitivity::highly_confidential;
  throw Error("invalid-reference", "unknown sensitivity: " + s);
}

RiskTier risk_tier_from(const std::string& s) {
  if (s == "low") return RiskTier::low;
  if (s == "elevated") return RiskTier::elevated;
  if (s == "high") return RiskTier::high;
  throw Error("invalid-reference", "unknown risk tier: " + s);
}

const AccessorProfile* WorldSnapshot::find_accessor(const std::string& id) const {
  auto it = accessors.find(id);
  return it == accessors.end() ? nullptr : &it->second;
}

const ResourceDescriptor* WorldSnapshot::find_resource(const std::string& id) const {
  auto it = resources.find(id);
  return it == resources.end() ? nullptr : &it->second;
}

const WorkAssignment* WorldSnapshot::active_assignment(const std::string& accessor_id,
                                                       int64_t now_ms) const {
  auto it = assignments.find(accessor_id);
  if (it == assignments.end()) return nullptr;
  for (const auto& a : it->second) {
    if (a.active_from <= now_ms && now_ms < a.active_to) return &a;
  }
  return nullptr;
}

std::set<std::string> derive_team_attributes(const std::map<std::string, OrgNode>& org,
                                             const std::string& team_id) {
  auto it = org.find(team_id);
  if (it == org.end()) throw Error("unknown-team", "unknown team: " + team_id);
  std::set<std::string> out;
  const OrgNode* node = &it->second;
  std::size_t hops = 0;
  for (;;) {
    for (const auto& t : node->topic_tags) out.insert(to_lower(t));
    if (!node->parent) break;
    auto pit = org.find(*node->parent);
    if (pit == org.end()) break;
    node = &pit->second;
    if (++hops > org.size()) break;  // cycle guard; validation rejects cycles
  }
  return out;
}

bool assignment_covers(const WorldSnapshot& snap, const std::string& accessor_id,
                       const std::string& resource_id, int64_t now_ms) {
  const AccessorProfile* acc = snap.find_accessor(accessor_id);
  const ResourceDescriptor* res = snap.find_resource(resource_id);
  if (!acc || !res) throw Error("unknown-entity", "unknown accessor or resource");

  // Agents are scoped by their controlling human's assignment.
  std::string subject = accessor_id;
  if (acc->kind == AccessorKind::agent && acc->controlling_human)
    subject = *acc->controlling_human;

  const WorkAssignment* a = snap.active_assignment(subject, now_ms);
  if (!a) return false;

  if (a->scope_teams.count(res->owning_team)) return true;
  for (const auto& t : res->topic_tags)
    if (a->scope_topics.count(t)) return true;
  for (const auto& c : a->scope_customers)
    if (res->topic_tags.count("customer:" + c)) return true;
  return false;
}

double subject_crossover(const WorldSnapshot& snap, const std::string& accessor_id,
                         const std::string& resource_id) {
  const AccessorProfile* acc = snap.find_accessor(accessor_id);
  const ResourceDescriptor* res = snap.find_resource(resource_id);
  if (!acc || !res) throw Error("unknown-entity", "unknown accessor or resource");
  return jaccard(acc->topic_tags, res->topic_tags);
}

WorldStore::WorldStore() : current_(std::make_shared<WorldSnapshot>()) {}

SnapshotPtr WorldStore::snapshot() const {
  std::lock_guard<std::mutex> lk(mu_);
  return current_;
}

namespace {

bool overlaps(const WorkAssignment& a, const WorkAssignment& b) {
  return a.active_from < b.active_to && b.active_from < a.active_to;
}

void recompute_derived(WorldSnapshot& snap) {
  for (auto& [id, acc] : snap.accessors) {
    if (snap.org.count(acc.team_id))
      acc.topic_tags = derive_team_attributes(snap.org, acc.team_id);
  }
}

}  // namespace

void WorldStore::validate(const WorldSnapshot& snap) const {
  // Org forest must be acyclic with resolvable parents.
  for (const auto& [id, node] : snap.org) {
    std::size_t hops = 0;
    const OrgNode* cur = &node;
    while (cur->parent) {
      auto it = snap.org.find(*cur->parent);
      if (it == snap.org.end())
        throw Error("invalid-reference", "org node " + id + " has unknown parent");
      cur = &it->second;
      if (++hops > snap.org.size())
        throw Error("invariant-violation", "org graph cycle through " + id);
    }
  }
  for (const auto& [id, acc] : snap.accessors) {
    if (!snap.org.count(acc.team_id))
      throw Error("invalid-reference", "accessor " + id + " references unknown team " +
                                           acc.team_id);
    if (acc.kind == AccessorKind::agent) {
      if (!acc.controlling_human)
        throw Error("invalid-reference",
                    "agent " + id + " has no controlling_human");
      auto it = snap.accessors.find(*acc.controlling_human);
      if (it == snap.accessors.end() || it->second.kind != AccessorKind::human)
        throw Error("invalid-reference", "agent " + id +
                                             " controlling_human does not name an "
                                             "existing human accessor");
    } else if (acc.controlling_human) {
      throw Error("invariant-violation",
                  "human " + id + " must not carry controlling_human");
    }
  }
  for (const auto& [id, res] : snap.resources) {
    if (res.sensitivity >= Sensitivity::confidential && res.topic_tags.empty())
      throw Error("invariant-violation",
                  "resource " + id + " is confidential+ but has no topic tags");
  }
  for (const auto& [accessor, list] : snap.assignments) {
    for (const auto& a : list) {
      if (!(a.active_from < a.active_to))
        throw Error("invariant-violation",
                    "assignment for " + accessor + " has empty active window");
      if (!snap.accessors.count(a.accessor_id))
        throw Error("invalid-reference",
                    "assignment references unknown accessor " + a.accessor_id);
    }
    for (std::size_t i = 0; i < list.size(); ++i)
      for (std::size_t j = i + 1; j < list.size(); ++j)
        if (overlaps(list[i], list[j]))
          throw Error("invariant-violation",
                      "overlapping active assignments for " + accessor);
  }
}

uint64_t WorldStore::publish(std::shared_ptr<WorldSnapshot> next) {
  recompute_derived(*next);
  validate(*next);
  std::lock_guard<std::mutex> lk(mu_);
  next->version = current_->version + 1;
  current_ = std::move(next);
  return current_->version;
}

uint64_t WorldStore::upsert_accessor(AccessorProfile p) {
  auto next = std::make_shared<WorldSnapshot>(*snapshot());
  next->accessors[p.id] = std::move(p);
  return publish(std::move(next));
}

uint64_t WorldStore::upsert_resource(ResourceDescriptor r) {
  auto next = std::make_shared<WorldSnapshot>(*snapshot());
  next->resources[r.id] = std::move(r);
  return publish(std::move(next));
}

uint64_t WorldStore::upsert_assignment(WorkAssignment a) {
  auto next = std::make_shared<WorldSnapshot>(*snapshot());
  auto& list = next->assignments[a.accessor_id];
  if (a.id.empty()) a.id = a.accessor_id + "#" + std::to_string(list.size());
  bool replaced = false;
  for (auto& existing : list) {
    if (existing.id == a.id) {
      existing = a;
      replaced = true;
      break;
    }
  }
  if (!replaced) list.push_back(std::move(a));
  return publish(std::move(next));
}

uint64_t WorldStore::upsert_org_node(OrgNode n) {
  auto next = std::make_shared<WorldSnapshot>(*snapshot());
  next->org[n.id] = std::move(n);
  return publish(std::move(next));
}

uint64_t WorldStore::load_document(const json& doc) {
  auto next = std::make_shared<WorldSnapshot>(*snapshot());
  if (doc.contains("org"))
    for (const auto& j : doc.at("org")) {
      OrgNode n = org_node_from_json(j);
      next->org[n.id] = std::move(n);
    }
  if (doc.contains("accessors"))
    for (const auto& j : doc.at("accessors")) {
      AccessorProfile p = accessor_from_json(j);
      next->accessors[p.id] = std::move(p);
    }
  if (doc.contains("resources"))
    for (const auto& j : doc.at("resources")) {
      ResourceDescriptor r = resource_from_json(j);
      next->resources[r.id] = std::move(r);
    }
  if (doc.contains("assignments")) {
    // Ids synthesize from the position within this document so reloading the
    // same document replaces assignments instead of stacking duplicates.
    std::map<std::string, int> doc_seq;
    for (const auto& j : doc.at("assignments")) {
      WorkAssignment a = assignment_from_json(j);
      if (a.id.empty())
        a.id = a.accessor_id + "#" + std::to_string(doc_seq[a.accessor_id]++);
      auto& list = next->assignments[a.accessor_id];
      bool replaced = false;
      for (auto& existing : list)
        if (existing.id == a.id) {
          existing = std::move(a);
          replaced = true;
          break;
        }
      if (!replaced) list.push_back(std::move(a));
    }
  }
  return publish(std::move(next));
}

namespace {

std::set<std::string> tag_set(const json& j, const char* key) {
  std::set<std::string> out;
  if (j.contains(key))
    for (const auto& t : j.at(key)) out.insert(to_lower(t.get<std::string>()));
  return out;
}

}  // namespace

AccessorProfile accessor_from_json(const json& j) {
  AccessorProfile p;
  p.id = j.at("id").get<std::string>();
  p.kind = accessor_kind_from(j.value("kind", "human"));
  p.job_function = j.value("job_function", "");
  p.role = j.value("role", "");
  p.seniority = j.value("seniority", "");
  p.team_id = j.at("team_id").get<std::string>();
  if (j.contains("controlling_human") && !j.at("controlling_human").is_null())
    p.controlling_human = j.at("controlling_human").get<std::string>();
  p.static_risk_tier = risk_tier_from(j.value("static_risk_tier", "low"));
  return p;
}

ResourceDescriptor resource_from_json(const json& j) {
  ResourceDescriptor r;
  r.id = j.at("id").get<std::string>();
  r.sensitivity = sensitivity_from(j.value("sensitivity", "public"));
  r.data_type = j.value("data_type", "");
  r.owning_team = j.value("owning_team", "");
  r.topic_tags = tag_set(j, "topic_tags");
  r.authorized_worker_functions = tag_set(j, "authorized_worker_functions");
  return r;
}

WorkAssignment assignment_from_json(const json& j) {
  WorkAssignment a;
  a.id = j.value("id", "");
  a.accessor_id = j.at("accessor_id").get<std::string>();
  a.scope_customers = tag_set(j, "scope_customers");
  a.scope_topics = tag_set(j, "scope_topics");
  a.scope_teams = tag_set(j, "scope_teams");
  a.active_from = j.at("active_from").get<int64_t>();
  a.active_to = j.at("active_to").get<int64_t>();
  return a;
}

OrgNode org_node_from_json(const json& j) {
  OrgNode n;
  n.id = j.at("id").get<std::string>();
  n.name = j.value("name", n.id);
  n.topic_tags = tag_set(j, "topic_tags");
  if (j.contains("parent") && !j.at("parent").is_null())
    n.parent = j.at("parent").get<std::string>();
  return n;
}

}  // namespace bz
