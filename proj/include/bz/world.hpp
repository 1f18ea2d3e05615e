#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bz/util.hpp"

namespace bz {

enum class AccessorKind { human, agent };
enum class Sensitivity : int {
  public_ = 0,
  internal_ = 1,
  confidential = 2,
  highly_confidential = 3,
};
enum class RiskTier { low, elevated, high };

const char* to_string(AccessorKind k);
const char* to_string(Sensitivity s);
const char* to_string(RiskTier t);
AccessorKind accessor_kind_from(const std::string& s);
Sensitivity sensitivity_from(const std::string& s);
RiskTier risk_tier_from(const std::string& s);

struct AccessorProfile {
  std::string id;
  AccessorKind kind = AccessorKind::human;
  std::string job_function;
  std::string role;
  std::string seniority;
  std::string team_id;
  std::optional<std::string> controlling_human;  // required iff kind=agent
  std::set<std::string> topic_tags;              // derived from the team, never input
  RiskTier static_risk_tier = RiskTier::low;
};

struct ResourceDescriptor {
  std::string id;
  Sensitivity sensitivity = Sensitivity::public_;
  std::string data_type;
  std::string owning_team;
  std::set<std::string> topic_tags;
  std::set<std::string> authorized_worker_functions;
};

struct WorkAssignment {
  std::string id;  // synthesized as "<accessor>#<n>" when absent in input
  std::string accessor_id;
  std::set<std::string> scope_customers;
  std::set<std::string> scope_topics;
  std::set<std::string> scope_teams;
  int64_t active_from = 0;
  int64_t active_to = 0;
};

struct OrgNode {
  std::string id;
  std::string name;
  std::set<std::string> topic_tags;
  std::optional<std::string> parent;
};

/// Immutable, versioned view of the whole world. Published wholesale; readers
/// hold a shared_ptr and are never invalidated by later writes.
struct WorldSnapshot {
  uint64_t version = 0;
  std::map<std::string, AccessorProfile> accessors;
  std::map<std::string, ResourceDescriptor> resources;
  std::map<std::string, std::vector<WorkAssignment>> assignments;  // by accessor
  std::map<std::string, OrgNode> org;

  const AccessorProfile* find_accessor(const std::string& id) const;
  const ResourceDescriptor* find_resource(const std::string& id) const;
  const WorkAssignment* active_assignment(const std::string& accessor_id,
                                          int64_t now_ms) const;
};

using SnapshotPtr = std::shared_ptr<const WorldSnapshot>;

/// Union of a team's own topic tags and all ancestors' tags, lowercased.
std::set<std::string> derive_team_attributes(const std::map<std::string, OrgNode>& org,
                                             const std::string& team_id);

/// True iff the accessor (or, for agents, its controlling human) holds an
/// active assignment whose scope reaches the resource: owning team in
/// scope_teams, topic overlap with scope_topics, or a "customer:<id>" tag on
/// the resource matching scope_customers.
bool assignment_covers(const WorldSnapshot& snap, const std::string& accessor_id,
                       const std::string& resource_id, int64_t now_ms);

/// Jaccard similarity of accessor and resource topic tags (0 if either empty).
double subject_crossover(const WorldSnapshot& snap, const std::string& accessor_id,
                         const std::string& resource_id);

/// Single-writer store publishing immutable snapshots by atomic replacement.
class WorldStore {
 public:
  WorldStore();

  SnapshotPtr snapshot() const;

  uint64_t upsert_accessor(AccessorProfile p);
  uint64_t upsert_resource(ResourceDescriptor r);
  uint64_t upsert_assignment(WorkAssignment a);
  uint64_t upsert_org_node(OrgNode n);

  /// Loads {accessors:[], resources:[], assignments:[], org:[]} in one shot.
  uint64_t load_document(const json& doc);

 private:
  uint64_t publish(std::shared_ptr<WorldSnapshot> next);
  void validate(const WorldSnapshot& snap) const;

  mutable std::mutex mu_;
  SnapshotPtr current_;
};

AccessorProfile accessor_from_json(const json& j);
ResourceDescriptor resource_from_json(const json& j);
WorkAssignment assignment_from_json(const json& j);
OrgNode org_node_from_json(const json& j);

}  // namespace bz
