#include <algorithm>

#include "bz/reasoning.hpp"

namespace bz {

namespace {

bool in_window(const Event& e, int64_t window_ms, int64_t now_ms) {
  return e.ts >= now_ms - window_ms && e.ts <= now_ms;
}

bool touches_resource(const Event& e) { return e.resource_id.has_value(); }

/// A subject's behavioral record includes events from agents it controls, so
/// detectors that resolve an agent to its human still see the agent's actions.
bool by_subject(const Event& e, const WorldSnapshot& snap, const std::string& subject) {
  if (e.accessor_id == subject) return true;
  const AccessorProfile* a = snap.find_accessor(e.accessor_id);
  return a && a->kind == AccessorKind::agent && a->controlling_human &&
         *a->controlling_human == subject;
}

/// Lower median: element at index (n-1)/2 of the sorted values.
std::size_t lower_median(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

std::size_t distinct_resources(const std::vector<Event>& log, const WorldSnapshot& snap,
                               const std::string& accessor, int64_t window_ms,
                               int64_t now_ms) {
  std::set<std::string> seen;
  for (const auto& e : log)
    if (by_subject(e, snap, accessor) && touches_resource(e) &&
        in_window(e, window_ms, now_ms))
      seen.insert(*e.resource_id);
  return seen.size();
}

RiskAttribute make_attr(const std::string& name, double value, int64_t now_ms,
                        int64_t ttl_ms, const std::string& detector,
                        std::vector<std::string> evidence) {
  RiskAttribute a;
  a.name = name;
  a.value = value;
  a.issued_ts = now_ms;
  a.ttl_ms = ttl_ms;
  a.detector_id = detector;
  a.evidence = std::move(evidence);
  return a;
}

}  // namespace

std::optional<RiskAttribute> detect_peer_volume_anomaly(
    const std::vector<Event>& log, const WorldSnapshot& snap,
    const std::string& accessor_id, int64_t window_ms, int64_t now_ms,
    const EngineConfig& cfg) {
  const AccessorProfile* acc = snap.find_accessor(accessor_id);
  if (!acc) return std::nullopt;
  std::vector<std::size_t> peer_counts;
  for (const auto& [id, p] : snap.accessors) {
    if (id == accessor_id || p.job_function != acc->job_function || p.kind != acc->kind)
      continue;
    peer_counts.push_back(distinct_resources(log, snap, id, window_ms, now_ms));
  }
  if (peer_counts.empty()) return std::nullopt;  // no peer group, no baseline

  std::size_t mine = distinct_resources(log, snap, accessor_id, window_ms, now_ms);
  double baseline = std::max<double>(static_cast<double>(lower_median(peer_counts)), 1.0);
  double ratio = static_cast<double>(mine) / baseline;
  if (ratio < cfg.peer_volume_threshold) return std::nullopt;

  std::vector<std::string> evidence;
  for (const auto& e : log)
    if (by_subject(e, snap, accessor_id) && touches_resource(e) &&
        in_window(e, window_ms, now_ms))
      evidence.push_back(e.id);
  return make_attr("peer_volume_anomaly", std::min(1.0, ratio / 10.0), now_ms,
                   cfg.peer_volume_ttl_ms, "peer_volume", std::move(evidence));
}

std::optional<RiskAttribute> detect_scope_deviation(
    const std::vector<Event>& log, const WorldSnapshot& snap,
    const std::string& accessor_id, int64_t window_ms, int64_t now_ms,
    const EngineConfig& cfg) {
  std::size_t total = 0, deviating = 0;
  std::vector<std::string> evidence;
  for (const auto& e : log) {
    if (!by_subject(e, snap, accessor_id) || e.kind != EventKind::access) continue;
    if (!in_window(e, window_ms, now_ms) || !touches_resource(e)) continue;
    if (!snap.find_resource(*e.resource_id)) continue;
    ++total;
    bool covers = assignment_covers(snap, accessor_id, *e.resource_id, now_ms);
    double crossover = subject_crossover(snap, accessor_id, *e.resource_id);
    if (!covers && crossover < cfg.scope_crossover_max) {
      ++deviating;
      evidence.push_back(e.id);
    }
  }
  if (total < static_cast<std::size_t>(cfg.scope_min_support)) return std::nullopt;
  double f = static_cast<double>(deviating) / static_cast<double>(total);
  if (f < cfg.scope_fraction) return std::nullopt;
  return make_attr("scope_deviation", f, now_ms, cfg.scope_ttl_ms, "scope_deviation",
                   std::move(evidence));
}

std::optional<RiskAttribute> detect_rapid_succession(
    const std::vector<Event>& log, const WorldSnapshot& snap,
    const std::string& accessor_id, int64_t window_ms, int64_t now_ms,
    const EngineConfig& cfg) {
  const AccessorProfile* acc = snap.find_accessor(accessor_id);
  if (!acc || acc->kind != AccessorKind::human) return std::nullopt;  // agents are fast

  std::vector<std::pair<int64_t, std::string>> ops;
  for (const auto& e : log)
    if (e.accessor_id == accessor_id && in_window(e, window_ms, now_ms))
      ops.emplace_back(e.ts, e.id);
  std::sort(ops.begin(), ops.end());

  const std::size_t need = static_cast<std::size_t>(cfg.rapid_ops);
  for (std::size_t i = 0; i + need <= ops.size(); ++i) {
    std::size_t j = i + need - 1;
    if (ops[j].first - ops[i].first <= cfg.rapid_subwindow_ms) {
      std::vector<std::string> evidence;
      for (std::size_t k = i; k <= j; ++k) evidence.push_back(ops[k].second);
      return make_attr("rapid_succession", 1.0, now_ms, cfg.rapid_ttl_ms,
                       "rapid_succession", std::move(evidence));
    }
  }
  return std::nullopt;
}

std::optional<RiskAttribute> detect_knowledge_inconsistency(
    const std::vector<Event>& log, const WorldSnapshot& snap,
    const std::string& accessor_id, int64_t window_ms, int64_t now_ms,
    const EngineConfig& cfg) {
  const AccessorProfile* acc = snap.find_accessor(accessor_id);
  if (!acc) return std::nullopt;

  std::vector<std::string> evidence;
  for (const auto& e : log) {
    if (e.accessor_id != accessor_id || e.kind != EventKind::query) continue;
    if (!in_window(e, window_ms, now_ms)) continue;
    auto it = e.payload.find("tags");
    if (it == e.payload.end()) continue;
    auto tags = tokenize(it->second);
    if (std::find(tags.begin(), tags.end(), "basic_question") == tags.end()) continue;
    // The question must target a system the accessor is supposed to know.
    bool overlaps = false;
    for (const auto& t : tags)
      if (t != "basic_question" && acc->topic_tags.count(t)) overlaps = true;
    if (overlaps) evidence.push_back(e.id);
  }
  if (evidence.size() < static_cast<std::size_t>(cfg.knowledge_min)) return std::nullopt;
  return make_attr("knowledge_inconsistency", cfg.knowledge_value, now_ms,
                   cfg.knowledge_ttl_ms, "knowledge_inconsistency", std::move(evidence));
}

std::optional<RiskAttribute> detect_exfiltration_pattern(
    const std::vector<Event>& log, const WorldSnapshot& snap,
    const std::string& accessor_id, int64_t window_ms, int64_t now_ms,
    const EngineConfig& cfg) {
  std::vector<std::string> evidence;
  for (const auto& e : log) {
    if (!by_subject(e, snap, accessor_id)) continue;
    if (e.kind != EventKind::email_external && e.kind != EventKind::bulk_export) continue;
    if (!in_window(e, window_ms, now_ms) || !touches_resource(e)) continue;
    const ResourceDescriptor* res = snap.find_resource(*e.resource_id);
    if (!res || res->sensitivity < Sensitivity::confidential) continue;
    evidence.push_back(e.id);
  }
  if (evidence.size() < static_cast<std::size_t>(cfg.exfil_min)) return std::nullopt;
  return make_attr("exfiltration_pattern", 1.0, now_ms, cfg.exfil_ttl_ms,
                   "exfiltration", std::move(evidence));
}

}  // namespace bz
