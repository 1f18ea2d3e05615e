#include "bz/intake.hpp"

namespace bz {

const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::access: return "access";
    case EventKind::file_op: return "file_op";
    case EventKind::query: return "query";
    case EventKind::email_external: return "email_external";
    case EventKind::bulk_export: return "bulk_export";
    case EventKind::agent_prompt: return "agent_prompt";
    case EventKind::agent_plan: return "agent_plan";
    case EventKind::agent_tool_call: return "agent_tool_call";
    case EventKind::signal: return "signal";
  }
  return "access";
}

EventKind event_kind_from(const std::string& s) {
  static const std::map<std::string, EventKind> kMap = {
      {"access", EventKind::access},
      {"file_op", EventKind::file_op},
      {"query", EventKind::query},
      {"email_external", EventKind::email_external},
      {"bulk_export", EventKind::bulk_export},
      {"agent_prompt", EventKind::agent_prompt},
      {"agent_plan", EventKind::agent_plan},
      {"agent_tool_call", EventKind::agent_tool_call},
      {"signal", EventKind::signal},
  };
  auto it = kMap.find(s);
  if (it == kMap.end()) throw Error("malformed-line", "unknown event kind: " + s);
  return it->second;
}

Event event_from_json(const json& j) {
  Event e;
  e.id = j.at("id").get<std::string>();
  e.ts = j.value("ts", int64_t{0});
  e.accessor_id = j.at("accessor_id").get<std::string>();
  e.kind = event_kind_from(j.at("kind").get<std::string>());
  if (j.contains("resource_id") && !j.at("resource_id").is_null())
    e.resource_id = j.at("resource_id").get<std::string>();
  e.operation = j.value("operation", "");
  if (j.contains("payload"))
    for (const auto& [k, v] : j.at("payload").items())
      e.payload[k] = v.get<std::string>();
  return e;
}

json event_to_json(const Event& e) {
  json j;
  j["id"] = e.id;
  j["ts"] = e.ts;
  j["accessor_id"] = e.accessor_id;
  j["kind"] = to_string(e.kind);
  if (e.resource_id) j["resource_id"] = *e.resource_id;
  if (!e.operation.empty()) j["operation"] = e.operation;
  if (!e.payload.empty()) {
    json p = json::object();
    for (const auto& [k, v] : e.payload) p[k] = v;
    j["payload"] = p;
  }
  return j;
}

void Intake::set_log_path(const std::string& path) {
  log_file_.open(path, std::ios::app);
  if (!log_file_) throw Error("io-error", "cannot open event log file: " + path);
}

void Intake::flush() {
  if (log_file_.is_open()) log_file_.flush();
}

void Intake::ingest(const Event& e, const WorldSnapshot& snap) {
  if (!snap.find_accessor(e.accessor_id))
    throw Error("unknown-accessor", "unknown accessor: " + e.accessor_id);
  if (seen_ids_.count(e.id)) throw Error("duplicate-id", "duplicate event id: " + e.id);
  seen_ids_.insert(e.id);
  log_.push_back(e);
  if (log_file_.is_open()) log_file_ << event_to_json(e).dump() << "\n";
  auto& ring = rings_[e.accessor_id];
  ring.push_back(e);
  while (ring.size() > ring_k_) ring.pop_front();
}

std::vector<Event> Intake::recent_window(const std::string& accessor_id,
                                         int64_t duration_ms, int64_t now_ms) const {
  auto it = rings_.find(accessor_id);
  std::vector<Event> out;
  if (it == rings_.end()) return out;
  if (duration_ms <= 0) return out;
  for (const auto& e : it->second)
    if (e.ts >= now_ms - duration_ms) out.push_back(e);
  std::stable_sort(out.begin(), out.end(),
                   [](const Event& a, const Event& b) { return a.ts < b.ts; });
  return out;
}

std::size_t Intake::ring_size(const std::string& accessor_id) const {
  auto it = rings_.find(accessor_id);
  return it == rings_.end() ? 0 : it->second.size();
}

}  // namespace bz
