#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "bz/util.hpp"
#include "bz/world.hpp"

namespace bz {

enum class EventKind {
  access, file_op, query, email_external, bulk_export,
  agent_prompt, agent_plan, agent_tool_call, signal,
};

const char* to_string(EventKind k);
EventKind event_kind_from(const std::string& s);

struct Event {
  std::string id;
  int64_t ts = 0;
  std::string accessor_id;
  EventKind kind = EventKind::access;
  std::optional<std::string> resource_id;
  std::string operation;
  std::map<std::string, std::string> payload;
};

Event event_from_json(const json& j);
json event_to_json(const Event& e);

/// Hot ring of recent events per accessor plus the append-only long-term log.
/// The long-term log is only reachable through scan_log(), which bumps a read
/// counter so the fast path can be proven to never touch it.
class Intake {
 public:
  explicit Intake(std::size_t ring_k = 256) : ring_k_(ring_k) {}

  void set_log_path(const std::string& path);
  void flush();

  void ingest(const Event& e, const WorldSnapshot& snap);

  /// Events with ts >= now - duration from the hot ring, ascending ts.
  std::vector<Event> recent_window(const std::string& accessor_id, int64_t duration_ms,
                                   int64_t now_ms) const;

  /// Slow-path access to the full log. Counted.
  const std::vector<Event>& scan_log() const {
    long_reads_.fetch_add(1, std::memory_order_relaxed);
    return log_;
  }

  uint64_t long_store_reads() const { return long_reads_.load(std::memory_order_relaxed); }
  std::size_t log_size() const { return log_.size(); }
  std::size_t ring_size(const std::string& accessor_id) const;
  std::size_t ring_capacity() const { return ring_k_; }

 private:
  std::size_t ring_k_;
  std::vector<Event> log_;
  std::unordered_set<std::string> seen_ids_;
  std::unordered_map<std::string, std::deque<Event>> rings_;
  mutable std::atomic<uint64_t> long_reads_{0};
  std::ofstream log_file_;
};

}  // namespace bz
