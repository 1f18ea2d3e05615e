#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bz {

/// Named, TTL'd, [0,1]-valued output of a slow-path detector.
struct RiskAttribute {
  std::string name;
  double value = 0.0;
  int64_t issued_ts = 0;
  int64_t ttl_ms = 0;
  std::string detector_id;
  std::vector<std::string> evidence;  // event ids

  bool expired(int64_t now_ms) const { return issued_ts + ttl_ms < now_ms; }
};

/// Per-accessor live risk attribute table. Expired attributes are never
/// returned by reads; publishing replaces any prior attribute of the same name.
class RiskTable {
 public:
  void publish(const std::string& accessor_id, RiskAttribute attr) {
    table_[accessor_id][attr.name] = std::move(attr);
  }

  std::map<std::string, double> view(const std::string& accessor_id,
                                     int64_t now_ms) const {
    std::map<std::string, double> out;
    auto it = table_.find(accessor_id);
    if (it == table_.end()) return out;
    for (const auto& [name, attr] : it->second)
      if (!attr.expired(now_ms)) out[name] = attr.value;
    return out;
  }

  std::optional<RiskAttribute> get(const std::string& accessor_id,
                                   const std::string& name, int64_t now_ms) const {
    auto it = table_.find(accessor_id);
    if (it == table_.end()) return std::nullopt;
    auto jt = it->second.find(name);
    if (jt == it->second.end() || jt->second.expired(now_ms)) return std::nullopt;
    return jt->second;
  }

 private:
  std::map<std::string, std::map<std::string, RiskAttribute>> table_;
};

}  // namespace bz
