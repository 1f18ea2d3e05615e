#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <memory>

namespace bz {

/// Injected time source. All TTL and window math goes through this so that
/// scenario runs with a simulated clock are fully deterministic.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual int64_t now_ms() const = 0;
};

class RealClock final : public Clock {
 public:
  int64_t now_ms() const override {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  }
};

/// Forward-only simulated clock.
class SimClock final : public Clock {
 public:
  explicit SimClock(int64_t start_ms = 0) : now_(start_ms) {}
  int64_t now_ms() const override { return now_; }
  void advance(int64_t ms) {
    if (ms > 0) now_ += ms;
  }
  /// Moves to t if t is in the future; never rewinds.
  void advance_to(int64_t t) { now_ = std::max(now_, t); }

 private:
  int64_t now_;
};

}  // namespace bz
