#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>

namespace aft {

/// Source of commit timestamps and session activity times. Nothing in the
/// protocols assumes two nodes' clocks agree.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::uint64_t now() = 0;
};

/// Milliseconds since the Unix epoch.
class SystemClock final : public Clock {
 public:
  std::uint64_t now() override {
    using namespace std::chrono;
    return static_cast<std::uint64_t>(
        duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count());
  }
};

/// Deterministic counter; every reading advances it by one tick.
class LogicalClock final : public Clock {
 public:
  explicit LogicalClock(std::uint64_t start = 0) : ticks_(start) {}

  std::uint64_t now() override { return ticks_.fetch_add(1, std::memory_order_relaxed) + 1; }
  std::uint64_t peek() const { return ticks_.load(std::memory_order_relaxed); }
  void advance(std::uint64_t by) { ticks_.fetch_add(by, std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> ticks_;
};

enum class ClockMode { system, logical };

inline std::shared_ptr<Clock> make_clock(ClockMode mode) {
  if (mode == ClockMode::logical) return std::make_shared<LogicalClock>();
  return std::make_shared<SystemClock>();
}

}  // namespace aft
