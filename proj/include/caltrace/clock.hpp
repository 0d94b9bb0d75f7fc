#pragma once

#include <atomic>
#include <chrono>

#include "caltrace/encoding.hpp"

namespace caltrace {

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
 public:
  Timestamp now() const override {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  }
};

/// Replay/test clock. Only moves when told to.
class FixedClock final : public Clock {
 public:
  explicit FixedClock(Timestamp start) : now_(start) {}

  Timestamp now() const override { return now_.load(); }
  void set(Timestamp ts) { now_.store(ts); }
  void advance(Timestamp seconds) { now_.fetch_add(seconds); }

 private:
  std::atomic<Timestamp> now_;
};

}  // namespace caltrace
