#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <thread>

namespace devserve {

// All simulation timestamps are nanoseconds on a single monotone timeline.
using TimeNs = std::int64_t;

constexpr TimeNs kUs = 1000;
constexpr TimeNs kMs = 1000 * kUs;
constexpr TimeNs kSec = 1000 * kMs;

// A clock the serving stack reads and waits on.  The virtual flavor is driven
// by a single-threaded simulation loop; the wall flavor maps onto
// steady_clock and really sleeps.
class Clock {
  public:
    virtual ~Clock() = default;
    virtual TimeNs now() const = 0;
    virtual void sleep_until(TimeNs t) = 0;
    virtual bool is_virtual() const = 0;
};

class VirtualClock final : public Clock {
  public:
    TimeNs now() const override { return now_.load(std::memory_order_relaxed); }

    // Time only moves forward; the simulation loop is the sole driver.
    void set(TimeNs t) {
        if (t > now_.load(std::memory_order_relaxed)) now_.store(t, std::memory_order_relaxed);
    }

    void sleep_until(TimeNs t) override { set(t); }
    bool is_virtual() const override { return true; }

  private:
    std::atomic<TimeNs> now_{0};
};

class WallClock final : public Clock {
  public:
    WallClock() : origin_(std::chrono::steady_clock::now()) {}

    TimeNs now() const override {
        return std::chrono::duration_cast<std::chrono::nanoseconds>(
                   std::chrono::steady_clock::now() - origin_)
            .count();
    }

    // Coarse sleep followed by a short spin so microsecond-scale deadlines
    // land close to target without burning a core on long waits.
    void sleep_until(TimeNs t) override {
        constexpr TimeNs spin_margin = 100 * kUs;
        TimeNs remaining = t - now();
        if (remaining > spin_margin) {
            std::this_thread::sleep_for(std::chrono::nanoseconds(remaining - spin_margin));
        }
        while (now() < t) std::this_thread::yield();
    }

    bool is_virtual() const override { return false; }

  private:
    std::chrono::steady_clock::time_point origin_;
};

}  // namespace devserve
