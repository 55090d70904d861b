#pragma once

#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

#include "devserve/errors.hpp"

namespace devserve {

// CPU antagonist: each thread hammers its own 64 MiB buffer with strided
// read-modify-write passes until stopped, stealing cores and cache from
// whatever else is running on the machine.
class InterferenceHog {
  public:
    explicit InterferenceHog(std::uint32_t threads,
                             std::size_t buffer_bytes = 64ull << 20);
    ~InterferenceHog();

    InterferenceHog(const InterferenceHog&) = delete;
    InterferenceHog& operator=(const InterferenceHog&) = delete;

    void stop();
    std::uint32_t threads() const { return static_cast<std::uint32_t>(workers_.size()); }
    std::uint64_t passes() const { return passes_.load(std::memory_order_relaxed); }

  private:
    std::atomic<bool> stop_{false};
    std::atomic<std::uint64_t> passes_{0};
    std::vector<std::thread> workers_;
};

}  // namespace devserve
