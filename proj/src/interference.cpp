#include "devserve/interference.hpp"

namespace devserve {

InterferenceHog::InterferenceHog(std::uint32_t threads, std::size_t buffer_bytes) {
    if (threads == 0) raise(Errc::invalid_argument, "interference needs at least one thread");
    if (buffer_bytes < 4096) raise(Errc::invalid_argument, "interference buffer too small");
    workers_.reserve(threads);
    for (std::uint32_t t = 0; t < threads; ++t) {
        workers_.emplace_back([this, buffer_bytes, t] {
            std::vector<std::uint64_t> buf(buffer_bytes / sizeof(std::uint64_t),
                                           0x9E3779B97F4A7C15ULL + t);
            const std::size_t stride = 64 / sizeof(std::uint64_t);
            while (!stop_.load(std::memory_order_relaxed)) {
                // Touch one word per cache line; the multiply keeps the pass
                // data-dependent so it cannot be optimized away.
                for (std::size_t i = 0; i < buf.size(); i += stride)
                    buf[i] = buf[i] * 6364136223846793005ULL + 1442695040888963407ULL;
                passes_.fetch_add(1, std::memory_order_relaxed);
            }
        });
    }
}

void InterferenceHog::stop() {
    stop_.store(true, std::memory_order_relaxed);
    for (auto& w : workers_)
        if (w.joinable()) w.join();
    workers_.clear();
}

InterferenceHog::~InterferenceHog() { stop(); }

}  // namespace devserve
