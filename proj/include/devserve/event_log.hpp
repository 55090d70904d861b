#pragma once

#include <cstdint>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include "devserve/clock.hpp"

namespace devserve {

enum class EventKind {
    scan,
    claim,
    kv_defer,
    pause,
    prefill_launch,
    prefill_publish,
    resume,
    launch_ff,
    launch_tail,
    publish,
    complete,
    reclaim,
};

const char* event_name(EventKind k);

struct EventRecord {
    std::uint64_t step;
    std::uint64_t epoch;
    EventKind kind;
    std::int32_t slot;  // -1 when the event is not slot-scoped
    TimeNs clock;
};

// Newline-delimited trace of scheduler activity.  Appended from the control
// loop, read by tests and the CLI after (or outside) the hot path.
class EventLog {
  public:
    void append(std::uint64_t step, std::uint64_t epoch, EventKind kind, std::int32_t slot,
                TimeNs clock) {
        std::lock_guard<std::mutex> g(mu_);
        records_.push_back({step, epoch, kind, slot, clock});
    }

    std::vector<EventRecord> snapshot() const {
        std::lock_guard<std::mutex> g(mu_);
        return records_;
    }

    std::size_t size() const {
        std::lock_guard<std::mutex> g(mu_);
        return records_.size();
    }

    void clear() {
        std::lock_guard<std::mutex> g(mu_);
        records_.clear();
    }

    // One record per line: step,epoch,event,slot,clock_ns
    void dump(std::ostream& os) const;

  private:
    mutable std::mutex mu_;
    std::vector<EventRecord> records_;
};

std::string format_record(const EventRecord& r);

}  // namespace devserve
