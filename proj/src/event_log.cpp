#include "devserve/event_log.hpp"

#include <cstdio>

namespace devserve {

const char* event_name(EventKind k) {
    switch (k) {
        case EventKind::scan: return "scan";
        case EventKind::claim: return "claim";
        case EventKind::kv_defer: return "kv_defer";
        case EventKind::pause: return "pause";
        case EventKind::prefill_launch: return "prefill_launch";
        case EventKind::prefill_publish: return "prefill_publish";
        case EventKind::resume: return "resume";
        case EventKind::launch_ff: return "launch_ff";
        case EventKind::launch_tail: return "launch_tail";
        case EventKind::publish: return "publish";
        case EventKind::complete: return "complete";
        case EventKind::reclaim: return "reclaim";
    }
    return "unknown";
}

std::string format_record(const EventRecord& r) {
    char buf[128];
    if (r.slot >= 0) {
        std::snprintf(buf, sizeof(buf), "%llu,%llu,%s,%d,%lld",
                      static_cast<unsigned long long>(r.step),
                      static_cast<unsigned long long>(r.epoch), event_name(r.kind), r.slot,
                      static_cast<long long>(r.clock));
    } else {
        std::snprintf(buf, sizeof(buf), "%llu,%llu,%s,-,%lld",
                      static_cast<unsigned long long>(r.step),
                      static_cast<unsigned long long>(r.epoch), event_name(r.kind),
                      static_cast<long long>(r.clock));
    }
    return buf;
}

void EventLog::dump(std::ostream& os) const {
    for (const auto& r : snapshot()) os << format_record(r) << '\n';
}

}  // namespace devserve
