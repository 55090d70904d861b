#pragma once

#include <cstdint>
#include <vector>

#include "devserve/config.hpp"
#include "devserve/event_log.hpp"
#include "devserve/frontend.hpp"
#include "devserve/metrics.hpp"
#include "devserve/scheduler.hpp"
#include "devserve/workload.hpp"

namespace devserve {

// One full serving stack driven by a discrete-event loop on the virtual
// clock.  Everything runs on the caller's thread, so a given (config,
// workload, seed) triple always produces bit-identical results.
struct SimOptions {
    AppConfig app;
    WorkloadSpec workload;
    std::uint64_t seed = 1;
    bool collect_events = false;
    TimeNs max_virtual_ns = 0;  // hard stop for runaway loops; 0 = none
};

struct SimRequestResult {
    std::uint64_t request_id = 0;
    RequestStatus status = RequestStatus::queued;
    TimingMarks marks;
    std::uint32_t input_len = 0;
    std::uint32_t max_output = 0;
    std::vector<TokenId> streamed;
    std::vector<TimeNs> token_times;
};

struct SimResult {
    std::vector<SimRequestResult> requests;  // in acceptance order
    RunStats sched;
    LaunchWindow window;
    FrontendStats fe;
    TimeNs end_time = 0;
    std::uint64_t offered = 0;   // arrivals attempted
    std::uint64_t rejected = 0;  // rejected after a forced refresh
    bool hit_time_limit = false;
    std::vector<EventRecord> events;

    // Completed requests only, ready for metric aggregation.
    std::vector<RequestTiming> timings() const;
};

// Deterministic synthetic prompt for a workload item.
std::vector<TokenId> synth_prompt(std::uint64_t seed, std::uint32_t len,
                                  std::uint32_t vocab_size);

SimResult run_sim(const SimOptions& opt);

}  // namespace devserve
