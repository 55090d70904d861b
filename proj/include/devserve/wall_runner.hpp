#pragma once

#include <cstdint>
#include <vector>

#include "devserve/config.hpp"
#include "devserve/sim_runner.hpp"
#include "devserve/workload.hpp"

namespace devserve {

// Real-thread deployment of the same stack the simulation drives: a
// submitter replaying the arrival plan open-loop, a flusher servicing the
// coalescing window, a reader thread, and the scheduler control loop, all
// against the wall clock.  Optionally runs a CPU antagonist for the whole
// measurement.
struct WallOptions {
    AppConfig app;
    WorkloadSpec workload;
    std::uint64_t seed = 1;
    std::uint32_t hog_threads = 0;
    std::size_t host_work_bytes = 8ull << 20;  // HostBridge scratch size
    double drain_timeout_s = 60.0;
};

struct WallResult {
    std::vector<SimRequestResult> requests;
    RunStats sched;
    LaunchWindow window;
    FrontendStats fe;
    std::uint64_t offered = 0;
    std::uint64_t completed = 0;
    std::uint64_t rejected = 0;
    TimeNs makespan_ns = 0;   // first arrival to last completion
    double achieved_rps = 0;  // completed / makespan
    bool drained = false;     // every request reached a terminal state in time

    std::vector<RequestTiming> timings() const;
};

WallResult run_wall(const WallOptions& opt);

}  // namespace devserve
