#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "devserve/clock.hpp"
#include "devserve/engine.hpp"
#include "devserve/event_log.hpp"
#include "devserve/kv_pool.hpp"
#include "devserve/ring_buffer.hpp"
#include "devserve/rng.hpp"

namespace devserve {

// Where the scheduling loop lives.  Both placements run the same policy
// code; they differ only in what each step costs.
enum class SchedMode { device, host_mediated };

enum class LaunchKind { fire_and_forget, tail };

struct LaunchCosts {
    TimeNs fire_and_forget_ns = 2 * kUs;
    TimeNs tail_ns = 5'500;
    TimeNs host_low_ns = 11 * kUs;  // host-mediated launches draw uniformly
    TimeNs host_high_ns = 17 * kUs;
};

// Fire-and-forget launches run down a fixed budget; a tail launch re-arms it
// and opens the next epoch without disturbing any other scheduler state.
struct LaunchWindow {
    std::uint32_t counter = 0;
    std::uint32_t limit = 120;
    std::uint64_t epoch = 0;
    std::uint64_t ff_launches = 0;
    std::uint64_t tail_launches = 0;
    std::uint32_t max_counter_seen = 0;
};

struct AdmitDecision {
    std::uint64_t step = 0;
    bool pending_found = false;
    bool capacity_free = false;
    bool window_headroom = false;
    bool admit() const { return pending_found && capacity_free && window_headroom; }
};

struct SchedulerConfig {
    SchedMode mode = SchedMode::device;
    std::uint32_t batch_capacity = 16;
    std::uint32_t window_limit = 120;
    std::uint32_t lanes = 256;
    std::uint32_t scan_workers = 0;  // 0: scan inline on the control thread
    LaunchCosts costs;
    TimeNs host_overhead_low_ns = 3 * kMs;  // per-decode-step host charge, host mode
    TimeNs host_overhead_high_ns = 3 * kMs;
    double host_interference_multiplier = 1.0;
    std::uint64_t host_seed = 0x5eedull;
    TimeNs idle_scan_interval_ns = 50 * kUs;
    TimeNs poll_timeout_ns = 5 * kSec;
    bool pin_workers = false;
};

// Real round trip through an unpinned host thread; only the wall-clock
// host-mediated configuration uses it, so CPU interference lands on exactly
// the component it would hit in a host-driven serving stack.
class HostBridge {
  public:
    explicit HostBridge(std::size_t work_bytes);
    ~HostBridge();

    HostBridge(const HostBridge&) = delete;
    HostBridge& operator=(const HostBridge&) = delete;

    // Blocks until the host thread has "reassembled the batch": one pass of
    // strided read-modify-write over its scratch buffer.  Returns the
    // measured duration.
    TimeNs round_trip(std::size_t batch_size);

    std::vector<TimeNs> samples() const;

  private:
    void worker();

    std::vector<std::uint8_t> scratch_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    bool job_ready_ = false;
    bool job_done_ = false;
    bool stop_ = false;
    std::vector<TimeNs> samples_;
    std::thread thread_;
};

// Lane-partitioned ring scan.  Lanes are fixed logical ranges; worker
// threads (when configured) pick lanes off a shared counter so correctness
// never depends on the worker count.
class ScanExecutor {
  public:
    ScanExecutor(std::uint32_t workers, bool pin);
    ~ScanExecutor();

    ScanExecutor(const ScanExecutor&) = delete;
    ScanExecutor& operator=(const ScanExecutor&) = delete;

    // Runs fn(lane) for every lane in [0, lane_count).
    void run(std::uint32_t lane_count, const std::function<void(std::uint32_t)>& fn);

    std::uint32_t workers() const { return static_cast<std::uint32_t>(threads_.size()); }

  private:
    void worker_main(std::uint32_t idx);

    std::mutex mu_;
    std::condition_variable cv_work_;
    std::condition_variable cv_done_;
    const std::function<void(std::uint32_t)>* fn_ = nullptr;
    std::uint32_t lane_count_ = 0;
    std::atomic<std::uint32_t> next_lane_{0};
    std::uint32_t pending_workers_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
    std::vector<std::thread> threads_;
};

struct PendingEntry {
    std::uint32_t slot = 0;
    std::uint64_t arrival_seq = 0;
    std::uint64_t request_id = 0;
    std::uint32_t input_len = 0;
    std::uint32_t max_output = 0;
    std::uint64_t seed = 0;
};

struct RunStats {
    std::uint64_t decode_steps = 0;
    std::uint64_t prefill_rounds = 0;
    std::uint64_t host_round_trips = 0;
    std::uint64_t completed = 0;
    std::uint64_t admitted = 0;
    std::uint64_t kv_deferrals = 0;
    std::uint64_t window_rearm_tails = 0;
    std::vector<TimeNs> host_samples;
};

struct StepOutcome {
    bool idle = false;
    TimeNs next = 0;  // when to call step_boundary again; meaningless if idle
};

// The persistent scheduling loop.  One logical control thread calls
// step_boundary at each step edge; scan lanes and the frontend interact with
// it exclusively through the ring's atomic slot states.
class DeviceScheduler {
  public:
    DeviceScheduler(RingBuffer& ring, EngineEmulator& engine, KvPagePool& kv,
                    SchedulerConfig cfg, EventLog* log = nullptr, HostBridge* bridge = nullptr,
                    Clock* clock = nullptr);

    // Claims every PrefillPending slot whose KV reservation fits, returns the
    // claimed slot indices sorted by arrival_seq.  Public so tests can drive
    // the scan directly; the control loop calls it each boundary.
    std::vector<std::uint32_t> scan_slots(std::uint32_t lane_count);

    std::pair<std::uint32_t, std::uint32_t> lane_range(std::uint32_t lane,
                                                       std::uint32_t lane_count) const;

    // Pure admission predicate; evaluated against the pre-completion batch
    // with a forecast of which slots finish in the step now ending.
    AdmitDecision admit_check() const;

    // One control-loop iteration at a step edge.  `now` must be at or past
    // the outstanding step's ready time (the driver waits for it).
    StepOutcome step_boundary(TimeNs now);

    // Synchronous admission cycle for direct tests: pause, prefill the
    // FCFS-eligible pending requests, resume.  Returns the time the merged
    // batch is ready to decode.
    TimeNs admit_now(TimeNs now);

    // Wall-clock driver.  Runs until stop() returns true.
    void run_loop(const std::function<bool()>& stop);

    // Blocks until the engine deposits its outstanding step or the
    // configured timeout passes (poll-timeout error).
    ExtractionResult poll_completion();

    const LaunchWindow& window() const { return window_; }
    const RunStats& stats() const { return stats_; }
    const std::vector<AdmitDecision>& decisions() const { return decisions_; }
    std::uint64_t step_index() const { return step_index_; }
    std::size_t active_size() const { return active_.size(); }
    std::size_t paused_size() const { return paused_.size(); }
    std::size_t pending_size() const { return pending_.size(); }
    bool has_outstanding() const { return outstanding_ != Outstanding::none; }
    std::optional<TimeNs> outstanding_ready_at() const { return engine_.extraction_ready_at(); }
    const SchedulerConfig& config() const { return cfg_; }

  private:
    enum class Outstanding { none, decode, prefill };

    struct SlotCtx {
        std::uint32_t slot = 0;
        std::uint64_t request_id = 0;
        std::uint64_t seed = 0;
        std::uint64_t prompt_h = 0;
        std::uint32_t input_len = 0;
        std::uint32_t max_output = 0;
    };

    void log(EventKind kind, std::int32_t slot, TimeNs clock);
    void scan_and_enqueue(TimeNs now);
    bool slot_completes_next(const SlotCtx& ctx) const;
    std::uint32_t completing_forecast() const;
    TimeNs charge_launch(TimeNs now);
    TimeNs charge_host_step(TimeNs now, std::size_t batch_size);
    TimeNs begin_prefill(TimeNs now);
    TimeNs launch_decode(TimeNs now);
    void finish_decode(const ExtractionResult& res, TimeNs now);
    void finish_prefill(const ExtractionResult& res, TimeNs now);
    void pop_pending(std::vector<PendingEntry>& out, std::size_t max_count);

    RingBuffer& ring_;
    EngineEmulator& engine_;
    KvPagePool& kv_;
    SchedulerConfig cfg_;
    EventLog* log_;
    HostBridge* bridge_;
    Clock* clock_;
    ScanExecutor scan_exec_;
    Rng host_rng_;

    LaunchWindow window_;
    RunStats stats_;
    std::vector<AdmitDecision> decisions_;
    std::vector<PendingEntry> pending_;  // min-heap by arrival_seq
    std::vector<SlotCtx> active_;
    std::vector<SlotCtx> paused_;
    std::vector<SlotCtx> prefilling_;
    Outstanding outstanding_ = Outstanding::none;
    std::uint64_t step_index_ = 0;

    // scan scratch: lock-free claim list shared by lanes
    std::vector<std::uint32_t> claim_buf_;
    std::atomic<std::uint32_t> claim_count_{0};
};

}  // namespace devserve
