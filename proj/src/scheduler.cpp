#include "devserve/scheduler.hpp"

#include <algorithm>

#ifdef __linux__
#include <pthread.h>
#include <sched.h>
#endif

namespace devserve {

namespace {

struct SeqGreater {
    bool operator()(const PendingEntry& a, const PendingEntry& b) const {
        return a.arrival_seq > b.arrival_seq;
    }
};

}  // namespace

// ---- HostBridge -----------------------------------------------------------

HostBridge::HostBridge(std::size_t work_bytes)
    : scratch_(std::max<std::size_t>(work_bytes, 64), 1), thread_([this] { worker(); }) {}

HostBridge::~HostBridge() {
    {
        std::lock_guard<std::mutex> g(mu_);
        stop_ = true;
    }
    cv_.notify_all();
    thread_.join();
}

void HostBridge::worker() {
    std::unique_lock<std::mutex> lk(mu_);
    for (;;) {
        cv_.wait(lk, [this] { return job_ready_ || stop_; });
        if (stop_) return;
        job_ready_ = false;
        lk.unlock();
        // Strided pass so the work is memory-bound like a batch rebuild, not
        // a tight ALU loop the scheduler could hide.
        volatile std::uint8_t* p = scratch_.data();
        std::size_t n = scratch_.size();
        for (std::size_t stride = 0; stride < 64; ++stride) {
            for (std::size_t i = stride; i < n; i += 64) p[i] = static_cast<std::uint8_t>(p[i] + 1);
        }
        lk.lock();
        job_done_ = true;
        cv_.notify_all();
    }
}

TimeNs HostBridge::round_trip(std::size_t) {
    auto t0 = std::chrono::steady_clock::now();
    {
        std::unique_lock<std::mutex> lk(mu_);
        job_done_ = false;
        job_ready_ = true;
        cv_.notify_all();
        cv_.wait(lk, [this] { return job_done_; });
    }
    auto dur = std::chrono::duration_cast<std::chrono::nanoseconds>(
                   std::chrono::steady_clock::now() - t0)
                   .count();
    {
        std::lock_guard<std::mutex> g(mu_);
        samples_.push_back(dur);
    }
    return dur;
}

std::vector<TimeNs> HostBridge::samples() const {
    std::lock_guard<std::mutex> g(mu_);
    return samples_;
}

// ---- ScanExecutor ---------------------------------------------------------

ScanExecutor::ScanExecutor(std::uint32_t workers, bool pin) {
    threads_.reserve(workers);
    for (std::uint32_t i = 0; i < workers; ++i) {
        threads_.emplace_back([this, i] { worker_main(i); });
#ifdef __linux__
        if (pin) {
            cpu_set_t set;
            CPU_ZERO(&set);
            CPU_SET(i % std::max(1u, std::thread::hardware_concurrency()), &set);
            pthread_setaffinity_np(threads_.back().native_handle(), sizeof(set), &set);
        }
#else
        (void)pin;
#endif
    }
}

ScanExecutor::~ScanExecutor() {
    {
        std::lock_guard<std::mutex> g(mu_);
        stop_ = true;
    }
    cv_work_.notify_all();
    for (auto& t : threads_) t.join();
}

void ScanExecutor::run(std::uint32_t lane_count, const std::function<void(std::uint32_t)>& fn) {
    if (threads_.empty()) {
        for (std::uint32_t l = 0; l < lane_count; ++l) fn(l);
        return;
    }
    std::unique_lock<std::mutex> lk(mu_);
    fn_ = &fn;
    lane_count_ = lane_count;
    next_lane_.store(0, std::memory_order_relaxed);
    pending_workers_ = static_cast<std::uint32_t>(threads_.size());
    ++generation_;
    cv_work_.notify_all();
    cv_done_.wait(lk, [this] { return pending_workers_ == 0; });
    fn_ = nullptr;
}

void ScanExecutor::worker_main(std::uint32_t) {
    std::uint64_t seen = 0;
    std::unique_lock<std::mutex> lk(mu_);
    for (;;) {
        cv_work_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        auto* fn = fn_;
        auto lanes = lane_count_;
        lk.unlock();
        for (std::uint32_t l = next_lane_.fetch_add(1, std::memory_order_relaxed); l < lanes;
             l = next_lane_.fetch_add(1, std::memory_order_relaxed)) {
            (*fn)(l);
        }
        lk.lock();
        if (--pending_workers_ == 0) cv_done_.notify_all();
    }
}

// ---- DeviceScheduler ------------------------------------------------------

DeviceScheduler::DeviceScheduler(RingBuffer& ring, EngineEmulator& engine, KvPagePool& kv,
                                 SchedulerConfig cfg, EventLog* log, HostBridge* bridge,
                                 Clock* clock)
    : ring_(ring),
      engine_(engine),
      kv_(kv),
      cfg_(cfg),
      log_(log),
      bridge_(bridge),
      clock_(clock),
      scan_exec_(cfg.scan_workers, cfg.pin_workers),
      host_rng_(cfg.host_seed) {
    if (cfg_.batch_capacity == 0) raise(Errc::invalid_argument, "batch capacity must be positive");
    if (cfg_.lanes == 0) raise(Errc::invalid_argument, "need at least one scan lane");
    window_.limit = cfg_.window_limit;
    claim_buf_.assign(ring_.capacity(), 0);
    active_.reserve(cfg_.batch_capacity);
    paused_.reserve(cfg_.batch_capacity);
}

void DeviceScheduler::log(EventKind kind, std::int32_t slot, TimeNs clock) {
    if (log_) log_->append(step_index_, window_.epoch, kind, slot, clock);
}

std::pair<std::uint32_t, std::uint32_t> DeviceScheduler::lane_range(
    std::uint32_t lane, std::uint32_t lane_count) const {
    if (lane_count == 0 || lane_count > ring_.capacity() || ring_.capacity() % lane_count != 0)
        raise(Errc::invalid_argument, "lane count must evenly divide ring capacity");
    if (lane >= lane_count) raise(Errc::invalid_argument, "lane index out of range");
    std::uint32_t per = ring_.capacity() / lane_count;
    return {lane * per, (lane + 1) * per};
}

std::vector<std::uint32_t> DeviceScheduler::scan_slots(std::uint32_t lane_count) {
    std::uint32_t lanes = std::min(lane_count, ring_.capacity());
    claim_count_.store(0, std::memory_order_relaxed);
    auto scan_lane = [this, lanes](std::uint32_t lane) {
        auto [lo, hi] = lane_range(lane, lanes);
        for (std::uint32_t i = lo; i < hi; ++i) {
            if (ring_.state(i) != SlotState::PrefillPending) continue;
            const Slot& s = ring_.slot(i);
            std::uint64_t req = s.request_id.load(std::memory_order_relaxed);
            std::uint64_t need = static_cast<std::uint64_t>(s.input_len) + s.max_output;
            // Reserve KV before the claim: a slot the pool cannot cover stays
            // PrefillPending and is retried on a later scan.
            if (!kv_.alloc(req, need)) {
                ++stats_.kv_deferrals;
                log(EventKind::kv_defer, static_cast<std::int32_t>(i), 0);
                continue;
            }
            if (ring_.transition(i, SlotState::PrefillPending, SlotState::PrefillProcessing,
                                 Actor::device)) {
                claim_buf_[claim_count_.fetch_add(1, std::memory_order_relaxed)] = i;
            } else {
                kv_.free(req);
            }
        }
    };
    scan_exec_.run(lanes, scan_lane);
    std::vector<std::uint32_t> claimed(claim_buf_.begin(),
                                       claim_buf_.begin() + claim_count_.load());
    std::sort(claimed.begin(), claimed.end(), [this](std::uint32_t a, std::uint32_t b) {
        return ring_.slot(a).arrival_seq < ring_.slot(b).arrival_seq;
    });
    return claimed;
}

void DeviceScheduler::scan_and_enqueue(TimeNs now) {
    for (std::uint32_t slot : scan_slots(cfg_.lanes)) {
        const Slot& s = ring_.slot(slot);
        PendingEntry e;
        e.slot = slot;
        e.arrival_seq = s.arrival_seq;
        e.request_id = s.request_id.load(std::memory_order_relaxed);
        e.input_len = s.input_len;
        e.max_output = s.max_output;
        e.seed = s.sampling_seed;
        pending_.push_back(e);
        std::push_heap(pending_.begin(), pending_.end(), SeqGreater{});
        log(EventKind::claim, static_cast<std::int32_t>(slot), now);
    }
}

bool DeviceScheduler::slot_completes_next(const SlotCtx& ctx) const {
    std::uint32_t gen = ring_.generated_count(ctx.slot);
    if (gen + 1 >= ctx.max_output) return true;
    return engine_.predicts_eos(ctx.seed, ctx.prompt_h, gen);
}

std::uint32_t DeviceScheduler::completing_forecast() const {
    std::uint32_t n = 0;
    for (const auto& ctx : active_)
        if (slot_completes_next(ctx)) ++n;
    return n;
}

AdmitDecision DeviceScheduler::admit_check() const {
    AdmitDecision d;
    d.step = step_index_;
    d.pending_found = !pending_.empty();
    std::uint32_t occupied = static_cast<std::uint32_t>(active_.size() + paused_.size());
    d.capacity_free = occupied - completing_forecast() < cfg_.batch_capacity;
    // One prefill graph plus the relaunch of the merged decode batch.
    d.window_headroom = window_.counter + 2 <= window_.limit;
    return d;
}

TimeNs DeviceScheduler::charge_launch(TimeNs now) {
    TimeNs cost;
    bool tail = window_.counter == window_.limit;
    if (tail) {
        window_.counter = 0;
        ++window_.epoch;
        ++window_.tail_launches;
    } else {
        ++window_.counter;
        ++window_.ff_launches;
        window_.max_counter_seen = std::max(window_.max_counter_seen, window_.counter);
    }
    if (cfg_.mode == SchedMode::host_mediated) {
        cost = static_cast<TimeNs>(host_rng_.uniform_range(
            static_cast<double>(cfg_.costs.host_low_ns), static_cast<double>(cfg_.costs.host_high_ns)));
    } else {
        cost = tail ? cfg_.costs.tail_ns : cfg_.costs.fire_and_forget_ns;
    }
    log(tail ? EventKind::launch_tail : EventKind::launch_ff, -1, now);
    return now + cost;
}

TimeNs DeviceScheduler::charge_host_step(TimeNs now, std::size_t batch_size) {
    ++stats_.host_round_trips;
    if (bridge_ && clock_ && !clock_->is_virtual()) {
        TimeNs dur = bridge_->round_trip(batch_size);
        stats_.host_samples.push_back(dur);
        return std::max(now + dur, clock_->now());
    }
    double h = host_rng_.uniform_range(static_cast<double>(cfg_.host_overhead_low_ns),
                                       static_cast<double>(cfg_.host_overhead_high_ns));
    auto charged = static_cast<TimeNs>(h * cfg_.host_interference_multiplier);
    stats_.host_samples.push_back(charged);
    return now + charged;
}

void DeviceScheduler::pop_pending(std::vector<PendingEntry>& out, std::size_t max_count) {
    while (!pending_.empty() && out.size() < max_count) {
        std::pop_heap(pending_.begin(), pending_.end(), SeqGreater{});
        out.push_back(pending_.back());
        pending_.pop_back();
    }
}

TimeNs DeviceScheduler::begin_prefill(TimeNs now) {
    std::size_t free_cap = cfg_.batch_capacity - active_.size() - paused_.size();
    std::vector<PendingEntry> admitted;
    pop_pending(admitted, free_cap);
    std::vector<PrefillItem> items;
    items.reserve(admitted.size());
    std::uint32_t longest = 0;
    for (const auto& e : admitted) {
        PrefillItem it;
        it.slot = e.slot;
        it.seed = e.seed;
        it.prompt = ring_.read_input(e.slot);
        longest = std::max(longest, e.input_len);
        items.push_back(std::move(it));
        SlotCtx ctx;
        ctx.slot = e.slot;
        ctx.request_id = e.request_id;
        ctx.seed = e.seed;
        ctx.input_len = e.input_len;
        ctx.max_output = e.max_output;
        prefilling_.push_back(ctx);
        log(EventKind::prefill_launch, static_cast<std::int32_t>(e.slot), now);
    }
    stats_.admitted += admitted.size();
    GraphRef graph = engine_.cache().lookup(static_cast<std::uint32_t>(items.size()), longest,
                                            Phase::prefill);
    TimeNs t = charge_launch(now);
    TimeNs ready = engine_.execute_prefill(graph, items, t);
    outstanding_ = Outstanding::prefill;
    return ready;
}

TimeNs DeviceScheduler::launch_decode(TimeNs now) {
    std::vector<DecodeItem> items;
    items.reserve(active_.size());
    std::uint32_t longest = 0;
    for (const auto& ctx : active_) {
        DecodeItem it;
        it.slot = ctx.slot;
        it.seed = ctx.seed;
        it.prompt_h = ctx.prompt_h;
        it.position = ring_.generated_count(ctx.slot);
        it.context_len = ctx.input_len + it.position + 1;
        longest = std::max(longest, it.context_len);
        items.push_back(it);
    }
    GraphRef graph = engine_.cache().lookup(static_cast<std::uint32_t>(items.size()), longest,
                                            Phase::decode);
    TimeNs t = charge_launch(now);
    TimeNs ready = engine_.execute_decode(graph, items, t);
    outstanding_ = Outstanding::decode;
    return ready;
}

void DeviceScheduler::finish_decode(const ExtractionResult& res, TimeNs now) {
    if (res.tokens.size() != active_.size())
        raise(Errc::invalid_argument, "extraction batch does not match the active set");
    std::vector<SlotCtx> survivors;
    survivors.reserve(active_.size());
    for (std::size_t i = 0; i < active_.size(); ++i) {
        SlotCtx& ctx = active_[i];
        TokenId token = res.tokens[i].token;
        ring_.publish_tokens(ctx.slot, std::span<const TokenId>(&token, 1));
        log(EventKind::publish, static_cast<std::int32_t>(ctx.slot), now);
        std::uint32_t gen = ring_.generated_count(ctx.slot);
        bool done = token == engine_.model().eos_token || gen >= ctx.max_output;
        if (done) {
            ring_.transition(ctx.slot, SlotState::DecodeProcessing, SlotState::DecodeCompleted,
                             Actor::device);
            kv_.free(ctx.request_id);
            log(EventKind::complete, static_cast<std::int32_t>(ctx.slot), now);
            ++stats_.completed;
        } else {
            survivors.push_back(ctx);
        }
    }
    active_ = std::move(survivors);
    ++step_index_;
    ++stats_.decode_steps;
}

void DeviceScheduler::finish_prefill(const ExtractionResult& res, TimeNs now) {
    if (res.tokens.size() != prefilling_.size())
        raise(Errc::invalid_argument, "extraction batch does not match the prefill set");
    ++stats_.prefill_rounds;
    for (std::size_t i = 0; i < prefilling_.size(); ++i) {
        SlotCtx ctx = prefilling_[i];
        ctx.prompt_h = res.tokens[i].prompt_h;
        TokenId token = res.tokens[i].token;
        // First output token lands while the slot is still prefill-owned.
        ring_.publish_tokens(ctx.slot, std::span<const TokenId>(&token, 1));
        log(EventKind::prefill_publish, static_cast<std::int32_t>(ctx.slot), now);
        ring_.transition(ctx.slot, SlotState::PrefillProcessing, SlotState::DecodeProcessing,
                         Actor::device);
        bool done = token == engine_.model().eos_token || ctx.max_output == 1;
        if (done) {
            ring_.transition(ctx.slot, SlotState::DecodeProcessing, SlotState::DecodeCompleted,
                             Actor::device);
            kv_.free(ctx.request_id);
            log(EventKind::complete, static_cast<std::int32_t>(ctx.slot), now);
            ++stats_.completed;
        } else {
            active_.push_back(ctx);
        }
    }
    prefilling_.clear();
    for (auto& ctx : paused_) {
        ring_.transition(ctx.slot, SlotState::DecodePaused, SlotState::DecodeProcessing,
                         Actor::device);
        log(EventKind::resume, static_cast<std::int32_t>(ctx.slot), now);
        active_.push_back(ctx);
    }
    paused_.clear();
    outstanding_ = Outstanding::none;
}

StepOutcome DeviceScheduler::step_boundary(TimeNs now) {
    scan_and_enqueue(now);

    if (outstanding_ == Outstanding::decode) {
        AdmitDecision d = admit_check();
        d.step = step_index_;
        auto res = engine_.poll_extraction(now);
        if (!res) return {false, *engine_.extraction_ready_at()};
        decisions_.push_back(d);
        TimeNs t = now;
        if (cfg_.mode == SchedMode::host_mediated) t = charge_host_step(t, res->tokens.size());
        finish_decode(*res, t);
        if (d.admit()) {
            log(EventKind::pause, -1, t);
            for (auto& ctx : active_) {
                ring_.transition(ctx.slot, SlotState::DecodeProcessing, SlotState::DecodePaused,
                                 Actor::device);
                paused_.push_back(ctx);
            }
            active_.clear();
            return {false, begin_prefill(t)};
        }
        if (!active_.empty()) return {false, launch_decode(t)};
        outstanding_ = Outstanding::none;
        if (!pending_.empty()) return {false, t};
        return {true, 0};
    }

    if (outstanding_ == Outstanding::prefill) {
        auto res = engine_.poll_extraction(now);
        if (!res) return {false, *engine_.extraction_ready_at()};
        finish_prefill(*res, now);
        if (!active_.empty()) return {false, launch_decode(now)};
        if (!pending_.empty()) return {false, now};
        return {true, 0};
    }

    // Idle edge: nothing outstanding.
    AdmitDecision d = admit_check();
    d.step = step_index_;
    if (d.pending_found) {
        decisions_.push_back(d);
        if (d.admit()) {
            log(EventKind::pause, -1, now);
            return {false, begin_prefill(now)};
        }
        if (d.capacity_free && !d.window_headroom && active_.empty() && prefilling_.empty()) {
            // The window ran out with no decode traffic left to roll a tail
            // launch; re-arm it explicitly so admission can proceed.
            window_.counter = 0;
            ++window_.epoch;
            ++window_.tail_launches;
            ++stats_.window_rearm_tails;
            log(EventKind::launch_tail, -1, now);
            return {false, now + cfg_.costs.tail_ns};
        }
    }
    return {true, 0};
}

TimeNs DeviceScheduler::admit_now(TimeNs now) {
    scan_and_enqueue(now);
    AdmitDecision d = admit_check();
    d.step = step_index_;
    decisions_.push_back(d);
    if (!d.admit()) return now;
    log(EventKind::pause, -1, now);
    for (auto& ctx : active_) {
        ring_.transition(ctx.slot, SlotState::DecodeProcessing, SlotState::DecodePaused,
                         Actor::device);
        paused_.push_back(ctx);
    }
    active_.clear();
    TimeNs ready = begin_prefill(now);
    auto res = engine_.poll_extraction(ready);
    finish_prefill(*res, ready);
    return ready;
}

ExtractionResult DeviceScheduler::poll_completion() {
    Clock* clk = clock_;
    if (!clk) raise(Errc::invalid_argument, "poll_completion needs a clock");
    TimeNs deadline = clk->now() + cfg_.poll_timeout_ns;
    for (;;) {
        auto res = engine_.poll_extraction(clk->now());
        if (res) return *res;
        if (clk->now() >= deadline) raise(Errc::poll_timeout, "no extraction deposit in time");
        TimeNs next = deadline;
        if (auto ready = engine_.extraction_ready_at()) next = std::min(next, *ready);
        clk->sleep_until(next);
    }
}

void DeviceScheduler::run_loop(const std::function<bool()>& stop) {
    if (!clock_) raise(Errc::invalid_argument, "run_loop needs a clock");
    // Step edges follow the modeled deadline chain, not the thread's actual
    // wake-up times: a late wake-up processes the edge at its scheduled time
    // and catches up, the way a device-resident loop is unaffected by host
    // CPU pressure.  (Host-mediated charges re-anchor to real time inside
    // charge_host_step, so that mode still feels interference.)
    TimeNs edge = clock_->now();
    while (!stop()) {
        StepOutcome o = step_boundary(edge);
        if (stop()) break;
        if (o.idle) {
            clock_->sleep_until(clock_->now() + cfg_.idle_scan_interval_ns);
            edge = clock_->now();
        } else {
            edge = std::max(o.next, edge);
            clock_->sleep_until(edge);
        }
    }
}

}  // namespace devserve
