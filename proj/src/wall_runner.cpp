#include "devserve/wall_runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

#include "devserve/interference.hpp"

namespace devserve {

std::vector<RequestTiming> WallResult::timings() const {
    std::vector<RequestTiming> out;
    for (const auto& r : requests) {
        if (r.status != RequestStatus::done || r.token_times.empty()) continue;
        RequestTiming t;
        t.arrival = r.marks.arrival;
        t.first_token = r.marks.first_token;
        t.last_token = r.marks.last_token;
        t.output_tokens = static_cast<std::uint32_t>(r.streamed.size());
        t.token_times = r.token_times;
        out.push_back(std::move(t));
    }
    return out;
}

namespace {

void nap(TimeNs ns) {
    std::this_thread::sleep_for(std::chrono::nanoseconds(std::max<TimeNs>(ns, 1)));
}

}  // namespace

WallResult run_wall(const WallOptions& opt) {
    AppConfig app = opt.app;

    RingBuffer ring(app.ring_capacity, app.input_arena_tokens, app.output_arena_tokens);
    Transport transport(app.transport);
    KvPagePool kv(app.kv_page_size, app.kv_total_pages);
    EngineEmulator engine(app.model, app.graphs, app.latency);
    EventLog log;
    WallClock clock;
    std::unique_ptr<HostBridge> bridge;
    if (app.scheduler.mode == SchedMode::host_mediated)
        bridge = std::make_unique<HostBridge>(opt.host_work_bytes);
    DeviceScheduler sched(ring, engine, kv, app.scheduler, &log, bridge.get(), &clock);
    RingRegions regions = register_ring_regions(transport, ring);
    Frontend fe(ring, transport, regions, app.frontend);

    const ArrivalPlan plan = generate(opt.workload, opt.seed);

    std::optional<InterferenceHog> hog;
    if (opt.hog_threads > 0) hog.emplace(opt.hog_threads);

    std::atomic<bool> stop{false};
    std::atomic<bool> arrivals_done{false};
    std::atomic<std::uint64_t> rejected{0};

    std::thread sched_thread([&] { sched.run_loop([&] { return stop.load(); }); });

    // Coalescing-window service: flush due submit batches and publish the
    // slots once the posted writes complete.
    std::thread flusher([&] {
        std::vector<SubmitBatch> open;
        for (;;) {
            const bool stopping = stop.load();
            const TimeNs now = clock.now();
            if (auto d = fe.submit_deadline(); d && (*d <= now || stopping)) {
                if (auto b = fe.flush_submits(now, stopping)) open.push_back(*b);
            }
            for (auto it = open.begin(); it != open.end();) {
                if (it->complete_at <= now) {
                    fe.finish_submits(*it, now);
                    it = open.erase(it);
                } else {
                    ++it;
                }
            }
            if (stopping && open.empty() && !fe.submit_deadline()) break;
            nap(20 * kUs);
        }
    });

    std::thread reader([&] {
        for (;;) {
            const TimeNs now = clock.now();
            ReaderOutcome out = fe.advance_reader(now);
            if (stop.load()) break;
            const TimeNs wait = out.next_event > now ? out.next_event - now : 0;
            nap(std::min<TimeNs>(wait, 2 * kMs));
        }
    });

    std::thread submitter([&] {
        const TimeNs t0 = clock.now();
        for (const auto& item : plan.items) {
            const TimeNs target = t0 + item.at;
            while (!stop.load() && clock.now() < target)
                nap(std::min<TimeNs>(target - clock.now(), kMs));
            if (stop.load()) break;
            auto prompt = synth_prompt(item.seed, item.input_len, app.model.vocab_size);
            bool settled = false;
            for (int attempt = 0; attempt < 3 && !settled && !stop.load(); ++attempt) {
                EnqueueOutcome out = fe.enqueue_request(prompt, item.max_output, item.seed,
                                                        clock.now(), TokenSink{});
                switch (out.kind) {
                    case EnqueueOutcome::Kind::accepted:
                        settled = true;
                        break;
                    case EnqueueOutcome::Kind::refresh_pending: {
                        const TimeNs until = out.retry_at;
                        while (!stop.load() && clock.now() < until)
                            nap(std::min<TimeNs>(until - clock.now(), kMs));
                        break;
                    }
                    case EnqueueOutcome::Kind::rejected:
                        rejected.fetch_add(1);
                        settled = true;
                        break;
                }
            }
            if (!settled) rejected.fetch_add(1);
        }
        arrivals_done.store(true);
    });

    // Wait for the plan to finish and the system to drain.
    const auto deadline =
        std::chrono::steady_clock::now() +
        std::chrono::nanoseconds(static_cast<TimeNs>(opt.drain_timeout_s * 1e9));
    bool drained = false;
    for (;;) {
        if (arrivals_done.load() && fe.all_terminal() && !fe.submit_deadline()) {
            drained = true;
            break;
        }
        if (std::chrono::steady_clock::now() >= deadline) break;
        nap(kMs);
    }
    stop.store(true);
    submitter.join();
    flusher.join();
    reader.join();
    sched_thread.join();
    if (hog) hog->stop();

    WallResult result;
    result.offered = plan.items.size();
    result.rejected = rejected.load();
    result.drained = drained;
    result.sched = sched.stats();
    result.window = sched.window();
    result.fe = fe.stats();

    TimeNs first_arrival = -1, last_done = -1;
    for (std::uint64_t id : fe.request_ids()) {
        RequestRecord rec = fe.snapshot_request(id);
        SimRequestResult r;
        r.request_id = rec.request_id;
        r.status = rec.status;
        r.marks = rec.marks;
        r.input_len = rec.input_len;
        r.max_output = rec.max_output;
        r.streamed = std::move(rec.streamed_ids);
        r.token_times = std::move(rec.token_times);
        if (r.status == RequestStatus::done) {
            ++result.completed;
            if (first_arrival < 0 || r.marks.arrival < first_arrival)
                first_arrival = r.marks.arrival;
            if (r.marks.last_token > last_done) last_done = r.marks.last_token;
        }
        result.requests.push_back(std::move(r));
    }
    if (result.completed > 0 && last_done > first_arrival) {
        result.makespan_ns = last_done - first_arrival;
        result.achieved_rps =
            static_cast<double>(result.completed) /
            (static_cast<double>(result.makespan_ns) / 1e9);
    }
    return result;
}

}  // namespace devserve
