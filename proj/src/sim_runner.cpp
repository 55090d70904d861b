#include "devserve/sim_runner.hpp"

#include <algorithm>
#include <limits>
#include <queue>

#include "devserve/rng.hpp"

namespace devserve {

std::vector<RequestTiming> SimResult::timings() const {
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

std::vector<TokenId> synth_prompt(std::uint64_t seed, std::uint32_t len,
                                  std::uint32_t vocab_size) {
    std::vector<TokenId> out(len);
    for (std::uint32_t j = 0; j < len; ++j)
        out[j] = static_cast<TokenId>(splitmix64(seed ^ (j + 1)) % vocab_size);
    return out;
}

namespace {

constexpr TimeNs kNever = std::numeric_limits<TimeNs>::max();

struct RetryItem {
    TimeNs at;
    std::size_t plan_index;
    bool operator>(const RetryItem& o) const { return at > o.at; }
};

struct BatchItem {
    TimeNs at;
    SubmitBatch batch;
    bool operator>(const BatchItem& o) const { return at > o.at; }
};

}  // namespace

SimResult run_sim(const SimOptions& opt) {
    AppConfig app = opt.app;
    app.scheduler.scan_workers = 0;  // single-threaded determinism
    app.scheduler.pin_workers = false;

    RingBuffer ring(app.ring_capacity, app.input_arena_tokens, app.output_arena_tokens);
    Transport transport(app.transport);
    KvPagePool kv(app.kv_page_size, app.kv_total_pages);
    EngineEmulator engine(app.model, app.graphs, app.latency);
    EventLog log;
    VirtualClock vclock;
    DeviceScheduler sched(ring, engine, kv, app.scheduler, &log, nullptr, &vclock);
    RingRegions regions = register_ring_regions(transport, ring);
    Frontend fe(ring, transport, regions, app.frontend);

    const ArrivalPlan plan = generate(opt.workload, opt.seed);

    std::size_t next_arrival = 0;
    std::priority_queue<RetryItem, std::vector<RetryItem>, std::greater<>> retries;
    std::priority_queue<BatchItem, std::vector<BatchItem>, std::greater<>> batches;
    TimeNs sched_next = kNever;   // kNever = suspended until a submit lands
    TimeNs reader_next = 0;
    std::uint64_t rejected = 0;

    SimResult result;
    result.offered = plan.items.size();

    auto enqueue = [&](std::size_t idx, TimeNs now) {
        const ArrivalItem& item = plan.items[idx];
        auto prompt = synth_prompt(item.seed, item.input_len, app.model.vocab_size);
        EnqueueOutcome out = fe.enqueue_request(prompt, item.max_output, item.seed, now,
                                                TokenSink{});
        if (out.kind == EnqueueOutcome::Kind::refresh_pending) {
            retries.push({std::max(out.retry_at, now + 1), idx});
        } else if (out.kind == EnqueueOutcome::Kind::rejected) {
            ++rejected;
        }
    };

    for (;;) {
        const bool arrivals_done = next_arrival >= plan.items.size();
        if (arrivals_done && retries.empty() && batches.empty() && !fe.submit_deadline() &&
            fe.all_terminal()) {
            break;
        }

        // Next-event selection; ties resolve in the fixed order below.
        TimeNs t_batch = batches.empty() ? kNever : batches.top().at;
        TimeNs t_retry = retries.empty() ? kNever : retries.top().at;
        TimeNs t_arrival = arrivals_done ? kNever : plan.items[next_arrival].at;
        TimeNs t_flush = fe.submit_deadline() ? *fe.submit_deadline() : kNever;
        TimeNs t = std::min({t_batch, t_retry, t_arrival, t_flush, sched_next, reader_next});
        if (t == kNever) break;  // nothing left to run
        if (opt.max_virtual_ns > 0 && t > opt.max_virtual_ns) {
            result.hit_time_limit = true;
            break;
        }
        vclock.set(t);

        if (t_batch == t) {
            SubmitBatch batch = std::move(const_cast<BatchItem&>(batches.top()).batch);
            batches.pop();
            fe.finish_submits(batch, t);
            sched_next = std::min(sched_next, t);  // new work may be visible
            continue;
        }
        if (t_retry == t) {
            std::size_t idx = retries.top().plan_index;
            retries.pop();
            enqueue(idx, t);
            continue;
        }
        if (t_arrival == t) {
            enqueue(next_arrival++, t);
            continue;
        }
        if (t_flush == t) {
            if (auto batch = fe.flush_submits(t)) batches.push({batch->complete_at, *batch});
            continue;
        }
        if (sched_next == t) {
            StepOutcome o = sched.step_boundary(t);
            if (!o.idle) {
                sched_next = std::max(o.next, t);
            } else if (fe.active_requests() > 0) {
                // Requests are in flight but nothing is claimable yet (e.g. a
                // KV-deferred slot); poll again at the scan interval.
                sched_next = t + app.scheduler.idle_scan_interval_ns;
            } else {
                sched_next = kNever;
            }
            continue;
        }
        // Reader turn.
        ReaderOutcome out = fe.advance_reader(t);
        reader_next = std::max(out.next_event, t + 1);
    }

    result.end_time = vclock.now();
    result.rejected = rejected;
    result.sched = sched.stats();
    result.window = sched.window();
    result.fe = fe.stats();
    if (opt.collect_events) result.events = log.snapshot();

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
        result.requests.push_back(std::move(r));
    }
    return result;
}

}  // namespace devserve
