// End-to-end acceptance gate for the serving stack.  Each check prints one
// PASS/FAIL line; the process exits nonzero if any check fails.  A check
// whose hardware precondition is not met prints SKIP instead and does not
// affect the exit status.
#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <memory>
#include <new>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "devserve/bench.hpp"
#include "devserve/config.hpp"
#include "devserve/engine.hpp"
#include "devserve/errors.hpp"
#include "devserve/event_log.hpp"
#include "devserve/frontend.hpp"
#include "devserve/kv_pool.hpp"
#include "devserve/metrics.hpp"
#include "devserve/ring_buffer.hpp"
#include "devserve/rng.hpp"
#include "devserve/scheduler.hpp"
#include "devserve/sim_runner.hpp"
#include "devserve/tokenizer.hpp"
#include "devserve/workload.hpp"

// Allocation counter backing the zero-allocation check on the encode path.
static std::atomic<std::uint64_t> g_alloc_count{0};

void* operator new(std::size_t n) {
    g_alloc_count.fetch_add(1, std::memory_order_relaxed);
    if (void* p = std::malloc(n ? n : 1)) return p;
    throw std::bad_alloc();
}
void* operator new[](std::size_t n) { return ::operator new(n); }
void* operator new(std::size_t n, std::align_val_t al) {
    g_alloc_count.fetch_add(1, std::memory_order_relaxed);
    if (void* p = std::aligned_alloc(static_cast<std::size_t>(al),
                                     (n + static_cast<std::size_t>(al) - 1) &
                                         ~(static_cast<std::size_t>(al) - 1)))
        return p;
    throw std::bad_alloc();
}
void* operator new[](std::size_t n, std::align_val_t al) { return ::operator new(n, al); }
void operator delete(void* p) noexcept { std::free(p); }
void operator delete[](void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }
void operator delete[](void* p, std::size_t) noexcept { std::free(p); }
void operator delete(void* p, std::align_val_t) noexcept { std::free(p); }
void operator delete[](void* p, std::align_val_t) noexcept { std::free(p); }
void operator delete(void* p, std::size_t, std::align_val_t) noexcept { std::free(p); }
void operator delete[](void* p, std::size_t, std::align_val_t) noexcept { std::free(p); }

using namespace devserve;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

#define ACCEPT_NEED(cond)                                              \
    do {                                                               \
        if (!(cond)) return {false, std::string("line ") +             \
                                        std::to_string(__LINE__) +     \
                                        ": " #cond};                   \
    } while (0)

std::vector<TokenId> expected_chain(const PseudoModelConfig& cfg, std::uint64_t seed,
                                    std::uint64_t ph, std::uint32_t max_output) {
    std::vector<TokenId> out;
    for (std::uint32_t pos = 0; pos < max_output; ++pos) {
        const TokenId tok = model_token(cfg, seed, ph, pos);
        out.push_back(tok);
        if (tok == cfg.eos_token) break;
    }
    return out;
}

AppConfig fast_app(std::uint32_t ring, std::uint32_t in_arena, std::uint32_t out_arena) {
    AppConfig app = default_config();
    app.ring_capacity = ring;
    app.input_arena_tokens = in_arena;
    app.output_arena_tokens = out_arena;
    app.latency.prefill_base_ns = 50 * kUs;
    app.latency.prefill_per_prompt_token_ns = 20;
    app.latency.decode_base_ns = 120 * kUs;
    app.latency.decode_per_seq_ns = 200;
    return app;
}

// ---- check 1: slot state machine under concurrent actors -------------------

Outcome check_state_machine() {
    constexpr std::uint32_t kSlots = 64;
    RingBuffer ring(kSlots, 1u << 12, 1u << 12);

    std::atomic<std::uint64_t> completions{0};
    std::atomic<std::uint64_t> illegal{0};
    std::atomic<std::uint64_t> double_claims{0};
    std::atomic<std::uint64_t> lost_ownership{0};
    std::atomic<bool> stop{false};
    std::array<std::atomic<bool>, kSlots> owned{};

    // Each submitter owns a quarter of the slots (mirroring the production
    // frontend, which serializes writers per slot through its reservation
    // cache); claims and reclaims still race freely across all of them.
    auto submitter = [&](std::uint32_t tid, std::uint64_t seed) {
        Rng rng(seed);
        std::vector<TokenId> prompt;
        while (!stop.load(std::memory_order_relaxed)) {
            const auto slot =
                static_cast<std::uint32_t>(rng.next() % (kSlots / 4)) * 4 + tid;
            if (ring.state(slot) != SlotState::Empty) {
                if ((rng.next() & 7) == 0) std::this_thread::yield();
                continue;
            }
            prompt.assign(1 + rng.next() % 4, static_cast<TokenId>(rng.next() % 1000));
            try {
                ring.write_prompt(slot, prompt, 4, rng.next());
            } catch (const Error& e) {
                // A write can land after the reader's reclaim loses a race;
                // the protocol tolerates it and the publish CAS below fails.
                if (e.code() == Errc::slot_not_empty) continue;
                illegal.fetch_add(1);
                continue;
            }
            ring.transition(slot, SlotState::Empty, SlotState::PrefillPending,
                            Actor::frontend);
        }
    };

    // Two racing device-plane claimers: the `owned` flags assert mutual
    // exclusion from the claim CAS alone.
    auto device_actor = [&](std::uint64_t seed) {
        Rng rng(seed);
        TokenId tok = 1;
        while (!stop.load(std::memory_order_relaxed)) {
            for (std::uint32_t slot = 0; slot < kSlots; ++slot) {
                if (ring.state(slot) != SlotState::PrefillPending) continue;
                try {
                    if (!ring.transition(slot, SlotState::PrefillPending,
                                         SlotState::PrefillProcessing, Actor::device))
                        continue;  // the other claimer won
                    if (owned[slot].exchange(true)) double_claims.fetch_add(1);
                    ring.publish_tokens(slot, std::span<const TokenId>(&tok, 1));
                    if (!ring.transition(slot, SlotState::PrefillProcessing,
                                         SlotState::DecodeProcessing, Actor::device))
                        lost_ownership.fetch_add(1);
                    if ((rng.next() & 3) == 0) {
                        if (!ring.transition(slot, SlotState::DecodeProcessing,
                                             SlotState::DecodePaused, Actor::device))
                            lost_ownership.fetch_add(1);
                        if ((rng.next() & 7) == 0) std::this_thread::yield();
                        if (!ring.transition(slot, SlotState::DecodePaused,
                                             SlotState::DecodeProcessing, Actor::device))
                            lost_ownership.fetch_add(1);
                    }
                    ring.publish_tokens(slot, std::span<const TokenId>(&tok, 1));
                    if (!ring.transition(slot, SlotState::DecodeProcessing,
                                         SlotState::DecodeCompleted, Actor::device))
                        lost_ownership.fetch_add(1);
                } catch (const Error&) {
                    illegal.fetch_add(1);
                }
            }
            if ((rng.next() & 7) == 0) std::this_thread::yield();
        }
    };

    auto reader = [&] {
        while (!stop.load(std::memory_order_relaxed)) {
            for (std::uint32_t slot = 0; slot < kSlots; ++slot) {
                if (ring.state(slot) != SlotState::DecodeCompleted) continue;
                try {
                    // Release the ownership marker before the slot becomes
                    // claimable again.
                    owned[slot].store(false);
                    if (ring.reclaim(slot)) completions.fetch_add(1);
                } catch (const Error&) {
                    illegal.fetch_add(1);
                }
            }
            std::this_thread::yield();
        }
    };

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::thread> threads;
    for (std::uint32_t i = 0; i < 4; ++i) threads.emplace_back(submitter, i, 0x51ull + i);
    threads.emplace_back(device_actor, 0xD1ull);
    threads.emplace_back(device_actor, 0xD2ull);
    threads.emplace_back(reader);

    constexpr std::uint64_t kTarget = 10'000;
    while (completions.load() < kTarget) {
        if (std::chrono::steady_clock::now() - t0 > std::chrono::seconds(110)) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    stop.store(true);
    for (auto& t : threads) t.join();

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%llu lifecycle round trips, %llu illegal, %llu double-claims, "
                  "%llu ownership losses, %.1fs",
                  static_cast<unsigned long long>(completions.load()),
                  static_cast<unsigned long long>(illegal.load()),
                  static_cast<unsigned long long>(double_claims.load()),
                  static_cast<unsigned long long>(lost_ownership.load()), secs);
    const bool pass = completions.load() >= kTarget && illegal.load() == 0 &&
                      double_claims.load() == 0 && lost_ownership.load() == 0;
    return {pass, buf};
}

// ---- check 2: exactly-once delivery over 1000 concurrent requests ----------

Outcome check_exactly_once() {
    AppConfig app = fast_app(256, 1u << 15, 1u << 13);
    app.scheduler.batch_capacity = 16;

    WorkloadSpec w;
    w.arrival = ArrivalKind::poisson;
    w.rate = 3000.0;
    w.count = 1000;
    w.input = LengthDist::uniform(4, 64);
    w.output = LengthDist::uniform(1, 24);

    SimOptions so;
    so.app = app;
    so.workload = w;
    so.seed = 77;
    so.max_virtual_ns = 120 * kSec;
    const SimResult res = run_sim(so);
    ACCEPT_NEED(!res.hit_time_limit);
    ACCEPT_NEED(res.offered == 1000);
    ACCEPT_NEED(res.rejected == 0);
    ACCEPT_NEED(res.requests.size() == 1000);

    const ArrivalPlan plan = generate(w, so.seed);
    for (std::size_t i = 0; i < res.requests.size(); ++i) {
        const auto& r = res.requests[i];
        const auto& item = plan.items[i];
        ACCEPT_NEED(r.status == RequestStatus::done);
        const auto prompt = synth_prompt(item.seed, item.input_len, app.model.vocab_size);
        const auto want =
            expected_chain(app.model, item.seed, prompt_hash(prompt), item.max_output);
        if (r.streamed != want)
            return {false, "request " + std::to_string(i) + " stream diverged"};
        ACCEPT_NEED(r.token_times.size() == r.streamed.size());
    }
    return {true, "1000/1000 delivered exactly once"};
}

// ---- check 3: launch-window law over a long run ----------------------------

Outcome check_launch_window() {
    AppConfig app = fast_app(32, 1u << 13, 1u << 14);  // quotas 256 in / 512 out
    app.scheduler.batch_capacity = 4;
    app.kv_total_pages = 4096;

    WorkloadSpec w;
    w.arrival = ArrivalKind::poisson;
    w.rate = 15.0;  // light enough that the 32-slot ring never rejects
    w.count = 100;
    w.input = LengthDist::fixed_len(64);
    w.output = LengthDist::fixed_len(512);

    SimOptions so;
    so.app = app;
    so.workload = w;
    so.seed = 2024;
    so.collect_events = true;
    so.max_virtual_ns = 600 * kSec;
    const SimResult res = run_sim(so);
    ACCEPT_NEED(!res.hit_time_limit);
    ACCEPT_NEED(res.sched.decode_steps >= 10'000);
    ACCEPT_NEED(res.window.max_counter_seen <= app.scheduler.window_limit);
    ACCEPT_NEED(res.window.epoch == res.window.tail_launches);
    ACCEPT_NEED(res.window.tail_launches > 0);

    // Every stream still matches the model chain.
    const ArrivalPlan plan = generate(w, so.seed);
    ACCEPT_NEED(res.requests.size() == plan.items.size());
    std::size_t longest = 0;
    for (std::size_t i = 0; i < res.requests.size(); ++i) {
        const auto& r = res.requests[i];
        ACCEPT_NEED(r.status == RequestStatus::done);
        const auto prompt = synth_prompt(plan.items[i].seed, plan.items[i].input_len,
                                         app.model.vocab_size);
        const auto want = expected_chain(app.model, plan.items[i].seed, prompt_hash(prompt),
                                         plan.items[i].max_output);
        if (r.streamed != want)
            return {false, "request " + std::to_string(i) + " stream diverged"};
        if (r.streamed.size() > res.requests[longest].streamed.size()) longest = i;
    }
    ACCEPT_NEED(res.requests[longest].streamed.size() >= 300);

    // The longest request must live through at least two window resets
    // (i.e. span three epochs) without its stream changing...
    const auto& lr = res.requests[longest];
    std::uint64_t tails_inside = 0;
    for (const auto& ev : res.events) {
        if (ev.kind != EventKind::launch_tail) continue;
        if (ev.clock > lr.token_times.front() && ev.clock < lr.token_times.back())
            ++tails_inside;
    }
    ACCEPT_NEED(tails_inside >= 2);

    // ...compared against a reference run where the whole request fits one
    // window epoch.
    AppConfig ref = app;
    ref.scheduler.window_limit = 1'000'000;
    RingBuffer ring(ref.ring_capacity, ref.input_arena_tokens, ref.output_arena_tokens);
    EngineEmulator engine(ref.model, ref.graphs, ref.latency);
    KvPagePool kv(ref.kv_page_size, ref.kv_total_pages);
    EventLog log;
    DeviceScheduler sched(ring, engine, kv, ref.scheduler, &log);

    const auto& item = plan.items[longest];
    const auto prompt = synth_prompt(item.seed, item.input_len, app.model.vocab_size);
    ring.write_prompt(0, prompt, item.max_output, item.seed, 1, 0);
    ring.transition(0, SlotState::Empty, SlotState::PrefillPending, Actor::frontend);
    TimeNs t = 0;
    for (int guard = 0; guard < 4'000'000; ++guard) {
        StepOutcome o = sched.step_boundary(t);
        if (o.idle) break;
        t = std::max(o.next, t);
    }
    ACCEPT_NEED(sched.stats().completed == 1);
    ACCEPT_NEED(sched.window().epoch == 0);  // single-epoch reference
    const std::uint32_t n = ring.generated_count(0);
    const std::vector<TokenId> ref_stream = ring.read_output(0, 0, n);
    ACCEPT_NEED(ref_stream == lr.streamed);

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%llu decode steps, max counter %u, %llu epochs == %llu tails, "
                  "%llu-epoch request matches the single-epoch reference",
                  static_cast<unsigned long long>(res.sched.decode_steps),
                  res.window.max_counter_seen,
                  static_cast<unsigned long long>(res.window.epoch),
                  static_cast<unsigned long long>(res.window.tail_launches),
                  static_cast<unsigned long long>(tails_inside + 1));
    return {true, buf};
}

// ---- check 4: admission fires iff all three reasons hold -------------------

struct FuzzTotals {
    std::uint64_t admits = 0;
    std::uint64_t blocked_window = 0;
    std::uint64_t blocked_capacity = 0;
    std::uint64_t kv_deferrals = 0;
};

Outcome fuzz_admission(SchedulerConfig scfg, std::uint32_t kv_pages, std::uint64_t seed,
                       FuzzTotals& totals) {
    PseudoModelConfig model;
    GraphCacheConfig graphs;
    LatencyProfile lat{10 * kUs, 10, 20 * kUs, 100};
    RingBuffer ring(16, 1u << 10, 1u << 9);  // quotas 64 in / 32 out
    EngineEmulator engine(model, graphs, lat);
    KvPagePool kv(16, kv_pages);
    EventLog log;
    DeviceScheduler sched(ring, engine, kv, scfg, &log);

    Rng rng(seed);
    std::uint64_t next_rid = 1;
    std::uint64_t next_seq = 0;
    constexpr std::uint64_t kRequests = 40;
    std::uint64_t submitted = 0;
    std::uint64_t verified = 0;
    TimeNs t = 0;

    struct Expect {
        std::uint64_t seed = 0;
        std::uint64_t prompt_h = 0;
        std::uint32_t max_output = 0;
    };
    std::map<std::uint32_t, Expect> in_flight;  // slot -> expected stream source

    auto try_submit = [&]() -> bool {
        if (submitted >= kRequests) return false;
        const auto slot = static_cast<std::uint32_t>(rng.next() % ring.capacity());
        if (ring.state(slot) != SlotState::Empty) return false;
        std::vector<TokenId> prompt(1 + rng.next() % 16);
        for (auto& p : prompt) p = static_cast<TokenId>(rng.next() % model.vocab_size);
        const auto max_out = static_cast<std::uint32_t>(1 + rng.next() % 12);
        const std::uint64_t req_seed = rng.next();
        ring.write_prompt(slot, prompt, max_out, req_seed, next_rid++, next_seq++);
        if (!ring.transition(slot, SlotState::Empty, SlotState::PrefillPending,
                             Actor::frontend))
            return false;
        in_flight[slot] = {req_seed, prompt_hash(prompt), max_out};
        ++submitted;
        return true;
    };

    // Reader half of the rig: verify and reclaim completed slots so the ring
    // never silts up.
    bool stream_mismatch = false;
    auto drain = [&] {
        for (std::uint32_t s = 0; s < ring.capacity(); ++s) {
            if (ring.state(s) != SlotState::DecodeCompleted) continue;
            const auto it = in_flight.find(s);
            if (it == in_flight.end()) continue;
            const auto got = ring.read_output(s, 0, ring.generated_count(s));
            const auto want = expected_chain(model, it->second.seed, it->second.prompt_h,
                                             it->second.max_output);
            if (got != want) stream_mismatch = true;
            in_flight.erase(it);
            ring.reclaim(s);
            ++verified;
        }
    };

    int idle_spins = 0;
    for (int guard = 0; guard < 2'000'000; ++guard) {
        // Random frontend activity between boundaries fuzzes the admission
        // timing.
        if ((rng.next() & 1) == 0) try_submit();
        if ((rng.next() & 3) == 0) drain();
        StepOutcome o = sched.step_boundary(t);
        if (o.idle) {
            drain();
            if (verified >= kRequests) break;
            if (!try_submit()) {
                // KV-deferred slots poll at the scan interval.
                t += scfg.idle_scan_interval_ns;
                if (++idle_spins > 100000) return {false, "fuzz run stalled"};
            }
            continue;
        }
        idle_spins = 0;
        t = std::max(o.next, t);
    }
    drain();
    if (stream_mismatch) return {false, "a completed stream diverged from the model chain"};
    if (verified != kRequests)
        return {false, "fuzz run finished " + std::to_string(verified) + " of " +
                           std::to_string(kRequests)};

    const auto events = log.snapshot();
    const auto& decisions = sched.decisions();

    // Pause events and admitting decisions are both chronological, so they
    // must pair up 1:1 in order.  A decision taken at a decode boundary logs
    // its pause AFTER that step's token publishes (the step index has moved
    // on by one); a decision taken at an idle boundary logs it at the
    // decision's own step, before any decoding happens there.  Log order
    // tells the two apart: publishes for step s precede the pause only in
    // the decode-boundary case.
    std::map<std::uint64_t, std::size_t> first_publish_at;  // step -> log index
    std::vector<std::size_t> pause_pos;
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (events[i].kind == EventKind::publish)
            first_publish_at.try_emplace(events[i].step, i);
        else if (events[i].kind == EventKind::pause)
            pause_pos.push_back(i);
    }
    std::vector<const AdmitDecision*> admitting;
    for (const auto& d : decisions)
        if (d.admit()) admitting.push_back(&d);
    if (admitting.size() != pause_pos.size())
        return {false, "pause events do not pair 1:1 with admitting decisions (" +
                           std::to_string(pause_pos.size()) + " vs " +
                           std::to_string(admitting.size()) + ")"};
    for (std::size_t i = 0; i < admitting.size(); ++i) {
        const auto pub = first_publish_at.find(admitting[i]->step);
        const bool decode_boundary = pub != first_publish_at.end() &&
                                     pub->second < pause_pos[i];
        const std::uint64_t want = admitting[i]->step + (decode_boundary ? 1 : 0);
        const std::uint64_t got = events[pause_pos[i]].step;
        if (got != want)
            return {false, "pause " + std::to_string(i) + " logged at step " +
                               std::to_string(got) + ", decision says " +
                               std::to_string(want)};
    }

    // Admission must move requests: one prefill-launch per admitted request,
    // and nothing admitted outside an admitting decision.
    std::uint64_t prefill_launches = 0;
    for (const auto& ev : events)
        if (ev.kind == EventKind::prefill_launch) ++prefill_launches;
    ACCEPT_NEED(prefill_launches == sched.stats().admitted);
    ACCEPT_NEED(sched.stats().admitted >= admitting.size());
    ACCEPT_NEED(!admitting.empty());

    // An admitted request joins the decode batch at the very step its
    // prefill published: no decode boundary may pass between the two.
    std::map<std::int32_t, std::uint64_t> open_prefill_step;
    for (const auto& ev : events) {
        if (ev.kind == EventKind::prefill_publish) {
            open_prefill_step[ev.slot] = ev.step;
        } else if (ev.kind == EventKind::publish) {
            auto it = open_prefill_step.find(ev.slot);
            if (it != open_prefill_step.end()) {
                if (ev.step != it->second)
                    return {false, "slot " + std::to_string(ev.slot) +
                                       " first decoded at step " + std::to_string(ev.step) +
                                       " but prefilled at step " +
                                       std::to_string(it->second)};
                open_prefill_step.erase(it);
            }
        } else if (ev.kind == EventKind::complete) {
            open_prefill_step.erase(ev.slot);
        }
    }

    for (const auto& d : decisions) {
        if (!d.admit()) continue;
        ACCEPT_NEED(d.pending_found);
        ACCEPT_NEED(d.capacity_free);
        ACCEPT_NEED(d.window_headroom);
    }
    totals.admits += admitting.size();
    for (const auto& d : decisions) {
        if (d.pending_found && d.capacity_free && !d.window_headroom) ++totals.blocked_window;
        if (d.pending_found && !d.capacity_free) ++totals.blocked_capacity;
    }
    totals.kv_deferrals += sched.stats().kv_deferrals;
    return {true, ""};
}

Outcome check_admission() {
    FuzzTotals totals;
    SchedulerConfig base;
    base.batch_capacity = 4;
    base.window_limit = 120;

    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        Outcome o = fuzz_admission(base, 4096, seed, totals);
        if (!o.pass) return o;

        SchedulerConfig tight_window = base;
        tight_window.window_limit = 4;  // forces headroom stalls and re-arms
        o = fuzz_admission(tight_window, 4096, seed + 100, totals);
        if (!o.pass) return o;

        SchedulerConfig tight_batch = base;
        tight_batch.batch_capacity = 2;
        o = fuzz_admission(tight_batch, 4096, seed + 200, totals);
        if (!o.pass) return o;

        // 6 pages with up to 2 needed per request: any single request fits,
        // but three concurrent claims exhaust the pool and later ones defer.
        o = fuzz_admission(base, 6, seed + 300, totals);
        if (!o.pass) return o;
    }

    // The sweep must have exercised every blocking reason and the admit path.
    ACCEPT_NEED(totals.admits > 0);
    ACCEPT_NEED(totals.blocked_window > 0);
    ACCEPT_NEED(totals.blocked_capacity > 0);
    ACCEPT_NEED(totals.kv_deferrals > 0);

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "24 fuzz runs: %llu admits, %llu window-blocked, %llu "
                  "capacity-blocked, %llu kv deferrals",
                  static_cast<unsigned long long>(totals.admits),
                  static_cast<unsigned long long>(totals.blocked_window),
                  static_cast<unsigned long long>(totals.blocked_capacity),
                  static_cast<unsigned long long>(totals.kv_deferrals));
    return {true, buf};
}

// ---- check 5: device and host modes agree token for token ------------------

Outcome check_mode_equivalence() {
    for (int i = 0; i < 100; ++i) {
        Rng meta(5000 + i);
        WorkloadSpec w;
        w.arrival = ArrivalKind::poisson;
        w.rate = 100.0 + static_cast<double>(meta.next() % 900);
        w.count = static_cast<std::uint32_t>(5 + meta.next() % 10);
        w.input = LengthDist::uniform(1, 32);
        w.output = LengthDist::uniform(1, 16);

        SimOptions dev;
        dev.app = fast_app(64, 1u << 12, 1u << 11);
        dev.app.scheduler.batch_capacity = 8;
        dev.workload = w;
        dev.seed = 9000 + i;
        dev.max_virtual_ns = 60 * kSec;

        SimOptions host = dev;
        host.app.scheduler.mode = SchedMode::host_mediated;
        host.app.scheduler.host_overhead_low_ns = 500 * kUs;
        host.app.scheduler.host_overhead_high_ns = 2 * kMs;

        const SimResult rd = run_sim(dev);
        const SimResult rh = run_sim(host);
        if (rd.requests.size() != rh.requests.size())
            return {false, "workload " + std::to_string(i) + ": request count differs"};
        for (std::size_t r = 0; r < rd.requests.size(); ++r) {
            if (rd.requests[r].status != RequestStatus::done ||
                rh.requests[r].status != RequestStatus::done)
                return {false, "workload " + std::to_string(i) + ": incomplete request"};
            if (rd.requests[r].streamed != rh.requests[r].streamed)
                return {false, "workload " + std::to_string(i) + " request " +
                                   std::to_string(r) + ": streams diverge between modes"};
        }
    }
    return {true, "100 workloads, all per-request streams identical across modes"};
}

// ---- check 6: host-mediated slowdown lands in the expected band ------------

Outcome check_makespan_trend() {
    auto run_pair = [](std::uint32_t out_len, double& ratio) -> Outcome {
        AppConfig app = default_config();
        app.ring_capacity = 32;
        app.input_arena_tokens = 1u << 15;   // quota 1024
        app.output_arena_tokens = 1u << 14;  // quota 512
        app.scheduler.batch_capacity = 16;
        app.latency.prefill_base_ns = 1 * kMs;
        app.latency.prefill_per_prompt_token_ns = 2 * kUs;
        app.latency.decode_base_ns = 10 * kMs;
        app.latency.decode_per_seq_ns = 0;

        WorkloadSpec w;
        w.arrival = ArrivalKind::fixed;
        w.rate = 1e6;  // all 16 requests land within 16 microseconds
        w.count = 16;
        w.input = LengthDist::fixed_len(1024);
        w.output = LengthDist::fixed_len(out_len);

        SimOptions dev;
        dev.app = app;
        dev.workload = w;
        dev.seed = 606;
        dev.max_virtual_ns = 600 * kSec;

        SimOptions host = dev;
        host.app.scheduler.mode = SchedMode::host_mediated;
        host.app.scheduler.host_overhead_low_ns = static_cast<TimeNs>(1.6 * kMs);
        host.app.scheduler.host_overhead_high_ns = 7 * kMs;

        const SimResult rd = run_sim(dev);
        const SimResult rh = run_sim(host);
        ACCEPT_NEED(!rd.hit_time_limit);
        ACCEPT_NEED(!rh.hit_time_limit);
        ACCEPT_NEED(rd.requests.size() == 16 && rh.requests.size() == 16);
        for (const auto& r : rd.requests) ACCEPT_NEED(r.status == RequestStatus::done);
        for (const auto& r : rh.requests) ACCEPT_NEED(r.status == RequestStatus::done);

        auto makespan = [](const SimResult& res) {
            TimeNs last = 0;
            for (const auto& r : res.requests) last = std::max(last, r.marks.last_token);
            return last;
        };
        const double md = static_cast<double>(makespan(rd));
        const double mh = static_cast<double>(makespan(rh));
        ACCEPT_NEED(md > 0);
        ratio = mh / md;
        return {true, ""};
    };

    double ratio_short = 0, ratio_long = 0;
    Outcome o = run_pair(64, ratio_short);
    if (!o.pass) return o;
    o = run_pair(512, ratio_long);
    if (!o.pass) return o;

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "host/device makespan ratio %.3f (64-token) and %.3f (512-token), "
                  "band [1.11, 1.75]",
                  ratio_short, ratio_long);
    const bool pass = ratio_short >= 1.11 && ratio_short <= 1.75 && ratio_long >= 1.11 &&
                      ratio_long <= 1.75;
    return {pass, buf};
}

// ---- check 7: CPU interference hits only the host-mediated plane -----------

Outcome check_interference_retention(unsigned cores) {
    auto throughput = [&](SchedMode mode, std::uint32_t hogs, double& out) -> Outcome {
        BenchOptions opt;
        opt.app = fast_app(128, 1u << 14, 1u << 12);
        opt.app.scheduler.batch_capacity = 16;
        opt.app.latency.decode_base_ns = 2 * kMs;
        opt.app.scheduler.host_overhead_low_ns = 500 * kUs;
        opt.app.scheduler.host_overhead_high_ns = 1 * kMs;
        opt.app.bench.rates.clear();
        opt.app.bench.duration_s = 6.0;
        opt.app.bench.warmup_s = 1.0;
        opt.app.bench.input_dist = "fixed";
        opt.app.bench.input_fixed = 32;
        opt.app.bench.output_dist = "fixed";
        opt.app.bench.output_fixed = 16;
        opt.app.bench.seed = 4242;
        opt.mode = mode;
        opt.wall = true;
        opt.interference_threads = hogs;
        opt.rates = {20.0};  // far below saturation
        std::ostringstream progress;
        BenchReport rep = run_bench(opt, progress);
        if (rep.rows.empty()) return {false, "wall run completed no requests"};
        out = rep.rows.front().throughput_rps;
        return {true, ""};
    };

    const std::uint32_t hogs = 2 * cores;
    double dev_clean = 0, dev_hogs = 0, host_clean = 0, host_hogs = 0;
    Outcome o = throughput(SchedMode::device, 0, dev_clean);
    if (!o.pass) return o;
    o = throughput(SchedMode::device, hogs, dev_hogs);
    if (!o.pass) return o;
    o = throughput(SchedMode::host_mediated, 0, host_clean);
    if (!o.pass) return o;
    o = throughput(SchedMode::host_mediated, hogs, host_hogs);
    if (!o.pass) return o;
    ACCEPT_NEED(dev_clean > 0 && host_clean > 0);

    const double dev_keep = dev_hogs / dev_clean;
    const double host_keep = host_hogs / host_clean;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "retention under %u hog threads: device %.3f (need >= 0.95), "
                  "host %.3f (need <= 0.90)",
                  hogs, dev_keep, host_keep);
    return {dev_keep >= 0.95 && host_keep <= 0.90, buf};
}

// ---- check 8: tokenizer equals the brute-force oracle ----------------------

std::vector<std::string> acceptance_random_texts(std::uint64_t seed, std::size_t count,
                                                 std::size_t max_len) {
    static const std::string alphabet = "abcdef  \t\n019!,\xC3\xA9\xE2\x82\xAC";
    Rng rng(seed);
    std::vector<std::string> texts;
    texts.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::string s;
        const std::size_t len = rng.next() % (max_len + 1);
        for (std::size_t j = 0; j < len; ++j) s += alphabet[rng.next() % alphabet.size()];
        texts.push_back(std::move(s));
    }
    return texts;
}

Outcome build_synthetic_tokenizer(std::uint64_t seed, std::size_t merge_count,
                                  std::unique_ptr<Tokenizer>& out) {
    Rng rng(seed);
    std::vector<std::string> strings;
    for (char c : {'a', 'b', 'c', 'd', 'e', 'f', ' '}) strings.emplace_back(1, c);
    std::set<std::string> known(strings.begin(), strings.end());
    std::set<std::pair<std::string, std::string>> rules;
    std::vector<std::string> extra;
    std::vector<std::pair<std::string, std::string>> merges;
    int guard = 0;
    while (merges.size() < merge_count && guard < 200000) {
        ++guard;
        const std::string l = strings[rng.next() % strings.size()];
        const std::string r = strings[rng.next() % strings.size()];
        if (l.size() + r.size() > 10) continue;
        if (!rules.emplace(l, r).second) continue;
        std::string m = l + r;
        if (known.insert(m).second) {
            extra.push_back(m);
            strings.push_back(m);
        }
        merges.emplace_back(l, r);
    }
    ACCEPT_NEED(merges.size() == merge_count);

    std::string vocab;
    for (int b = 0; b < 256; ++b) {
        vocab += escape_token(std::string(1, static_cast<char>(b)));
        vocab += '\t';
        vocab += std::to_string(b);
        vocab += '\n';
    }
    TokenId next = 256;
    for (const auto& tok : extra) {
        vocab += escape_token(tok);
        vocab += '\t';
        vocab += std::to_string(next++);
        vocab += '\n';
    }
    std::string merge_text;
    for (const auto& [l, r] : merges) {
        merge_text += escape_token(l);
        merge_text += ' ';
        merge_text += escape_token(r);
        merge_text += '\n';
    }
    out = std::make_unique<Tokenizer>(Tokenizer::from_text(vocab, merge_text));
    return {true, ""};
}

std::vector<TokenId> brute_force_encode(const Tokenizer& tok, std::string_view text) {
    std::vector<Piece> pieces;
    pretokenize_scalar(text, pieces);
    std::vector<TokenId> out;
    const MergeTable& mt = tok.merge_table();
    for (const auto& pc : pieces) {
        std::string_view piece = text.substr(pc.offset, pc.length);
        std::vector<TokenId> syms;
        for (char c : piece)
            syms.push_back(static_cast<TokenId>(static_cast<std::uint8_t>(c)));
        for (;;) {
            const MergeEntry* best = nullptr;
            std::size_t best_i = 0;
            for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
                const MergeEntry* e = mt.find(syms[i], syms[i + 1]);
                if (e && (!best || e->rank < best->rank)) {
                    best = e;
                    best_i = i;
                }
            }
            if (!best) break;
            syms[best_i] = best->merged;
            syms.erase(syms.begin() + best_i + 1);
        }
        out.insert(out.end(), syms.begin(), syms.end());
    }
    return out;
}

Outcome check_tokenizer() {
    std::unique_ptr<Tokenizer> tok;
    Outcome built = build_synthetic_tokenizer(0xB0CA, 500, tok);
    if (!built.pass) return built;

    const auto texts = acceptance_random_texts(0x7e57, 10'000, 64);
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto got = tok->encode(texts[i]);
        const auto want = brute_force_encode(*tok, texts[i]);
        if (got != want) return {false, "encode diverges from the oracle on string " +
                                            std::to_string(i)};
        if (tok->decode(got) != texts[i])
            return {false, "decode(encode) is not identity on string " + std::to_string(i)};
    }

    // Byte-level round trip over arbitrary byte strings.
    const Tokenizer bytes = Tokenizer::byte_level();
    Rng rng(0xBEEF);
    for (int i = 0; i < 10'000; ++i) {
        std::string s;
        const std::size_t len = rng.next() % 65;
        for (std::size_t j = 0; j < len; ++j)
            s += static_cast<char>(rng.next() & 0xFF);
        const auto ids = bytes.encode(s);
        if (bytes.decode(ids) != s)
            return {false, "byte-level round trip failed on string " + std::to_string(i)};
    }

    // No heap traffic inside encode once scratch and output are warm.
    EncodeScratch scratch;
    std::vector<TokenId> out;
    scratch.reserve(80);
    out.reserve(128);
    for (const auto& t : texts) {  // warm-up pass sizes all the scratch
        out.clear();
        tok->encode(t, scratch, out);
    }
    const std::uint64_t before = g_alloc_count.load();
    for (const auto& t : texts) {
        out.clear();
        tok->encode(t, scratch, out);
    }
    const std::uint64_t allocs = g_alloc_count.load() - before;
    if (allocs != 0)
        return {false, std::to_string(allocs) + " allocations inside the warm encode loop"};

    return {true, "10000 strings match the oracle, byte round trips hold, 0 warm-path "
                  "allocations"};
}

// ---- check 9: metric aggregation and curve analysis ------------------------

Outcome check_metrics() {
    // compute_metrics against an independent oracle on random records.
    Rng rng(0x3e7);
    for (int round = 0; round < 20; ++round) {
        std::vector<RequestTiming> recs;
        const std::size_t n = 3 + rng.next() % 60;
        for (std::size_t i = 0; i < n; ++i) {
            RequestTiming r;
            r.arrival = static_cast<TimeNs>(rng.next() % (100 * kMs));
            const TimeNs first = r.arrival + 1 + static_cast<TimeNs>(rng.next() % (50 * kMs));
            const std::uint32_t toks = 1 + static_cast<std::uint32_t>(rng.next() % 20);
            TimeNs t = first;
            for (std::uint32_t k = 0; k < toks; ++k) {
                r.token_times.push_back(t);
                t += 1 + static_cast<TimeNs>(rng.next() % (5 * kMs));
            }
            r.first_token = r.token_times.front();
            r.last_token = r.token_times.back();
            r.output_tokens = toks;
            recs.push_back(std::move(r));
        }
        const TimeNs window = 1 * kSec + static_cast<TimeNs>(rng.next() % (10 * kSec));
        const BenchRow row = compute_metrics(recs, 3.0, "device", "none", window);

        // Oracle: direct recomputation with the naive formulas.
        std::vector<double> ttft, tpot, itl;
        std::uint64_t tokens = 0;
        for (const auto& r : recs) {
            ttft.push_back(static_cast<double>(r.first_token - r.arrival) / 1e6);
            tokens += r.output_tokens;
            if (r.output_tokens >= 2)
                tpot.push_back(static_cast<double>(r.last_token - r.first_token) /
                               (r.output_tokens - 1) / 1e6);
            for (std::size_t k = 1; k < r.token_times.size(); ++k)
                itl.push_back(
                    static_cast<double>(r.token_times[k] - r.token_times[k - 1]) / 1e6);
        }
        auto pct = [](std::vector<double> v, double p) {
            std::sort(v.begin(), v.end());
            const auto rank = static_cast<std::size_t>(std::ceil(p * v.size()));
            return v[std::max<std::size_t>(rank, 1) - 1];
        };
        auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * (1 + std::abs(b)); };
        ACCEPT_NEED(close(row.throughput_rps, recs.size() / (window / 1e9)));
        ACCEPT_NEED(close(row.throughput_tps, tokens / (window / 1e9)));
        ACCEPT_NEED(close(row.ttft.p50, pct(ttft, 0.5)));
        ACCEPT_NEED(close(row.ttft.p99, pct(ttft, 0.99)));
        if (!tpot.empty()) {
            ACCEPT_NEED(close(row.tpot.p50, pct(tpot, 0.5)));
            ACCEPT_NEED(close(row.tpot.p999, pct(tpot, 0.999)));
        }
        if (!itl.empty()) ACCEPT_NEED(close(row.itl_p99, pct(itl, 0.99)));
    }

    // Knee recovery within one swept level under noise.
    int knee_hits = 0;
    for (int seed = 0; seed < 100; ++seed) {
        Rng noise(7000 + seed);
        std::vector<std::pair<double, double>> curve;
        const double k = 5.0;
        for (int l = 1; l <= 8; ++l)
            curve.emplace_back(l, std::min<double>(l, k) + noise.normal(0.0, 0.05 * k));
        try {
            const SaturationFit fit = fit_saturation(curve);
            if (std::abs(fit.knee - k) <= 1.0) ++knee_hits;
        } catch (const Error&) {
            // degenerate draw: counts as a miss
        }
    }
    ACCEPT_NEED(knee_hits == 100);

    // Serviceable load against brute force on random curves.
    for (int i = 0; i < 100; ++i) {
        Rng r(8800 + i);
        std::vector<std::pair<double, double>> curve;
        const std::size_t n = 5 + r.next() % 6;
        double lambda = 0;
        for (std::size_t j = 0; j < n; ++j) {
            lambda += 0.5 + (r.next() % 100) / 50.0;
            curve.emplace_back(lambda, lambda * r.uniform_range(0.0, 1.05));
        }
        double brute = 0;
        for (const auto& [x, y] : curve)
            if (y >= 0.95 * x) brute = std::max(brute, x);
        if (serviceable_load(curve) != brute)
            return {false, "serviceable load mismatch on curve " + std::to_string(i)};
    }
    return {true, "metric oracle matches, 100/100 knees within one level, serviceable "
                  "load matches brute force"};
}

// ---- check 10: KV page conservation ----------------------------------------

Outcome check_kv_pool() {
    KvPagePool pool(16, 64);
    Rng rng(0x6b);
    std::map<std::uint64_t, std::vector<std::uint32_t>> live;
    std::uint64_t next_id = 1;
    std::uint64_t ops = 0;

    for (int step = 0; step < 10'000; ++step) {
        if (live.empty() || (rng.next() & 1) == 0) {
            const auto tokens = 1 + rng.next() % 120;  // 1..8 pages at size 16
            auto got = pool.alloc(next_id, tokens);
            if (got) {
                ACCEPT_NEED(got->size() == KvPagePool::pages_for(tokens, pool.page_size()));
                live.emplace(next_id, *got);
                ++next_id;
            }
        } else {
            auto it = live.begin();
            std::advance(it, rng.next() % live.size());
            pool.free(it->first);
            live.erase(it);
        }
        ++ops;

        // Conservation and aliasing, every step.
        std::uint32_t held = 0;
        std::set<std::uint32_t> seen;
        for (const auto& [id, pages] : live) {
            held += static_cast<std::uint32_t>(pages.size());
            for (std::uint32_t p : pages) {
                ACCEPT_NEED(p < pool.total_pages());
                if (!seen.insert(p).second)
                    return {false, "page aliased across live allocations at op " +
                                       std::to_string(ops)};
            }
        }
        ACCEPT_NEED(pool.allocated_pages() == held);
        ACCEPT_NEED(pool.free_pages() == pool.total_pages() - held);
    }
    for (const auto& [id, pages] : live) pool.free(id);
    ACCEPT_NEED(pool.free_pages() == pool.total_pages());
    return {true, "10000 alloc/free ops conserve pages with no aliasing"};
}

// ---- check 11: wire formats are bit-exact ----------------------------------

Outcome check_wire_formats() {
    static_assert(kMetaBytesPerSlot == 16);
    RingBuffer ring(4096, 1u << 13, 1u << 13);
    ACCEPT_NEED(ring.metadata_bytes() == 65536);
    std::vector<std::uint8_t> snap;
    ring.snapshot_metadata(snap);
    ACCEPT_NEED(snap.size() == 65536);

    ACCEPT_NEED(sse_data_event("x") == "data: x\n\n");
    ACCEPT_NEED(sse_done_event() == "data: [DONE]\n\n");
    ACCEPT_NEED(csv_header() ==
                "rate,mode,interference,throughput_rps,throughput_tps,"
                "ttft_p50,ttft_p95,ttft_p99,ttft_p999,ttft_mean,"
                "tpot_p50,tpot_p95,tpot_p99,tpot_p999,tpot_mean,"
                "itl_p50,itl_p99,itl_p999");
    return {true, "16-byte slot metadata (64 KB @ 4096 slots), SSE framing, CSV header"};
}

struct NamedCheck {
    const char* name;
    Outcome (*fn)();
};

}  // namespace

int main() {
    bool all_pass = true;
    const NamedCheck checks[] = {
        {"01 slot lifecycle survives randomized concurrent actors", check_state_machine},
        {"02 every request's stream is delivered exactly once", check_exactly_once},
        {"03 launch window resets by tail launch and never overruns", check_launch_window},
        {"04 admission pauses decode iff queue, capacity, and window allow",
         check_admission},
        {"05 scheduling mode never changes the tokens", check_mode_equivalence},
        {"06 host-mediated stepping inflates makespan into the expected band",
         check_makespan_trend},
    };
    for (const auto& c : checks) {
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("unhandled exception: ") + e.what()};
        }
        std::printf("%s: %s (%s)\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
        std::fflush(stdout);
        all_pass = all_pass && o.pass;
    }

    {
        const unsigned cores = std::thread::hardware_concurrency();
        const char* name = "07 CPU interference degrades only the host-mediated plane";
        if (cores < 8) {
            std::printf("SKIP: %s (wall-clock retention needs >= 8 cores, this machine has "
                        "%u)\n",
                        name, cores);
        } else {
            Outcome o;
            try {
                o = check_interference_retention(cores);
            } catch (const std::exception& e) {
                o = {false, std::string("unhandled exception: ") + e.what()};
            }
            std::printf("%s: %s (%s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
            all_pass = all_pass && o.pass;
        }
        std::fflush(stdout);
    }

    const NamedCheck tail_checks[] = {
        {"08 encoder matches the brute-force merge oracle with a cold-free hot path",
         check_tokenizer},
        {"09 metric aggregation, knee fit, and serviceable load match oracles",
         check_metrics},
        {"10 KV page pool conserves pages under random churn", check_kv_pool},
        {"11 slot metadata, SSE framing, and CSV header are bit-exact", check_wire_formats},
    };
    for (const auto& c : tail_checks) {
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("unhandled exception: ") + e.what()};
        }
        std::printf("%s: %s (%s)\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
        std::fflush(stdout);
        all_pass = all_pass && o.pass;
    }

    return all_pass ? 0 : 1;
}
