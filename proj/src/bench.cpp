#include "devserve/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "devserve/sim_runner.hpp"
#include "devserve/wall_runner.hpp"

namespace devserve {

namespace {

WorkloadSpec workload_for(const BenchSection& b, double rate) {
    WorkloadSpec w;
    w.arrival = b.arrival == "fixed" ? ArrivalKind::fixed : ArrivalKind::poisson;
    w.rate = rate;
    w.count = b.request_cap;
    w.duration_s = b.duration_s;

    auto dist = [&](const std::string& kind, std::uint32_t fixed, std::uint32_t lo,
                    std::uint32_t hi) {
        if (kind == "uniform") return LengthDist::uniform(lo, hi);
        if (kind == "trace") return LengthDist::trace();
        return LengthDist::fixed_len(fixed);
    };
    w.input = dist(b.input_dist, b.input_fixed, b.input_lo, b.input_hi);
    w.output = dist(b.output_dist, b.output_fixed, b.output_lo, b.output_hi);
    if ((w.input.kind == LengthDist::Kind::trace || w.output.kind == LengthDist::Kind::trace) &&
        !b.trace_path.empty()) {
        w.trace = load_trace_csv(b.trace_path);
    }
    return w;
}

// Requests whose whole life fits the measurement window, shifted to a common
// origin at the earliest arrival.
std::vector<RequestTiming> window_filter(std::vector<RequestTiming> all, TimeNs warmup_ns,
                                         TimeNs horizon_ns) {
    if (all.empty()) return all;
    TimeNs origin = all.front().arrival;
    for (const auto& t : all) origin = std::min(origin, t.arrival);
    std::vector<RequestTiming> kept;
    for (auto& t : all) {
        t.arrival -= origin;
        t.first_token -= origin;
        t.last_token -= origin;
        for (auto& tt : t.token_times) tt -= origin;
        if (t.arrival >= warmup_ns && t.last_token <= horizon_ns) kept.push_back(std::move(t));
    }
    return kept;
}

std::string interference_label(const BenchOptions& opt) {
    if (opt.wall) {
        if (opt.interference_threads == 0) return "none";
        return "hogs" + std::to_string(opt.interference_threads);
    }
    if (opt.interference_multiplier == 1.0) return "none";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "x%.2f", opt.interference_multiplier);
    return buf;
}

}  // namespace

BenchReport run_bench(const BenchOptions& opt, std::ostream& progress) {
    AppConfig app = opt.app;
    app.scheduler.mode = opt.mode;
    if (!opt.wall) app.scheduler.host_interference_multiplier = opt.interference_multiplier;

    const BenchSection& b = app.bench;
    std::vector<double> levels = !opt.rates.empty()
                                     ? opt.rates
                                     : (!b.rates.empty() ? b.rates : default_rate_levels());
    const std::string mode_name = opt.mode == SchedMode::device ? "device" : "host";
    const std::string interference = interference_label(opt);
    const TimeNs warmup_ns = static_cast<TimeNs>(b.warmup_s * 1e9);
    const TimeNs horizon_ns = static_cast<TimeNs>(b.duration_s * 1e9);
    const TimeNs window_ns = horizon_ns - warmup_ns;
    if (window_ns <= 0) raise(Errc::invalid_argument, "warmup must leave a measurement window");

    BenchReport report;
    for (double level : levels) {
        const double rate = level * b.load_scale;
        std::vector<RequestTiming> pooled;
        std::uint64_t offered = 0, rejected = 0;
        for (std::uint32_t rep = 0; rep < std::max<std::uint32_t>(b.repeats, 1); ++rep) {
            const std::uint64_t seed = b.seed + 1000003ull * rep;
            std::vector<RequestTiming> run_timings;
            if (opt.wall) {
                WallOptions wo;
                wo.app = app;
                wo.workload = workload_for(b, rate);
                wo.seed = seed;
                wo.hog_threads = opt.interference_threads;
                WallResult res = run_wall(wo);
                run_timings = res.timings();
                offered += res.offered;
                rejected += res.rejected;
            } else {
                SimOptions so;
                so.app = app;
                so.workload = workload_for(b, rate);
                so.seed = seed;
                // Generous runaway guard: drain can run past the horizon.
                so.max_virtual_ns = horizon_ns * 50 + 300 * kSec;
                SimResult res = run_sim(so);
                run_timings = res.timings();
                offered += res.offered;
                rejected += res.rejected;
                if (res.hit_time_limit)
                    raise(Errc::poll_timeout, "virtual run exceeded its time budget");
            }
            auto kept = window_filter(std::move(run_timings), warmup_ns, horizon_ns);
            pooled.insert(pooled.end(), std::make_move_iterator(kept.begin()),
                          std::make_move_iterator(kept.end()));
        }
        const std::uint32_t reps = std::max<std::uint32_t>(b.repeats, 1);
        if (pooled.empty()) {
            progress << "rate " << rate << ": no requests completed inside the window\n";
            report.curve.emplace_back(rate, 0.0);
            continue;
        }
        BenchRow row = compute_metrics(pooled, rate, mode_name, interference,
                                       window_ns * static_cast<TimeNs>(reps));
        validate_row(row);
        report.rows.push_back(row);
        report.curve.emplace_back(rate, row.throughput_rps);
        progress << "rate " << rate << ": completed=" << pooled.size() << "/" << offered
                 << " rejected=" << rejected << " achieved=" << row.throughput_rps
                 << " rps, ttft_p99=" << row.ttft.p99 << " ms, tpot_p99=" << row.tpot.p99
                 << " ms\n";
    }

    auto averaged = average_runs(report.curve);
    report.serviceable = serviceable_load(averaged);
    if (averaged.size() >= 4) {
        try {
            report.fit = fit_saturation(averaged);
        } catch (const Error& e) {
            if (e.code() != Errc::degenerate_curve) throw;
        }
    }
    if (report.fit && !report.rows.empty())
        report.summary = summarize_range(report.rows, report.fit->knee);
    return report;
}

int bench_main(const BenchOptions& opt, std::ostream& out) {
    try {
        BenchReport report = run_bench(opt, out);
        if (!opt.out_csv.empty()) {
            write_csv(opt.out_csv, report.rows);
            out << "wrote " << report.rows.size() << " rows to " << opt.out_csv << "\n";
        } else {
            out << csv_header() << "\n";
            for (const auto& row : report.rows) out << csv_row(row) << "\n";
        }
        if (report.fit) {
            out << "saturation knee at " << report.fit->knee << " req/s (slope "
                << report.fit->slope << ", plateau " << report.fit->plateau << " rps)\n";
        } else {
            out << "saturation knee: not reached over this sweep\n";
        }
        out << "serviceable load: " << report.serviceable << " req/s\n";
        if (report.summary) {
            out << "pre-knee geo means: ttft_p99=" << report.summary->ttft_p99_geo
                << " ms, tpot_p99=" << report.summary->tpot_p99_geo << " ms over "
                << report.summary->rows_used << " levels\n";
        }
        // Self-checks: any cross-row shape violation is a harness bug.
        for (std::size_t i = 1; i < report.curve.size(); ++i) {
            if (report.curve[i].first <= report.curve[i - 1].first)
                raise(Errc::shape_violation, "sweep levels must ascend");
        }
        return 0;
    } catch (const Error& e) {
        out << "bench failed: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace devserve
