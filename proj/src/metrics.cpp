#include "devserve/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace devserve {

double nearest_rank(std::vector<double> values, double p) {
    if (values.empty()) raise(Errc::empty_records, "percentile of empty sample");
    if (!(p > 0.0) || p > 1.0) raise(Errc::invalid_argument, "percentile p must be in (0, 1]");
    std::sort(values.begin(), values.end());
    auto rank = static_cast<std::size_t>(
        std::ceil(p * static_cast<double>(values.size())));
    if (rank == 0) rank = 1;
    if (rank > values.size()) rank = values.size();
    return values[rank - 1];
}

double geo_mean(std::span<const double> values) {
    if (values.empty()) raise(Errc::empty_records, "geometric mean of empty sample");
    double log_sum = 0.0;
    for (double v : values) {
        if (!(v > 0.0)) raise(Errc::invalid_argument, "geometric mean needs positive values");
        log_sum += std::log(v);
    }
    return std::exp(log_sum / static_cast<double>(values.size()));
}

namespace {

constexpr double kNsPerMs = 1e6;

double arith_mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

LatencySummary summarize(const std::vector<double>& ms) {
    LatencySummary s;
    if (ms.empty()) return s;
    s.p50 = nearest_rank(ms, 0.50);
    s.p95 = nearest_rank(ms, 0.95);
    s.p99 = nearest_rank(ms, 0.99);
    s.p999 = nearest_rank(ms, 0.999);
    s.mean = arith_mean(ms);
    return s;
}

}  // namespace

BenchRow compute_metrics(std::span<const RequestTiming> records, double rate,
                         const std::string& mode, const std::string& interference,
                         TimeNs window_ns) {
    if (records.empty()) raise(Errc::empty_records, "no completed requests to aggregate");
    if (window_ns <= 0) raise(Errc::invalid_argument, "observation window must be positive");

    std::vector<double> ttft_ms, tpot_ms, itl_ms;
    std::uint64_t tokens = 0;
    for (const auto& r : records) {
        ttft_ms.push_back(static_cast<double>(r.first_token - r.arrival) / kNsPerMs);
        tokens += r.output_tokens;
        if (r.output_tokens >= 2) {
            tpot_ms.push_back(static_cast<double>(r.last_token - r.first_token) /
                              static_cast<double>(r.output_tokens - 1) / kNsPerMs);
        }
        for (std::size_t i = 1; i < r.token_times.size(); ++i)
            itl_ms.push_back(static_cast<double>(r.token_times[i] - r.token_times[i - 1]) /
                             kNsPerMs);
    }

    const double window_s = static_cast<double>(window_ns) / 1e9;
    BenchRow row;
    row.rate = rate;
    row.mode = mode;
    row.interference = interference;
    row.throughput_rps = static_cast<double>(records.size()) / window_s;
    row.throughput_tps = static_cast<double>(tokens) / window_s;
    row.ttft = summarize(ttft_ms);
    row.tpot = summarize(tpot_ms);
    if (!itl_ms.empty()) {
        row.itl_p50 = nearest_rank(itl_ms, 0.50);
        row.itl_p99 = nearest_rank(itl_ms, 0.99);
        row.itl_p999 = nearest_rank(itl_ms, 0.999);
    }
    return row;
}

void validate_row(const BenchRow& row) {
    auto ordered = [](const LatencySummary& s) {
        return s.p50 <= s.p95 && s.p95 <= s.p99 && s.p99 <= s.p999 && s.mean >= 0;
    };
    if (!ordered(row.ttft) || !ordered(row.tpot))
        raise(Errc::shape_violation, "latency percentiles out of order");
    if (!(row.itl_p50 <= row.itl_p99 && row.itl_p99 <= row.itl_p999))
        raise(Errc::shape_violation, "inter-token percentiles out of order");
    if (row.throughput_rps < 0 || row.throughput_tps < 0)
        raise(Errc::shape_violation, "negative throughput");
}

std::vector<std::pair<double, double>> average_runs(
    std::span<const std::pair<double, double>> points) {
    std::vector<std::pair<double, double>> sorted(points.begin(), points.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<double, double>> out;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        double sum = 0;
        while (j < sorted.size() && sorted[j].first == sorted[i].first) {
            sum += sorted[j].second;
            ++j;
        }
        out.emplace_back(sorted[i].first, sum / static_cast<double>(j - i));
        i = j;
    }
    return out;
}

SaturationFit fit_saturation(std::span<const std::pair<double, double>> curve) {
    if (curve.size() < 4)
        raise(Errc::invalid_argument, "saturation fit needs at least 4 points");
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (!(curve[i].first > 0))
            raise(Errc::invalid_argument, "saturation fit needs positive rates");
        if (i > 0 && !(curve[i].first > curve[i - 1].first))
            raise(Errc::invalid_argument, "saturation fit needs strictly ascending rates");
    }

    const std::size_t n = curve.size();

    // A curve that is already one line through the origin has no knee.
    {
        double sxy = 0, sxx = 0, syy = 0;
        for (const auto& [x, y] : curve) {
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        const double m = sxy / sxx;
        double sse = 0;
        for (const auto& [x, y] : curve) {
            const double e = y - m * x;
            sse += e * e;
        }
        if (sse <= 1e-12 * std::max(1.0, syy))
            raise(Errc::degenerate_curve, "throughput curve never saturates");
    }

    SaturationFit best;
    bool have = false;
    // b = index of the knee point.  The knee anchors BOTH segments: it is the
    // last point fitted by the line and the first averaged into the plateau.
    // Sharing it keeps a single noisy point near the transition from dragging
    // the breakpoint a whole level sideways, which a disjoint partition
    // allows (the plateau can quietly absorb an off-line point).
    for (std::size_t b = 1; b + 1 < n; ++b) {
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i <= b; ++i) {
            sxy += curve[i].first * curve[i].second;
            sxx += curve[i].first * curve[i].first;
        }
        const double m = sxy / sxx;
        double c = 0;
        for (std::size_t i = b; i < n; ++i) c += curve[i].second;
        c /= static_cast<double>(n - b);

        double sse = 0;
        for (std::size_t i = 0; i <= b; ++i) {
            const double e = curve[i].second - m * curve[i].first;
            sse += e * e;
        }
        for (std::size_t i = b; i < n; ++i) {
            const double e = curve[i].second - c;
            sse += e * e;
        }
        // <= so that equal error resolves to the larger knee.
        if (!have || sse <= best.sse) {
            best.knee = curve[b].first;
            best.knee_index = b;
            best.slope = m;
            best.plateau = c;
            best.sse = sse;
            have = true;
        }
    }
    return best;
}

double serviceable_load(std::span<const std::pair<double, double>> curve) {
    double best = 0;
    for (const auto& [offered, achieved] : curve)
        if (achieved >= 0.95 * offered && offered > best) best = offered;
    return best;
}

RangeSummary summarize_range(std::span<const BenchRow> rows, double knee) {
    std::vector<double> ttft, tpot;
    RangeSummary out;
    double best_gap = -1;
    for (const auto& row : rows) {
        if (row.rate <= knee + 1e-9) {
            ttft.push_back(row.ttft.p99);
            tpot.push_back(row.tpot.p99);
            ++out.rows_used;
        }
        const double gap = std::fabs(row.rate - knee);
        if (best_gap < 0 || gap < best_gap) {
            best_gap = gap;
            out.throughput_at_knee = row.throughput_rps;
        }
    }
    if (ttft.empty()) raise(Errc::empty_records, "no rows at or below the knee");
    out.ttft_p99_geo = geo_mean(ttft);
    out.tpot_p99_geo = geo_mean(tpot);
    return out;
}

std::string csv_header() {
    return "rate,mode,interference,throughput_rps,throughput_tps,"
           "ttft_p50,ttft_p95,ttft_p99,ttft_p999,ttft_mean,"
           "tpot_p50,tpot_p95,tpot_p99,tpot_p999,tpot_mean,"
           "itl_p50,itl_p99,itl_p999";
}

std::string csv_row(const BenchRow& row) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%.6g,%s,%s,%.6f,%.6f,"
                  "%.6f,%.6f,%.6f,%.6f,%.6f,"
                  "%.6f,%.6f,%.6f,%.6f,%.6f,"
                  "%.6f,%.6f,%.6f",
                  row.rate, row.mode.c_str(), row.interference.c_str(),
                  row.throughput_rps, row.throughput_tps, row.ttft.p50, row.ttft.p95,
                  row.ttft.p99, row.ttft.p999, row.ttft.mean, row.tpot.p50, row.tpot.p95,
                  row.tpot.p99, row.tpot.p999, row.tpot.mean, row.itl_p50, row.itl_p99,
                  row.itl_p999);
    return buf;
}

void write_csv(const std::string& path, std::span<const BenchRow> rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) raise(Errc::invalid_argument, "cannot open csv output: " + path);
    out << csv_header() << "\n";
    for (const auto& row : rows) out << csv_row(row) << "\n";
}

}  // namespace devserve
