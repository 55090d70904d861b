#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "devserve/clock.hpp"
#include "devserve/errors.hpp"

namespace devserve {

// Per-request timestamps captured by the frontend.  All times share one
// clock origin; token_times holds the delivery time of every output token.
struct RequestTiming {
    TimeNs arrival = 0;
    TimeNs first_token = 0;
    TimeNs last_token = 0;
    std::uint32_t output_tokens = 0;
    std::vector<TimeNs> token_times;
};

struct LatencySummary {
    double p50 = 0, p95 = 0, p99 = 0, p999 = 0, mean = 0;  // milliseconds
};

struct BenchRow {
    double rate = 0;            // offered req/s
    std::string mode;           // "device" | "host"
    std::string interference;   // "none" | "hogs8" | "x2.5" ...
    double throughput_rps = 0;  // achieved completions/s over the window
    double throughput_tps = 0;  // achieved output tokens/s over the window
    LatencySummary ttft;
    LatencySummary tpot;
    double itl_p50 = 0, itl_p99 = 0, itl_p999 = 0;  // milliseconds
};

// Nearest-rank percentile: rank = ceil(p * N), 1-indexed, over the sorted
// sample.  p in (0, 1].  Empty input raises empty_records.
double nearest_rank(std::vector<double> values, double p);

double geo_mean(std::span<const double> values);

// Aggregates completed-request timings over an observation window of
// window_ns.  TTFT = first_token - arrival.  TPOT = (last - first)/(n - 1)
// for requests with n >= 2 output tokens.  ITL pools the successive
// token-time gaps of every request.  Raises empty_records on empty input.
BenchRow compute_metrics(std::span<const RequestTiming> records, double rate,
                         const std::string& mode, const std::string& interference,
                         TimeNs window_ns);

// Percentile ordering and mean sanity; raises shape_violation on breakage.
void validate_row(const BenchRow& row);

// Two-segment fit of a throughput curve y(lambda): a line through the origin
// meeting a constant plateau at one of the swept points, chosen to minimize
// total squared error.  The knee point anchors both segments (last on the
// line, first in the plateau average); ties resolve to the LARGEST knee.
// Requires >= 4 points sorted by ascending lambda.  A curve that is
// collinear through the origin has no knee and raises degenerate_curve.
struct SaturationFit {
    double knee = 0;
    std::size_t knee_index = 0;  // index into the curve of the knee point
    double slope = 0;            // fitted linear-segment slope
    double plateau = 0;          // fitted plateau level
    double sse = 0;
};
SaturationFit fit_saturation(std::span<const std::pair<double, double>> curve);

// Collapses repeated lambda values by averaging their y values; output is
// sorted by ascending lambda.
std::vector<std::pair<double, double>> average_runs(
    std::span<const std::pair<double, double>> points);

// Largest offered lambda whose achieved throughput is >= 0.95 * lambda;
// 0 when no point qualifies.
double serviceable_load(std::span<const std::pair<double, double>> curve);

// Geometric means of tail latencies over the rows at or below the knee rate,
// plus the achieved throughput at the knee itself.
struct RangeSummary {
    double ttft_p99_geo = 0;
    double tpot_p99_geo = 0;
    double throughput_at_knee = 0;
    std::size_t rows_used = 0;
};
RangeSummary summarize_range(std::span<const BenchRow> rows, double knee);

std::string csv_header();
std::string csv_row(const BenchRow& row);
void write_csv(const std::string& path, std::span<const BenchRow> rows);

}  // namespace devserve
