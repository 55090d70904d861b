#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "devserve/config.hpp"
#include "devserve/metrics.hpp"

namespace devserve {

struct BenchOptions {
    AppConfig app;
    SchedMode mode = SchedMode::device;
    bool wall = false;  // real threads + wall clock instead of the event loop
    std::uint32_t interference_threads = 0;  // wall runs: CPU antagonist size
    double interference_multiplier = 1.0;    // virtual runs: host-charge scale
    std::vector<double> rates;               // override; empty uses the config sweep
    std::string out_csv;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    std::vector<std::pair<double, double>> curve;  // offered vs achieved rps
    std::optional<SaturationFit> fit;              // absent when the curve never bends
    double serviceable = 0;
    std::optional<RangeSummary> summary;
};

// Sweeps the load levels for one (mode, interference) cell and aggregates.
BenchReport run_bench(const BenchOptions& opt, std::ostream& progress);

// CLI entry: runs the sweep, writes the CSV, prints the analysis; nonzero on
// self-check failure.
int bench_main(const BenchOptions& opt, std::ostream& out);

}  // namespace devserve
