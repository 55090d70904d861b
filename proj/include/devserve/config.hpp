#pragma once

#include <string>
#include <vector>

#include "devserve/engine.hpp"
#include "devserve/frontend.hpp"
#include "devserve/scheduler.hpp"
#include "devserve/transport.hpp"

namespace devserve {

// Workload and sweep settings for the benchmark harness.
struct BenchSection {
    std::vector<double> rates;        // req/s levels; empty -> default_rate_levels()
    double load_scale = 1.0;          // multiplies every level
    double duration_s = 10.0;         // measurement window per level
    double warmup_s = 1.0;
    std::uint32_t request_cap = 0;    // 0: run by duration
    std::string arrival = "poisson";  // "poisson" | "fixed"
    std::string input_dist = "fixed";  // "fixed" | "uniform" | "trace"
    std::uint32_t input_fixed = 1024;
    std::uint32_t input_lo = 518;
    std::uint32_t input_hi = 1520;
    std::string output_dist = "fixed";
    std::uint32_t output_fixed = 512;
    std::uint32_t output_lo = 14;
    std::uint32_t output_hi = 912;
    std::string trace_path;
    std::uint64_t seed = 42;
    std::uint32_t repeats = 1;  // runs averaged per load level
};

// Everything a process needs to assemble the serving stack.
struct AppConfig {
    std::uint32_t ring_capacity = 4096;
    std::uint32_t input_arena_tokens = 1u << 23;
    std::uint32_t output_arena_tokens = 1u << 23;
    TransportConfig transport;
    SchedulerConfig scheduler;
    std::uint32_t kv_page_size = 16;
    std::uint32_t kv_total_pages = 4096;
    PseudoModelConfig model;
    GraphCacheConfig graphs;
    std::string latency_preset_name = "llama8b";
    LatencyProfile latency;  // preset resolved, then field overrides applied
    FrontendConfig frontend;
    std::string vocab_path;   // empty: byte-level tokenizer
    std::string merges_path;
    std::string listen_host = "127.0.0.1";
    int listen_port = 8080;
    BenchSection bench;
};

// The 13-level sweep from 1 to 32 req/s (geometric spacing).
std::vector<double> default_rate_levels();

AppConfig default_config();
AppConfig parse_app_config(const std::string& json_text);
AppConfig load_app_config(const std::string& path);

}  // namespace devserve
