#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "devserve/clock.hpp"
#include "devserve/errors.hpp"

namespace devserve {

enum class ArrivalKind { poisson, fixed };

// Request length source: a constant, an inclusive uniform range, or rows of a
// loaded (input, output) trace replayed in order.
struct LengthDist {
    enum class Kind { fixed, uniform, trace } kind = Kind::fixed;
    std::uint32_t fixed = 1;
    std::uint32_t lo = 1;
    std::uint32_t hi = 1;

    static LengthDist fixed_len(std::uint32_t v) { return {Kind::fixed, v, v, v}; }
    static LengthDist uniform(std::uint32_t lo, std::uint32_t hi) {
        return {Kind::uniform, 0, lo, hi};
    }
    static LengthDist trace() { return {Kind::trace, 0, 0, 0}; }
};

// Uniform ranges centered on mean input/output lengths of 1019 and 463
// tokens, the chat-style mix the default benchmarks use.
LengthDist chat_mix_input();
LengthDist chat_mix_output();

struct WorkloadSpec {
    ArrivalKind arrival = ArrivalKind::poisson;
    double rate = 4.0;  // req/s
    LengthDist input = LengthDist::fixed_len(1024);
    LengthDist output = LengthDist::fixed_len(512);
    std::uint32_t count = 0;  // explicit request count; 0 derives from duration
    double duration_s = 0.0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> trace;  // (input, output) rows
};

struct ArrivalItem {
    TimeNs at = 0;
    std::uint32_t input_len = 0;
    std::uint32_t max_output = 0;
    std::uint64_t seed = 0;  // per-request sampling seed
};

struct ArrivalPlan {
    std::vector<ArrivalItem> items;
};

// Deterministic for a given (spec, seed).  Poisson arrivals use exponential
// inter-arrival gaps with mean 1/rate.
ArrivalPlan generate(const WorkloadSpec& spec, std::uint64_t seed);

// CSV rows of "input_len,output_len"; a leading header line is allowed.
std::vector<std::pair<std::uint32_t, std::uint32_t>> load_trace_csv(const std::string& path);

}  // namespace devserve
