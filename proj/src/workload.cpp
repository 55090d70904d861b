#include "devserve/workload.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "devserve/rng.hpp"

namespace devserve {

LengthDist chat_mix_input() { return LengthDist::uniform(518, 1520); }
LengthDist chat_mix_output() { return LengthDist::uniform(14, 912); }

namespace {

std::uint32_t sample_length(const LengthDist& d, Rng& rng, std::uint32_t trace_value) {
    switch (d.kind) {
        case LengthDist::Kind::fixed:
            return d.fixed;
        case LengthDist::Kind::uniform:
            return static_cast<std::uint32_t>(rng.uniform_int(d.lo, d.hi));
        case LengthDist::Kind::trace:
            return trace_value;
    }
    return d.fixed;
}

void check_dist(const LengthDist& d, const char* name, bool have_trace) {
    if (d.kind == LengthDist::Kind::fixed && d.fixed == 0)
        raise(Errc::invalid_argument, std::string(name) + " length must be >= 1");
    if (d.kind == LengthDist::Kind::uniform && (d.lo == 0 || d.hi < d.lo))
        raise(Errc::invalid_argument, std::string(name) + " uniform range invalid");
    if (d.kind == LengthDist::Kind::trace && !have_trace)
        raise(Errc::invalid_argument, std::string(name) + " distribution needs trace rows");
}

}  // namespace

ArrivalPlan generate(const WorkloadSpec& spec, std::uint64_t seed) {
    if (!(spec.rate > 0.0))
        raise(Errc::invalid_argument, "arrival rate must be positive");
    if (spec.count == 0 && !(spec.duration_s > 0.0))
        raise(Errc::invalid_argument, "workload needs a request count or a duration");
    const bool have_trace = !spec.trace.empty();
    check_dist(spec.input, "input", have_trace);
    check_dist(spec.output, "output", have_trace);

    Rng rng(seed);
    ArrivalPlan plan;
    const TimeNs horizon =
        spec.count == 0 ? static_cast<TimeNs>(spec.duration_s * 1e9) : 0;
    double t_s = 0.0;
    for (std::uint32_t i = 0;; ++i) {
        if (spec.count != 0 && i >= spec.count) break;
        if (spec.arrival == ArrivalKind::poisson) {
            t_s += rng.exponential(spec.rate);
        } else {
            t_s = static_cast<double>(i + 1) / spec.rate;
        }
        const auto at = static_cast<TimeNs>(t_s * 1e9);
        if (spec.count == 0 && at > horizon) break;

        std::uint32_t trace_in = 0, trace_out = 0;
        if (have_trace) {
            const auto& row = spec.trace[i % spec.trace.size()];
            trace_in = row.first;
            trace_out = row.second;
        }
        ArrivalItem item;
        item.at = at;
        item.input_len = sample_length(spec.input, rng, trace_in);
        item.max_output = sample_length(spec.output, rng, trace_out);
        item.seed = splitmix64(seed ^ (0x9E3779B97F4A7C15ULL * (i + 1)));
        if (item.input_len == 0 || item.max_output == 0)
            raise(Errc::invalid_argument, "trace rows must have lengths >= 1");
        plan.items.push_back(item);
    }
    return plan;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> load_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::parse_error, "cannot open trace file: " + path);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line_no == 1 && line.find_first_not_of("0123456789,") != std::string::npos)
            continue;  // header
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            raise(Errc::parse_error, "trace line " + std::to_string(line_no) + ": expected two fields");
        char* end = nullptr;
        const unsigned long in_len = std::strtoul(line.c_str(), &end, 10);
        if (end != line.c_str() + comma)
            raise(Errc::parse_error, "trace line " + std::to_string(line_no) + ": bad input length");
        const char* p2 = line.c_str() + comma + 1;
        const unsigned long out_len = std::strtoul(p2, &end, 10);
        if (*end != '\0' || end == p2)
            raise(Errc::parse_error, "trace line " + std::to_string(line_no) + ": bad output length");
        if (in_len == 0 || out_len == 0)
            raise(Errc::parse_error, "trace line " + std::to_string(line_no) + ": lengths must be >= 1");
        rows.emplace_back(static_cast<std::uint32_t>(in_len), static_cast<std::uint32_t>(out_len));
    }
    if (rows.empty()) raise(Errc::parse_error, "trace file has no rows: " + path);
    return rows;
}

}  // namespace devserve
