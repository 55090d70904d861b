#include "devserve/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace devserve {

using nlohmann::json;

std::vector<double> default_rate_levels() {
    std::vector<double> levels;
    levels.reserve(13);
    for (int i = 0; i < 13; ++i) {
        double v = std::pow(32.0, static_cast<double>(i) / 12.0);
        levels.push_back(std::round(v * 100.0) / 100.0);
    }
    return levels;
}

AppConfig default_config() {
    AppConfig cfg;
    cfg.latency = latency_preset(cfg.latency_preset_name);
    cfg.bench.rates = default_rate_levels();
    return cfg;
}

namespace {

TimeNs us_field(const json& j, const char* key, TimeNs default_ns) {
    if (!j.contains(key)) return default_ns;
    return static_cast<TimeNs>(j.at(key).get<double>() * 1000.0);
}

void parse_latency(const json& j, LatencyProfile& lat) {
    lat.prefill_base_ns = j.value("prefill_base_ns", lat.prefill_base_ns);
    lat.prefill_per_prompt_token_ns =
        j.value("prefill_per_prompt_token_ns", lat.prefill_per_prompt_token_ns);
    lat.decode_base_ns = j.value("decode_base_ns", lat.decode_base_ns);
    lat.decode_per_seq_ns = j.value("decode_per_seq_ns", lat.decode_per_seq_ns);
}

AppConfig from_json(const json& j) {
    AppConfig cfg = default_config();

    if (j.contains("ring")) {
        const json& r = j.at("ring");
        cfg.ring_capacity = r.value("capacity", cfg.ring_capacity);
        cfg.input_arena_tokens = r.value("input_arena_tokens", cfg.input_arena_tokens);
        cfg.output_arena_tokens = r.value("output_arena_tokens", cfg.output_arena_tokens);
    }
    if (j.contains("transport")) {
        const json& t = j.at("transport");
        cfg.transport.c_fixed_ns = t.value("c_fixed_ns", cfg.transport.c_fixed_ns);
        cfg.transport.c_byte_ns = t.value("c_byte_ns", cfg.transport.c_byte_ns);
        cfg.transport.cq_depth = t.value("cq_depth", cfg.transport.cq_depth);
        cfg.transport.task_pool = t.value("task_pool", cfg.transport.task_pool);
        cfg.transport.queue_pairs = t.value("queue_pairs", cfg.transport.queue_pairs);
    }
    if (j.contains("scheduler")) {
        const json& s = j.at("scheduler");
        std::string mode = s.value("mode", std::string("device"));
        if (mode == "device") {
            cfg.scheduler.mode = SchedMode::device;
        } else if (mode == "host" || mode == "host_mediated") {
            cfg.scheduler.mode = SchedMode::host_mediated;
        } else {
            raise(Errc::parse_error, "scheduler.mode must be 'device' or 'host'");
        }
        cfg.scheduler.batch_capacity = s.value("batch_capacity", cfg.scheduler.batch_capacity);
        cfg.scheduler.window_limit = s.value("window_limit", cfg.scheduler.window_limit);
        cfg.scheduler.lanes = s.value("lanes", cfg.scheduler.lanes);
        cfg.scheduler.scan_workers = s.value("scan_workers", cfg.scheduler.scan_workers);
        if (s.contains("costs")) {
            const json& c = s.at("costs");
            auto& costs = cfg.scheduler.costs;
            costs.fire_and_forget_ns = c.value("fire_and_forget_ns", costs.fire_and_forget_ns);
            costs.tail_ns = c.value("tail_ns", costs.tail_ns);
            costs.host_low_ns = c.value("host_low_ns", costs.host_low_ns);
            costs.host_high_ns = c.value("host_high_ns", costs.host_high_ns);
        }
        cfg.scheduler.host_overhead_low_ns =
            s.value("host_overhead_low_ns", cfg.scheduler.host_overhead_low_ns);
        cfg.scheduler.host_overhead_high_ns =
            s.value("host_overhead_high_ns", cfg.scheduler.host_overhead_high_ns);
        cfg.scheduler.host_interference_multiplier =
            s.value("host_interference_multiplier", cfg.scheduler.host_interference_multiplier);
        cfg.scheduler.host_seed = s.value("host_seed", cfg.scheduler.host_seed);
        cfg.scheduler.idle_scan_interval_ns =
            s.value("idle_scan_interval_ns", cfg.scheduler.idle_scan_interval_ns);
        cfg.scheduler.poll_timeout_ns = s.value("poll_timeout_ns", cfg.scheduler.poll_timeout_ns);
        cfg.scheduler.pin_workers = s.value("pin_workers", cfg.scheduler.pin_workers);
    }
    if (j.contains("kv")) {
        const json& k = j.at("kv");
        cfg.kv_page_size = k.value("page_size", cfg.kv_page_size);
        cfg.kv_total_pages = k.value("total_pages", cfg.kv_total_pages);
    }
    if (j.contains("engine")) {
        const json& e = j.at("engine");
        cfg.model.vocab_size = e.value("vocab_size", cfg.model.vocab_size);
        cfg.model.eos_token = e.value("eos_token", cfg.model.eos_token);
        cfg.model.eos_prob = e.value("eos_prob", cfg.model.eos_prob);
        if (e.contains("batch_grid"))
            cfg.graphs.batch_grid = e.at("batch_grid").get<std::vector<std::uint32_t>>();
        if (e.contains("seq_grid"))
            cfg.graphs.seq_grid = e.at("seq_grid").get<std::vector<std::uint32_t>>();
        cfg.graphs.bytes_per_graph = e.value("bytes_per_graph", cfg.graphs.bytes_per_graph);
        if (e.contains("latency_preset")) {
            cfg.latency_preset_name = e.at("latency_preset").get<std::string>();
            cfg.latency = latency_preset(cfg.latency_preset_name);
        }
        if (e.contains("latency")) parse_latency(e.at("latency"), cfg.latency);
    }
    if (j.contains("frontend")) {
        const json& f = j.at("frontend");
        cfg.frontend.poll_min_ns = us_field(f, "poll_us_min", cfg.frontend.poll_min_ns);
        cfg.frontend.poll_max_ns = us_field(f, "poll_us_max", cfg.frontend.poll_max_ns);
        cfg.frontend.poll_init_ns = us_field(f, "poll_us_init", cfg.frontend.poll_init_ns);
        cfg.frontend.coalesce_ns = us_field(f, "coalesce_us", cfg.frontend.coalesce_ns);
        cfg.frontend.urgent_enabled = f.value("urgent_enabled", cfg.frontend.urgent_enabled);
        cfg.frontend.max_reads_per_cycle =
            f.value("max_reads_per_cycle", cfg.frontend.max_reads_per_cycle);
    }
    if (j.contains("tokenizer")) {
        const json& t = j.at("tokenizer");
        cfg.vocab_path = t.value("vocab_path", cfg.vocab_path);
        cfg.merges_path = t.value("merges_path", cfg.merges_path);
    }
    if (j.contains("server")) {
        const json& s = j.at("server");
        cfg.listen_host = s.value("host", cfg.listen_host);
        cfg.listen_port = s.value("port", cfg.listen_port);
    }
    if (j.contains("bench")) {
        const json& b = j.at("bench");
        if (b.contains("rates")) b.at("rates").get_to(cfg.bench.rates);
        cfg.bench.load_scale = b.value("load_scale", cfg.bench.load_scale);
        cfg.bench.duration_s = b.value("duration_s", cfg.bench.duration_s);
        cfg.bench.warmup_s = b.value("warmup_s", cfg.bench.warmup_s);
        cfg.bench.request_cap = b.value("request_cap", cfg.bench.request_cap);
        cfg.bench.arrival = b.value("arrival", cfg.bench.arrival);
        cfg.bench.input_dist = b.value("input_dist", cfg.bench.input_dist);
        cfg.bench.input_fixed = b.value("input_fixed", cfg.bench.input_fixed);
        cfg.bench.input_lo = b.value("input_lo", cfg.bench.input_lo);
        cfg.bench.input_hi = b.value("input_hi", cfg.bench.input_hi);
        cfg.bench.output_dist = b.value("output_dist", cfg.bench.output_dist);
        cfg.bench.output_fixed = b.value("output_fixed", cfg.bench.output_fixed);
        cfg.bench.output_lo = b.value("output_lo", cfg.bench.output_lo);
        cfg.bench.output_hi = b.value("output_hi", cfg.bench.output_hi);
        cfg.bench.trace_path = b.value("trace_path", cfg.bench.trace_path);
        cfg.bench.seed = b.value("seed", cfg.bench.seed);
        cfg.bench.repeats = b.value("repeats", cfg.bench.repeats);
    }
    return cfg;
}

}  // namespace

AppConfig parse_app_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
        return from_json(j);
    } catch (const json::exception& e) {
        raise(Errc::parse_error, std::string("config: ") + e.what());
    }
}

AppConfig load_app_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::parse_error, "cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_app_config(ss.str());
}

}  // namespace devserve
