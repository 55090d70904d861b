#include "devserve/engine.hpp"

#include <algorithm>

namespace devserve {

std::uint64_t prompt_hash(std::span<const TokenId> prompt) {
    std::uint64_t h = 0x243F6A8885A308D3ull;
    for (TokenId t : prompt) h = splitmix64(h ^ t);
    return h;
}

std::uint64_t model_mix(std::uint64_t seed, std::uint64_t prompt_h, std::uint32_t position) {
    std::uint64_t rotated = (prompt_h << 17) | (prompt_h >> 47);
    return splitmix64(seed ^ rotated ^ (0x9E3779B97F4A7C15ull * (position + 1ull)));
}

TokenId model_token(const PseudoModelConfig& cfg, std::uint64_t seed, std::uint64_t prompt_h,
                    std::uint32_t position) {
    std::uint64_t m = model_mix(seed, prompt_h, position);
    if (cfg.eos_prob > 0.0) {
        double u = static_cast<double>(m >> 11) * 0x1.0p-53;
        if (u < cfg.eos_prob) return cfg.eos_token;
    }
    return static_cast<TokenId>(m % cfg.vocab_size);
}

GraphCache::GraphCache(GraphCacheConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.batch_grid.empty() || cfg_.seq_grid.empty())
        raise(Errc::empty_grid, "graph grid has no shapes");
    std::sort(cfg_.batch_grid.begin(), cfg_.batch_grid.end());
    std::sort(cfg_.seq_grid.begin(), cfg_.seq_grid.end());
    if (cfg_.batch_grid.front() == 0 || cfg_.seq_grid.front() == 0)
        raise(Errc::invalid_argument, "grid shapes must be positive");
    count_ = cfg_.batch_grid.size() * cfg_.seq_grid.size() * 2;  // both phases
    batch_ceil_.assign(cfg_.batch_grid.back() + 1, 0);
    for (std::uint32_t b = 1, gi = 0; b <= cfg_.batch_grid.back(); ++b) {
        while (cfg_.batch_grid[gi] < b) ++gi;
        batch_ceil_[b] = cfg_.batch_grid[gi];
    }
    seq_ceil_.assign(cfg_.seq_grid.back() + 1, 0);
    for (std::uint32_t s = 1, gi = 0; s <= cfg_.seq_grid.back(); ++s) {
        while (cfg_.seq_grid[gi] < s) ++gi;
        seq_ceil_[s] = cfg_.seq_grid[gi];
    }
}

GraphRef GraphCache::lookup(std::uint32_t batch, std::uint32_t seq, Phase phase) const {
    if (batch == 0 || seq == 0) raise(Errc::invalid_argument, "empty shape lookup");
    if (batch > max_batch() || seq > max_seq()) {
        return {{max_batch(), max_seq(), phase}, true};
    }
    return {{batch_ceil_[batch], seq_ceil_[seq], phase}, false};
}

LatencyProfile latency_preset(const std::string& name) {
    if (name == "llama8b") return {2 * kMs, 35 * kUs, 7 * kMs, 31'250};
    if (name == "phi15b") return {3 * kMs, 60 * kUs, 12'600 * kUs, 50 * kUs};
    if (name == "qwen32b") return {5 * kMs, 120 * kUs, 28 * kMs, 106 * kUs};
    if (name == "qwen30b_a3b") return {2'500 * kUs, 40 * kUs, 11'200 * kUs, 43'750};
    raise(Errc::invalid_argument, "unknown latency preset '" + name + "'");
}

EngineEmulator::EngineEmulator(PseudoModelConfig model, GraphCacheConfig cache_cfg,
                               LatencyProfile latency)
    : model_(model), cache_(std::move(cache_cfg)), latency_(latency) {
    if (model_.vocab_size == 0) raise(Errc::invalid_argument, "vocab must be non-empty");
    if (model_.eos_token >= model_.vocab_size)
        raise(Errc::invalid_argument, "eos token outside vocab");
}

void EngineEmulator::check_shape(const GraphRef& graph, std::size_t batch,
                                 std::uint32_t max_seq) const {
    if (batch > graph.key.batch_capacity)
        raise(Errc::shape_violation, "batch larger than graph capacity");
    if (!graph.fallback && max_seq > graph.key.seq_capacity)
        raise(Errc::shape_violation, "sequence longer than graph capacity");
}

TimeNs EngineEmulator::execute_prefill(const GraphRef& graph, std::span<const PrefillItem> items,
                                       TimeNs now) {
    if (items.empty()) return now;
    if (pending_) raise(Errc::invalid_argument, "extraction buffer still occupied");
    std::uint32_t longest = 0;
    std::uint64_t total_tokens = 0;
    for (const auto& it : items) {
        longest = std::max(longest, static_cast<std::uint32_t>(it.prompt.size()));
        total_tokens += it.prompt.size();
    }
    check_shape(graph, items.size(), longest);
    ExtractionResult res;
    res.phase = Phase::prefill;
    res.ready_at = now + latency_.prefill_base_ns +
                   latency_.prefill_per_prompt_token_ns * static_cast<TimeNs>(total_tokens);
    for (const auto& it : items) {
        std::uint64_t h = prompt_hash(it.prompt);
        res.tokens.push_back({it.slot, model_token(model_, it.seed, h, 0), h});
    }
    pending_ = std::move(res);
    return pending_->ready_at;
}

TimeNs EngineEmulator::execute_decode(const GraphRef& graph, std::span<const DecodeItem> items,
                                      TimeNs now) {
    if (items.empty()) return now;
    if (pending_) raise(Errc::invalid_argument, "extraction buffer still occupied");
    std::uint32_t longest = 0;
    for (const auto& it : items) longest = std::max(longest, it.context_len);
    check_shape(graph, items.size(), longest);
    ExtractionResult res;
    res.phase = Phase::decode;
    res.ready_at = now + latency_.decode_base_ns +
                   latency_.decode_per_seq_ns * static_cast<TimeNs>(items.size());
    for (const auto& it : items) {
        res.tokens.push_back({it.slot, model_token(model_, it.seed, it.prompt_h, it.position),
                              it.prompt_h});
    }
    pending_ = std::move(res);
    return pending_->ready_at;
}

std::optional<ExtractionResult> EngineEmulator::poll_extraction(TimeNs now) {
    if (!pending_ || now < pending_->ready_at) return std::nullopt;
    auto out = std::move(*pending_);
    pending_.reset();
    return out;
}

}  // namespace devserve
