#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "devserve/clock.hpp"
#include "devserve/errors.hpp"
#include "devserve/ring_buffer.hpp"
#include "devserve/rng.hpp"

namespace devserve {

// ---- pseudo model ---------------------------------------------------------

// Output token at position p is a pure function of (request seed, prompt
// hash, p).  That makes every mode and every replay produce identical
// sequences, which the cross-mode equivalence checks lean on.
struct PseudoModelConfig {
    std::uint32_t vocab_size = 32000;
    TokenId eos_token = 2;
    double eos_prob = 0.0;  // per-position chance the model emits EOS early
};

std::uint64_t prompt_hash(std::span<const TokenId> prompt);

std::uint64_t model_mix(std::uint64_t seed, std::uint64_t prompt_h, std::uint32_t position);

TokenId model_token(const PseudoModelConfig& cfg, std::uint64_t seed, std::uint64_t prompt_h,
                    std::uint32_t position);

// ---- graph cache ----------------------------------------------------------

enum class Phase : std::uint8_t { prefill = 0, decode = 1 };

struct GraphKey {
    std::uint32_t batch_capacity = 0;
    std::uint32_t seq_capacity = 0;
    Phase phase = Phase::decode;
    bool operator==(const GraphKey&) const = default;
};

struct GraphRef {
    GraphKey key;
    bool fallback = false;  // max-shape graph; relaxes the sequence bound
};

struct GraphCacheConfig {
    std::vector<std::uint32_t> batch_grid = {1, 2, 4, 8, 16, 32};
    std::vector<std::uint32_t> seq_grid = {128, 256, 512, 1024, 2048};
    std::uint64_t bytes_per_graph = 2'500'000;
};

// Pre-built (batch, seq, phase) grid with O(1) tightest-fit lookup via
// precomputed ceiling tables, mirroring a device-resident graph pool that is
// never touched by a host after startup.
class GraphCache {
  public:
    explicit GraphCache(GraphCacheConfig cfg = {});

    GraphRef lookup(std::uint32_t batch, std::uint32_t seq, Phase phase) const;

    std::size_t graph_count() const { return count_; }
    std::uint64_t reserved_bytes() const { return count_ * cfg_.bytes_per_graph; }
    std::uint32_t max_batch() const { return cfg_.batch_grid.back(); }
    std::uint32_t max_seq() const { return cfg_.seq_grid.back(); }

  private:
    GraphCacheConfig cfg_;
    std::size_t count_;
    std::vector<std::uint32_t> batch_ceil_;  // batch -> grid value, 0..max_batch
    std::vector<std::uint32_t> seq_ceil_;    // seq   -> grid value, 0..max_seq
};

// ---- latency model --------------------------------------------------------

struct LatencyProfile {
    TimeNs prefill_base_ns = 2 * kMs;
    TimeNs prefill_per_prompt_token_ns = 35 * kUs;
    TimeNs decode_base_ns = 7 * kMs;
    TimeNs decode_per_seq_ns = 31'250;
};

// Named calibration presets; constants approximate a single-device serving
// point for each model class and carry no other meaning.
LatencyProfile latency_preset(const std::string& name);

// ---- execution ------------------------------------------------------------

struct PrefillItem {
    std::uint32_t slot = 0;
    std::uint64_t seed = 0;
    std::vector<TokenId> prompt;
};

struct DecodeItem {
    std::uint32_t slot = 0;
    std::uint64_t seed = 0;
    std::uint64_t prompt_h = 0;
    std::uint32_t position = 0;     // output position to sample
    std::uint32_t context_len = 0;  // prompt plus generated; bounds the graph shape
};

struct SampledToken {
    std::uint32_t slot = 0;
    TokenId token = 0;
    std::uint64_t prompt_h = 0;  // echoed so prefill callers can cache it
};

struct ExtractionResult {
    std::vector<SampledToken> tokens;
    Phase phase = Phase::decode;
    TimeNs ready_at = 0;
};

// Emulated engine.  execute_* samples tokens immediately (sampling lives
// inside the graph) but marks the extraction buffer ready only at now +
// modeled latency; poll_extraction is how the scheduler learns a step
// finished.
class EngineEmulator {
  public:
    EngineEmulator(PseudoModelConfig model, GraphCacheConfig cache_cfg, LatencyProfile latency);

    const GraphCache& cache() const { return cache_; }
    const PseudoModelConfig& model() const { return model_; }
    const LatencyProfile& latency() const { return latency_; }

    TimeNs execute_prefill(const GraphRef& graph, std::span<const PrefillItem> items, TimeNs now);
    TimeNs execute_decode(const GraphRef& graph, std::span<const DecodeItem> items, TimeNs now);

    // Returns the deposited batch once its ready time has passed.
    std::optional<ExtractionResult> poll_extraction(TimeNs now);

    bool extraction_pending() const { return pending_.has_value(); }
    std::optional<TimeNs> extraction_ready_at() const {
        if (!pending_) return std::nullopt;
        return pending_->ready_at;
    }

    // True when the model will emit EOS (or hit the output ceiling) at
    // `position`; pure arithmetic, usable for completion forecasts.
    bool predicts_eos(std::uint64_t seed, std::uint64_t prompt_h, std::uint32_t position) const {
        return model_token(model_, seed, prompt_h, position) == model_.eos_token;
    }

  private:
    void check_shape(const GraphRef& graph, std::size_t batch, std::uint32_t max_seq) const;

    PseudoModelConfig model_;
    GraphCache cache_;
    LatencyProfile latency_;
    std::optional<ExtractionResult> pending_;
};

}  // namespace devserve
