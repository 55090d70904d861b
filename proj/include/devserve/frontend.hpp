#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "devserve/clock.hpp"
#include "devserve/errors.hpp"
#include "devserve/ring_buffer.hpp"
#include "devserve/tokenizer.hpp"
#include "devserve/transport.hpp"

namespace devserve {

constexpr std::uint32_t kNoSlot = 0xFFFFFFFFu;

// ---- ring-backed transport regions -----------------------------------------
// The frontend plane only ever touches the ring through these windows; no
// scheduler code runs when they are read or written.

// Densely packed per-slot (state, generated, request_id) snapshot source.
class MetaSnapshotRegion final : public Region {
  public:
    explicit MetaSnapshotRegion(const RingBuffer& ring) : ring_(ring) {}
    std::uint64_t length() const override { return ring_.metadata_bytes(); }
    void read(std::uint64_t offset, std::uint64_t len, std::uint8_t* dst) const override;

  private:
    const RingBuffer& ring_;
    mutable std::vector<std::uint8_t> scratch_;
};

// Raw output-arena bytes for token-range reads.
class OutputArenaRegion final : public Region {
  public:
    explicit OutputArenaRegion(const RingBuffer& ring) : ring_(ring) {}
    std::uint64_t length() const override { return ring_.output_arena_bytes(); }
    void read(std::uint64_t offset, std::uint64_t len, std::uint8_t* dst) const override;

  private:
    const RingBuffer& ring_;
};

// Per-slot prompt mailbox.  A write carries a fixed header plus the prompt
// tokens and must target exactly one slot's box; the payload is unpacked into
// the slot's arena range, and the slot stays Empty until the poster's CAS
// publishes it.
constexpr std::uint64_t kPromptHeaderBytes = 32;

class PromptBoxRegion final : public Region {
  public:
    explicit PromptBoxRegion(RingBuffer& ring) : ring_(ring) {}
    std::uint64_t stride() const {
        return kPromptHeaderBytes + static_cast<std::uint64_t>(ring_.input_quota()) * 4;
    }
    std::uint64_t length() const override { return stride() * ring_.capacity(); }
    bool readable() const override { return false; }
    bool writable() const override { return true; }
    void write(std::uint64_t offset, std::uint64_t len, const std::uint8_t* src) override;

    // Serialization used by posters.
    static std::vector<std::uint8_t> pack(std::span<const TokenId> prompt,
                                          std::uint32_t max_output, std::uint64_t seed,
                                          std::uint64_t request_id, std::uint64_t arrival_seq);

  private:
    RingBuffer& ring_;
};

struct RingRegions {
    RegionHandle meta;
    RegionHandle output;
    RegionHandle prompt;
    std::uint64_t prompt_stride = 0;
};

RingRegions register_ring_regions(Transport& transport, RingBuffer& ring);

// ---- slot cache ------------------------------------------------------------

// Local availability view: one bit per slot (set = believed free), a scan
// hint, and a reservation overlay for slots acquired but not yet visible as
// taken in any snapshot.  Externally synchronized.
class SlotCache {
  public:
    explicit SlotCache(std::uint32_t capacity);

    // Merge a metadata snapshot: Empty slots become free unless reserved.
    void refresh(std::span<const SlotMeta> metas);

    // Circular scan from the hint.  Clears the bit, records the reservation,
    // advances the hint past the returned slot.
    std::optional<std::uint32_t> try_acquire();

    void mark_taken(std::uint32_t slot);         // stale-free fix-up
    void mark_free(std::uint32_t slot);          // after reclaim
    void clear_reservation(std::uint32_t slot);  // slot now ring-visible as taken

    std::uint32_t capacity() const { return capacity_; }
    std::uint32_t hint() const { return hint_; }
    std::uint32_t free_count() const;
    std::uint64_t probes() const { return probes_; }
    std::uint64_t acquires() const { return acquires_; }
    std::uint64_t refreshes() const { return refreshes_; }
    std::uint64_t refresh_age() const { return age_; }
    void bump_age() { ++age_; }
    bool is_free(std::uint32_t slot) const { return bit(bitmap_, slot); }
    bool is_reserved(std::uint32_t slot) const { return bit(reserved_, slot); }

  private:
    static bool bit(const std::vector<std::uint64_t>& words, std::uint32_t i) {
        return (words[i >> 6] >> (i & 63)) & 1;
    }
    static void set_bit(std::vector<std::uint64_t>& words, std::uint32_t i) {
        words[i >> 6] |= 1ull << (i & 63);
    }
    static void clear_bit(std::vector<std::uint64_t>& words, std::uint32_t i) {
        words[i >> 6] &= ~(1ull << (i & 63));
    }

    std::uint32_t capacity_;
    std::uint32_t hint_ = 0;
    std::vector<std::uint64_t> bitmap_;
    std::vector<std::uint64_t> reserved_;
    std::uint64_t probes_ = 0;
    std::uint64_t acquires_ = 0;
    std::uint64_t refreshes_ = 0;
    std::uint64_t age_ = 0;
};

// ---- streaming detokenizer -------------------------------------------------

// Incremental id -> text decoding that never emits a torn UTF-8 sequence:
// bytes of an incomplete trailing code point are held until completed.
class StreamDetokenizer {
  public:
    explicit StreamDetokenizer(const Tokenizer* tok) : tok_(tok) {}

    std::string push(std::span<const TokenId> ids);
    std::string finish();  // flushes whatever is held, verbatim

  private:
    const Tokenizer* tok_;
    std::string pending_;
};

// ---- SSE framing -----------------------------------------------------------

// "data: " + single-line payload + "\n\n".  Rejects embedded newlines so the
// wire format stays bit-exact.
std::string sse_data_event(std::string_view single_line_payload);
std::string sse_done_event();

// One OpenAI-style streaming chunk as single-line JSON.  `chat_delta` selects
// the chat.completion.chunk shape; otherwise text_completion.
std::string completion_chunk_json(std::string_view request_tag, std::string_view model,
                                  std::int64_t created, std::string_view text, bool chat_delta,
                                  const char* finish_reason);

// ---- request tracking ------------------------------------------------------

enum class RequestStatus { queued, submitted, streaming, done, failed };

const char* status_name(RequestStatus s);

struct TimingMarks {
    TimeNs arrival = -1;
    TimeNs submit = -1;
    TimeNs first_token = -1;
    TimeNs last_token = -1;
};

// ids delivered for one request in order; `final` marks the terminal call.
using TokenSink = std::function<void(std::span<const TokenId> ids, TimeNs now, bool final)>;

struct RequestRecord {
    std::uint64_t request_id = 0;
    std::uint32_t slot_index = kNoSlot;
    RequestStatus status = RequestStatus::queued;
    std::uint32_t tokens_streamed = 0;
    std::uint32_t last_seen_generated = 0;
    TimingMarks marks;
    std::uint32_t input_len = 0;
    std::uint32_t max_output = 0;
    std::uint64_t seed = 0;
    std::uint64_t arrival_seq = 0;
    bool urgent = true;  // until the first token is delivered
    std::vector<TokenId> prompt;        // retained until the submit flip lands
    std::vector<TokenId> streamed_ids;  // delivery record, in stream order
    std::vector<TimeNs> token_times;
};

// ---- frontend --------------------------------------------------------------

struct FrontendConfig {
    TimeNs poll_init_ns = 200 * kUs;
    TimeNs poll_min_ns = 50 * kUs;
    TimeNs poll_max_ns = 2 * kMs;
    TimeNs coalesce_ns = 100 * kUs;
    bool urgent_enabled = true;
    std::uint32_t max_reads_per_cycle = 64;
    std::uint32_t submit_qp = 0;
    std::uint32_t reader_qp = 1;
    std::uint32_t refresh_qp = 2;
};

struct SubmitBatch {
    std::vector<std::uint64_t> request_ids;
    TimeNs complete_at = 0;
};

struct EnqueueOutcome {
    enum class Kind { accepted, refresh_pending, rejected };
    Kind kind = Kind::rejected;
    std::uint64_t request_id = 0;  // accepted only
    TimeNs retry_at = 0;           // refresh_pending only
};

struct ReaderOutcome {
    std::size_t delivered = 0;
    std::size_t finalized = 0;
    TimeNs next_event = 0;
    bool cycle_finished = false;
};

struct FrontendStats {
    std::uint64_t accepted = 0;
    std::uint64_t rejected = 0;
    std::uint64_t forced_refreshes = 0;
    std::uint64_t stale_flips = 0;
    std::uint64_t reader_cycles = 0;
    std::uint64_t tokens_delivered = 0;
    std::uint64_t reads_posted = 0;
    std::uint64_t capped_cycles = 0;
};

// The DPU-plane orchestrator: slot acquisition against the cached view,
// coalesced prompt posting, state flips at write completion, and the
// background token-reader cycle.  Drivable by the simulation loop or by real
// threads; all waiting is expressed as returned deadlines.
class Frontend {
  public:
    Frontend(RingBuffer& ring, Transport& transport, RingRegions regions, FrontendConfig cfg);

    // -- submit side (handler context) --
    // First call may come back refresh_pending with the forced bulk-read's
    // completion time; the caller retries once at that time.  A retry that
    // still finds no slot is rejected (the HTTP layer maps that to 429).
    EnqueueOutcome enqueue_request(std::span<const TokenId> prompt, std::uint32_t max_output,
                                   std::uint64_t seed, TimeNs now, TokenSink sink);

    std::optional<TimeNs> submit_deadline() const;
    // Posts the coalesced prompt writes once the window elapsed (orForce).
    std::optional<SubmitBatch> flush_submits(TimeNs now, bool force = false);
    // Publishes each written slot at the batch's completion time.
    void finish_submits(const SubmitBatch& batch, TimeNs now);

    // -- reader side (one logical thread) --
    // Advances the cycle state machine; returns the next time it wants to
    // run.  Safe to call early (it just reports the pending deadline).
    ReaderOutcome advance_reader(TimeNs now);
    TimeNs poll_interval() const { return interval_ns_; }

    // -- lifecycle --
    // Client went away: stop delivering, drain the device silently, reclaim
    // at completion.  (There is no abort edge in the slot lifecycle, which is
    // deliberate: the device plane never observes client failures.)
    void fail_request(std::uint64_t request_id);

    RequestRecord snapshot_request(std::uint64_t request_id) const;
    std::vector<std::uint64_t> request_ids() const;
    std::size_t active_requests() const;  // non-terminal records
    bool all_terminal() const;
    const FrontendStats& stats() const { return stats_; }
    SlotCache& cache() { return cache_; }
    std::uint64_t next_arrival_seq() const { return arrival_seq_; }

  private:
    enum class ReaderPhase { wait, meta_wait, reads_wait };

    struct PendingSubmit {
        std::uint64_t request_id = 0;
        std::uint32_t slot = 0;
    };

    struct ReadItem {
        std::uint64_t request_id = 0;
        std::uint32_t slot = 0;
        std::uint32_t from = 0;
        std::uint32_t count = 0;
    };

    // Scan the cached view; on miss, arrange the forced refresh.
    std::optional<std::uint32_t> acquire_slot(TimeNs now, EnqueueOutcome& outcome);
    void apply_ready_refresh(TimeNs now);
    void deliver(RequestRecord& rec, std::span<const TokenId> ids, TimeNs now);
    void finalize(RequestRecord& rec, TimeNs now);
    void finish_cycle(TimeNs now, ReaderOutcome& out);
    RequestRecord* find(std::uint64_t request_id);
    void build_read_plan(const std::vector<SlotMeta>& metas, std::vector<ReadItem>& plan);

    RingBuffer& ring_;
    Transport& transport_;
    RingRegions regions_;
    FrontendConfig cfg_;

    mutable std::mutex mu_;
    SlotCache cache_;
    std::unordered_map<std::uint64_t, std::unique_ptr<RequestRecord>> records_;
    std::unordered_map<std::uint64_t, TokenSink> sinks_;
    std::vector<std::uint64_t> order_;  // submit order, for stable reader iteration
    std::vector<std::uint64_t> slot_owner_;  // slot -> request_id (+1), 0 = none
    std::vector<PendingSubmit> coalescer_;
    std::optional<TimeNs> coalesce_deadline_;
    std::optional<std::pair<TaskId, TimeNs>> refresh_inflight_;

    ReaderPhase phase_ = ReaderPhase::wait;
    TimeNs cycle_start_ = 0;
    TimeNs interval_ns_;
    TimeNs phase_ready_ = 0;
    std::vector<ReadItem> plan_;
    std::vector<SlotMeta> metas_;
    std::size_t cycle_delivered_ = 0;

    std::uint64_t next_request_id_ = 1;
    std::uint64_t arrival_seq_ = 0;
    std::size_t active_count_ = 0;
    FrontendStats stats_;
};

}  // namespace devserve
