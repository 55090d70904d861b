#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "devserve/errors.hpp"

namespace devserve {

using TokenId = std::uint32_t;

// Slot lifecycle.  Every transition goes through RingBuffer::transition's CAS;
// there is no other way to move a slot.
enum class SlotState : std::uint32_t {
    Empty = 0,
    PrefillPending = 1,
    PrefillProcessing = 2,
    DecodeProcessing = 3,
    DecodePaused = 4,
    DecodeCompleted = 5,
};

enum class Actor { frontend, device };

const char* state_name(SlotState s);

// Which actor owns a given edge; nullopt means the edge is illegal.
std::optional<Actor> edge_actor(SlotState from, SlotState to);

struct alignas(64) Slot {
    std::atomic<std::uint32_t> state{0};
    std::atomic<std::uint32_t> generated_count{0};
    std::atomic<std::uint64_t> request_id{0};

    // Plain fields: written by the slot owner before the state flip that
    // publishes them, read only after an acquire load of state.
    std::uint32_t input_offset = 0;
    std::uint32_t input_len = 0;
    std::uint32_t output_offset = 0;
    std::uint32_t max_output = 0;
    std::uint64_t sampling_seed = 0;
    std::uint64_t arrival_seq = 0;

    Slot() = default;
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;
};

struct SlotMeta {
    SlotState state;
    std::uint32_t generated;
    std::uint64_t request_id;
};

// Per-slot wire footprint in a metadata snapshot: state u32, generated u32,
// request_id u64, all little-endian.
constexpr std::size_t kMetaBytesPerSlot = 16;

// The single structure both planes share.  Token arenas are split into fixed
// per-slot quotas so no allocator runs on either plane and ranges of live
// slots can never alias.
class RingBuffer {
  public:
    RingBuffer(std::uint32_t capacity, std::uint32_t input_arena_tokens,
               std::uint32_t output_arena_tokens);

    RingBuffer(const RingBuffer&) = delete;
    RingBuffer& operator=(const RingBuffer&) = delete;

    std::uint32_t capacity() const { return capacity_; }
    std::uint32_t input_quota() const { return input_quota_; }
    std::uint32_t output_quota() const { return output_quota_; }

    SlotState state(std::uint32_t slot) const {
        return static_cast<SlotState>(slots_[check(slot)].state.load(std::memory_order_acquire));
    }

    const Slot& slot(std::uint32_t i) const { return slots_[check(i)]; }

    // CAS expected->next on behalf of `actor`.  Returns false when another
    // caller won the race; throws when the edge itself is illegal or owned by
    // the other plane.
    bool transition(std::uint32_t slot, SlotState expected, SlotState next, Actor actor);

    // Writes prompt tokens and request metadata into the slot's fixed arena
    // range.  The slot must still be Empty: publication happens afterwards
    // via the Empty -> PrefillPending flip.
    void write_prompt(std::uint32_t slot, std::span<const TokenId> tokens,
                      std::uint32_t max_output, std::uint64_t sampling_seed,
                      std::uint64_t request_id = 0, std::uint64_t arrival_seq = 0);

    // Appends generated tokens; generated_count becomes visible only after
    // the token words themselves are in the arena.
    void publish_tokens(std::uint32_t slot, std::span<const TokenId> tokens);

    // DecodeCompleted -> Empty plus counter reset.  Frontend edge.
    bool reclaim(std::uint32_t slot);

    std::uint32_t generated_count(std::uint32_t slot) const {
        return slots_[check(slot)].generated_count.load(std::memory_order_acquire);
    }

    // Copy of output tokens [from, to) for a slot.  Caller is responsible for
    // only asking up to a generated_count it has already observed.
    std::vector<TokenId> read_output(std::uint32_t slot, std::uint32_t from,
                                     std::uint32_t to) const;

    std::vector<TokenId> read_input(std::uint32_t slot) const;

    // Densely packed (state, generated_count, request_id) per slot.  Each
    // field is read atomically; the snapshot as a whole may tear across
    // slots, which readers tolerate because counts are monotone.
    void snapshot_metadata(std::vector<std::uint8_t>& out) const;

    static std::vector<SlotMeta> parse_metadata(std::span<const std::uint8_t> bytes);

    // Raw output-arena byte access for the transport's read path.  Offsets in
    // bytes over the token array; bounds-checked.
    void read_output_bytes(std::uint64_t byte_offset, std::uint64_t len,
                           std::uint8_t* dst) const;

    std::uint64_t output_arena_bytes() const {
        return static_cast<std::uint64_t>(output_arena_.size()) * sizeof(TokenId);
    }

    std::uint64_t metadata_bytes() const {
        return static_cast<std::uint64_t>(capacity_) * kMetaBytesPerSlot;
    }

  private:
    std::uint32_t check(std::uint32_t slot) const {
        if (slot >= capacity_) raise(Errc::invalid_argument, "slot index out of range");
        return slot;
    }

    std::uint32_t capacity_;
    std::uint32_t input_quota_;
    std::uint32_t output_quota_;
    std::vector<Slot> slots_;
    std::vector<TokenId> input_arena_;
    std::vector<TokenId> output_arena_;
};

}  // namespace devserve
