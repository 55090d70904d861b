#include "devserve/ring_buffer.hpp"

#include <cstring>

#include "devserve/wire.hpp"

namespace devserve {

namespace {

bool is_pow2(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

}  // namespace

const char* state_name(SlotState s) {
    switch (s) {
        case SlotState::Empty: return "EMPTY";
        case SlotState::PrefillPending: return "PREFILL_PENDING";
        case SlotState::PrefillProcessing: return "PREFILL_PROCESSING";
        case SlotState::DecodeProcessing: return "DECODE_PROCESSING";
        case SlotState::DecodePaused: return "DECODE_PAUSED";
        case SlotState::DecodeCompleted: return "DECODE_COMPLETED";
    }
    return "?";
}

std::optional<Actor> edge_actor(SlotState from, SlotState to) {
    using S = SlotState;
    if (from == S::Empty && to == S::PrefillPending) return Actor::frontend;
    if (from == S::PrefillPending && to == S::PrefillProcessing) return Actor::device;
    if (from == S::PrefillProcessing && to == S::DecodeProcessing) return Actor::device;
    if (from == S::DecodeProcessing && to == S::DecodePaused) return Actor::device;
    if (from == S::DecodePaused && to == S::DecodeProcessing) return Actor::device;
    if (from == S::DecodeProcessing && to == S::DecodeCompleted) return Actor::device;
    if (from == S::DecodeCompleted && to == S::Empty) return Actor::frontend;
    return std::nullopt;
}

RingBuffer::RingBuffer(std::uint32_t capacity, std::uint32_t input_arena_tokens,
                       std::uint32_t output_arena_tokens) {
    if (!is_pow2(capacity)) raise(Errc::invalid_size, "ring capacity must be a power of two");
    if (!is_pow2(input_arena_tokens) || !is_pow2(output_arena_tokens))
        raise(Errc::invalid_size, "arena sizes must be powers of two");
    if (input_arena_tokens < capacity || output_arena_tokens < capacity)
        raise(Errc::invalid_size, "arena smaller than one token per slot");
    capacity_ = capacity;
    input_quota_ = input_arena_tokens / capacity;
    output_quota_ = output_arena_tokens / capacity;
    slots_ = std::vector<Slot>(capacity);
    input_arena_.assign(input_arena_tokens, 0);
    output_arena_.assign(output_arena_tokens, 0);
    for (std::uint32_t i = 0; i < capacity_; ++i) {
        slots_[i].input_offset = i * input_quota_;
        slots_[i].output_offset = i * output_quota_;
    }
}

bool RingBuffer::transition(std::uint32_t slot, SlotState expected, SlotState next, Actor actor) {
    check(slot);
    auto owner = edge_actor(expected, next);
    if (!owner) {
        raise(Errc::illegal_transition, std::string("illegal transition ") + state_name(expected) +
                                            " -> " + state_name(next));
    }
    if (*owner != actor) {
        raise(Errc::illegal_transition, std::string("transition ") + state_name(expected) +
                                            " -> " + state_name(next) +
                                            " attempted by the wrong plane");
    }
    auto want = static_cast<std::uint32_t>(expected);
    return slots_[slot].state.compare_exchange_strong(want, static_cast<std::uint32_t>(next),
                                                      std::memory_order_acq_rel,
                                                      std::memory_order_acquire);
}

void RingBuffer::write_prompt(std::uint32_t slot, std::span<const TokenId> tokens,
                              std::uint32_t max_output, std::uint64_t sampling_seed,
                              std::uint64_t request_id, std::uint64_t arrival_seq) {
    check(slot);
    if (tokens.empty()) raise(Errc::empty_prompt, "prompt is empty");
    if (tokens.size() > input_quota_)
        raise(Errc::arena_exhausted, "prompt does not fit the slot's input quota");
    if (max_output > output_quota_)
        raise(Errc::arena_exhausted, "max_output exceeds the slot's output quota");
    Slot& s = slots_[slot];
    if (static_cast<SlotState>(s.state.load(std::memory_order_acquire)) != SlotState::Empty)
        raise(Errc::slot_not_empty, "write_prompt on a non-empty slot");
    std::memcpy(input_arena_.data() + s.input_offset, tokens.data(),
                tokens.size() * sizeof(TokenId));
    s.input_len = static_cast<std::uint32_t>(tokens.size());
    s.max_output = max_output;
    s.sampling_seed = sampling_seed;
    s.arrival_seq = arrival_seq;
    s.request_id.store(request_id, std::memory_order_relaxed);
    s.generated_count.store(0, std::memory_order_relaxed);
}

void RingBuffer::publish_tokens(std::uint32_t slot, std::span<const TokenId> tokens) {
    check(slot);
    Slot& s = slots_[slot];
    auto st = static_cast<SlotState>(s.state.load(std::memory_order_acquire));
    if (st != SlotState::DecodeProcessing && st != SlotState::PrefillProcessing)
        raise(Errc::illegal_transition, "publish_tokens outside a processing state");
    std::uint32_t gen = s.generated_count.load(std::memory_order_relaxed);
    if (gen + tokens.size() > output_quota_)
        raise(Errc::capacity_exceeded, "slot output quota exceeded");
    std::memcpy(output_arena_.data() + s.output_offset + gen, tokens.data(),
                tokens.size() * sizeof(TokenId));
    // Token words first, then the count that makes them visible.
    s.generated_count.store(gen + static_cast<std::uint32_t>(tokens.size()),
                            std::memory_order_release);
}

bool RingBuffer::reclaim(std::uint32_t slot) {
    if (!transition(slot, SlotState::DecodeCompleted, SlotState::Empty, Actor::frontend))
        return false;
    // Counter resets only here.  A snapshot may transiently observe
    // (Empty, old_count); monotonicity is promised only while non-Empty.
    slots_[slot].generated_count.store(0, std::memory_order_release);
    return true;
}

std::vector<TokenId> RingBuffer::read_output(std::uint32_t slot, std::uint32_t from,
                                             std::uint32_t to) const {
    check(slot);
    if (from > to || to > output_quota_) raise(Errc::invalid_argument, "bad output range");
    const Slot& s = slots_[slot];
    std::vector<TokenId> out(to - from);
    std::memcpy(out.data(), output_arena_.data() + s.output_offset + from,
                out.size() * sizeof(TokenId));
    return out;
}

std::vector<TokenId> RingBuffer::read_input(std::uint32_t slot) const {
    check(slot);
    const Slot& s = slots_[slot];
    std::vector<TokenId> out(s.input_len);
    std::memcpy(out.data(), input_arena_.data() + s.input_offset, out.size() * sizeof(TokenId));
    return out;
}

void RingBuffer::snapshot_metadata(std::vector<std::uint8_t>& out) const {
    out.resize(metadata_bytes());
    std::uint8_t* p = out.data();
    for (std::uint32_t i = 0; i < capacity_; ++i) {
        const Slot& s = slots_[i];
        store_u32(p, s.state.load(std::memory_order_acquire));
        store_u32(p + 4, s.generated_count.load(std::memory_order_acquire));
        store_u64(p + 8, s.request_id.load(std::memory_order_relaxed));
        p += kMetaBytesPerSlot;
    }
}

std::vector<SlotMeta> RingBuffer::parse_metadata(std::span<const std::uint8_t> bytes) {
    if (bytes.size() % kMetaBytesPerSlot != 0)
        raise(Errc::invalid_argument, "metadata snapshot size not a multiple of 16");
    std::vector<SlotMeta> out(bytes.size() / kMetaBytesPerSlot);
    const std::uint8_t* p = bytes.data();
    for (auto& m : out) {
        m.state = static_cast<SlotState>(get_u32(p));
        m.generated = get_u32(p + 4);
        m.request_id = get_u64(p + 8);
        p += kMetaBytesPerSlot;
    }
    return out;
}

void RingBuffer::read_output_bytes(std::uint64_t byte_offset, std::uint64_t len,
                                   std::uint8_t* dst) const {
    if (byte_offset + len > output_arena_bytes())
        raise(Errc::region_out_of_bounds, "output arena read out of bounds");
    std::memcpy(dst, reinterpret_cast<const std::uint8_t*>(output_arena_.data()) + byte_offset,
                len);
}

}  // namespace devserve
