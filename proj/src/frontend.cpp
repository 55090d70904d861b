#include "devserve/frontend.hpp"

#include <algorithm>
#include <cstring>

#include "devserve/wire.hpp"
#include "json.hpp"

namespace devserve {

// ---- regions ---------------------------------------------------------------

void MetaSnapshotRegion::read(std::uint64_t offset, std::uint64_t len, std::uint8_t* dst) const {
    ring_.snapshot_metadata(scratch_);
    std::memcpy(dst, scratch_.data() + offset, len);
}

void OutputArenaRegion::read(std::uint64_t offset, std::uint64_t len, std::uint8_t* dst) const {
    ring_.read_output_bytes(offset, len, dst);
}

std::vector<std::uint8_t> PromptBoxRegion::pack(std::span<const TokenId> prompt,
                                                std::uint32_t max_output, std::uint64_t seed,
                                                std::uint64_t request_id,
                                                std::uint64_t arrival_seq) {
    std::vector<std::uint8_t> out;
    out.reserve(kPromptHeaderBytes + prompt.size() * 4);
    put_u32(out, static_cast<std::uint32_t>(prompt.size()));
    put_u32(out, max_output);
    put_u64(out, seed);
    put_u64(out, request_id);
    put_u64(out, arrival_seq);
    for (TokenId t : prompt) put_u32(out, t);
    return out;
}

void PromptBoxRegion::write(std::uint64_t offset, std::uint64_t len, const std::uint8_t* src) {
    const std::uint64_t s = stride();
    if (offset % s != 0) raise(Errc::invalid_argument, "prompt write must start at a slot box");
    const std::uint64_t slot = offset / s;
    if (len < kPromptHeaderBytes) raise(Errc::invalid_argument, "prompt payload too short");
    std::uint32_t input_len = get_u32(src);
    std::uint32_t max_output = get_u32(src + 4);
    std::uint64_t seed = get_u64(src + 8);
    std::uint64_t request_id = get_u64(src + 16);
    std::uint64_t arrival_seq = get_u64(src + 24);
    if (len != kPromptHeaderBytes + static_cast<std::uint64_t>(input_len) * 4)
        raise(Errc::invalid_argument, "prompt payload length mismatch");
    std::vector<TokenId> tokens(input_len);
    for (std::uint32_t i = 0; i < input_len; ++i)
        tokens[i] = get_u32(src + kPromptHeaderBytes + static_cast<std::uint64_t>(i) * 4);
    try {
        ring_.write_prompt(static_cast<std::uint32_t>(slot), tokens, max_output, seed,
                           request_id, arrival_seq);
    } catch (const Error& e) {
        // A write racing a taken slot lands in a box nobody will read; the
        // poster's publish CAS fails afterwards and it rescans.  Mirrors
        // one-sided semantics: remote writes cannot be rejected in flight.
        if (e.code() != Errc::slot_not_empty) throw;
    }
}

RingRegions register_ring_regions(Transport& transport, RingBuffer& ring) {
    RingRegions r;
    auto prompt = std::make_shared<PromptBoxRegion>(ring);
    r.prompt_stride = prompt->stride();
    r.meta = transport.register_region("slot_meta", std::make_shared<MetaSnapshotRegion>(ring));
    r.output = transport.register_region("output_arena",
                                         std::make_shared<OutputArenaRegion>(ring));
    r.prompt = transport.register_region("prompt_box", std::move(prompt));
    return r;
}

// ---- slot cache ------------------------------------------------------------

SlotCache::SlotCache(std::uint32_t capacity)
    : capacity_(capacity),
      bitmap_((capacity + 63) / 64, ~0ull),
      reserved_((capacity + 63) / 64, 0) {
    // Mask off bits past the end so free_count stays honest.
    if (capacity_ & 63) bitmap_.back() = (1ull << (capacity_ & 63)) - 1;
}

void SlotCache::refresh(std::span<const SlotMeta> metas) {
    ++refreshes_;
    age_ = 0;
    const std::uint32_t n = std::min<std::uint32_t>(capacity_,
                                                    static_cast<std::uint32_t>(metas.size()));
    for (std::uint32_t i = 0; i < n; ++i) {
        if (metas[i].state == SlotState::Empty && !bit(reserved_, i)) {
            set_bit(bitmap_, i);
        } else {
            clear_bit(bitmap_, i);
        }
    }
}

std::optional<std::uint32_t> SlotCache::try_acquire() {
    for (std::uint32_t p = 0; p < capacity_; ++p) {
        std::uint32_t i = hint_ + p;
        if (i >= capacity_) i -= capacity_;
        ++probes_;
        if (bit(bitmap_, i)) {
            clear_bit(bitmap_, i);
            set_bit(reserved_, i);
            hint_ = i + 1 == capacity_ ? 0 : i + 1;
            ++acquires_;
            return i;
        }
    }
    return std::nullopt;
}

void SlotCache::mark_taken(std::uint32_t slot) {
    clear_bit(bitmap_, slot);
    clear_bit(reserved_, slot);
}

void SlotCache::mark_free(std::uint32_t slot) {
    set_bit(bitmap_, slot);
    clear_bit(reserved_, slot);
}

void SlotCache::clear_reservation(std::uint32_t slot) { clear_bit(reserved_, slot); }

std::uint32_t SlotCache::free_count() const {
    std::uint32_t n = 0;
    for (std::uint64_t w : bitmap_) n += static_cast<std::uint32_t>(__builtin_popcountll(w));
    return n;
}

// ---- streaming detokenizer -------------------------------------------------

namespace {

// Length a UTF-8 lead byte announces; 0 for continuation/invalid leads.
int utf8_seq_len(std::uint8_t b) {
    if (b < 0x80) return 1;
    if ((b & 0xE0) == 0xC0) return 2;
    if ((b & 0xF0) == 0xE0) return 3;
    if ((b & 0xF8) == 0xF0) return 4;
    return 0;
}

// Bytes at the tail of `s` that belong to an incomplete (but so far valid)
// UTF-8 sequence; 0 when the tail is complete or already invalid.
std::size_t incomplete_tail(const std::string& s) {
    const std::size_t n = s.size();
    for (std::size_t back = 1; back <= 3 && back <= n; ++back) {
        auto b = static_cast<std::uint8_t>(s[n - back]);
        if ((b & 0xC0) == 0x80) continue;  // continuation, keep walking
        int need = utf8_seq_len(b);
        if (need > 1 && static_cast<std::size_t>(need) > back) return back;
        return 0;  // ASCII, complete sequence, or invalid lead: emit as-is
    }
    return 0;
}

}  // namespace

std::string StreamDetokenizer::push(std::span<const TokenId> ids) {
    if (!tok_) return {};
    for (TokenId id : ids) pending_ += tok_->token_bytes(id);
    std::size_t hold = incomplete_tail(pending_);
    std::string out = pending_.substr(0, pending_.size() - hold);
    pending_.erase(0, pending_.size() - hold);
    return out;
}

std::string StreamDetokenizer::finish() {
    std::string out = std::move(pending_);
    pending_.clear();
    return out;
}

// ---- SSE framing -----------------------------------------------------------

std::string sse_data_event(std::string_view single_line_payload) {
    if (single_line_payload.find('\n') != std::string_view::npos)
        raise(Errc::invalid_argument, "SSE payload must be a single line");
    std::string out = "data: ";
    out += single_line_payload;
    out += "\n\n";
    return out;
}

std::string sse_done_event() { return "data: [DONE]\n\n"; }

std::string completion_chunk_json(std::string_view request_tag, std::string_view model,
                                  std::int64_t created, std::string_view text, bool chat_delta,
                                  const char* finish_reason) {
    nlohmann::json choice;
    choice["index"] = 0;
    if (chat_delta) {
        if (text.empty() && finish_reason) {
            choice["delta"] = nlohmann::json::object();
        } else {
            choice["delta"] = {{"content", std::string(text)}};
        }
    } else {
        choice["text"] = std::string(text);
    }
    choice["finish_reason"] =
        finish_reason ? nlohmann::json(finish_reason) : nlohmann::json(nullptr);
    nlohmann::json j{
        {"id", std::string(request_tag)},
        {"object", chat_delta ? "chat.completion.chunk" : "text_completion"},
        {"created", created},
        {"model", std::string(model)},
        {"choices", nlohmann::json::array({choice})},
    };
    // Model output is arbitrary bytes; replace invalid UTF-8 rather than
    // throwing from inside the delivery path.
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

// ---- request tracking ------------------------------------------------------

const char* status_name(RequestStatus s) {
    switch (s) {
        case RequestStatus::queued: return "QUEUED";
        case RequestStatus::submitted: return "SUBMITTED";
        case RequestStatus::streaming: return "STREAMING";
        case RequestStatus::done: return "DONE";
        case RequestStatus::failed: return "FAILED";
    }
    return "?";
}

// ---- frontend --------------------------------------------------------------

Frontend::Frontend(RingBuffer& ring, Transport& transport, RingRegions regions,
                   FrontendConfig cfg)
    : ring_(ring),
      transport_(transport),
      regions_(regions),
      cfg_(cfg),
      cache_(ring.capacity()),
      slot_owner_(ring.capacity(), 0),
      interval_ns_(cfg.poll_init_ns) {
    if (cfg_.poll_min_ns <= 0 || cfg_.poll_max_ns < cfg_.poll_min_ns)
        raise(Errc::invalid_argument, "poll interval bounds are inverted");
}

RequestRecord* Frontend::find(std::uint64_t request_id) {
    auto it = records_.find(request_id);
    return it == records_.end() ? nullptr : it->second.get();
}

void Frontend::apply_ready_refresh(TimeNs now) {
    if (!refresh_inflight_ || now < refresh_inflight_->second) return;
    auto comps = transport_.poll(cfg_.refresh_qp, 16, now);
    for (const auto& c : comps) {
        if (c.kind != TaskKind::read) continue;
        auto metas = RingBuffer::parse_metadata(c.data);
        cache_.refresh(metas);
    }
    refresh_inflight_.reset();
}

std::optional<std::uint32_t> Frontend::acquire_slot(TimeNs now, EnqueueOutcome& outcome) {
    bool had_inflight = refresh_inflight_.has_value();
    apply_ready_refresh(now);
    bool refreshed = had_inflight && !refresh_inflight_.has_value();

    if (auto slot = cache_.try_acquire()) return slot;

    if (refresh_inflight_) {
        outcome.kind = EnqueueOutcome::Kind::refresh_pending;
        outcome.retry_at = refresh_inflight_->second;
        return std::nullopt;
    }
    if (refreshed) {
        // The forced refresh just landed and the view is still full: reject.
        ++stats_.rejected;
        outcome.kind = EnqueueOutcome::Kind::rejected;
        return std::nullopt;
    }
    TransferTask task;
    task.region = regions_.meta.id;
    task.kind = TaskKind::read;
    task.offset = 0;
    task.length = regions_.meta.length;
    auto res = transport_.post(cfg_.refresh_qp, {std::move(task)}, now);
    if (res.accepted == 0) {
        ++stats_.rejected;
        outcome.kind = EnqueueOutcome::Kind::rejected;
        return std::nullopt;
    }
    ++stats_.forced_refreshes;
    refresh_inflight_ = {res.ids[0], res.batch_complete};
    outcome.kind = EnqueueOutcome::Kind::refresh_pending;
    outcome.retry_at = res.batch_complete;
    return std::nullopt;
}

EnqueueOutcome Frontend::enqueue_request(std::span<const TokenId> prompt,
                                         std::uint32_t max_output, std::uint64_t seed,
                                         TimeNs now, TokenSink sink) {
    if (prompt.empty()) raise(Errc::empty_prompt, "prompt must not be empty");
    if (max_output == 0) raise(Errc::invalid_argument, "max_output must be at least 1");
    if (prompt.size() > ring_.input_quota())
        raise(Errc::capacity_exceeded, "prompt exceeds the per-slot quota");
    if (max_output > ring_.output_quota())
        raise(Errc::capacity_exceeded, "max_output exceeds the per-slot quota");

    std::lock_guard<std::mutex> g(mu_);
    EnqueueOutcome outcome;
    auto slot = acquire_slot(now, outcome);
    if (!slot) return outcome;

    std::uint64_t id = next_request_id_++;
    auto rec = std::make_unique<RequestRecord>();
    rec->request_id = id;
    rec->slot_index = *slot;
    rec->marks.arrival = now;
    rec->input_len = static_cast<std::uint32_t>(prompt.size());
    rec->max_output = max_output;
    rec->seed = seed;
    rec->arrival_seq = arrival_seq_++;
    rec->prompt.assign(prompt.begin(), prompt.end());
    records_.emplace(id, std::move(rec));
    if (sink) sinks_.emplace(id, std::move(sink));
    order_.push_back(id);
    slot_owner_[*slot] = id;
    ++active_count_;
    ++stats_.accepted;

    coalescer_.push_back({id, *slot});
    if (!coalesce_deadline_) coalesce_deadline_ = now + cfg_.coalesce_ns;

    outcome.kind = EnqueueOutcome::Kind::accepted;
    outcome.request_id = id;
    return outcome;
}

std::optional<TimeNs> Frontend::submit_deadline() const {
    std::lock_guard<std::mutex> g(mu_);
    return coalesce_deadline_;
}

std::optional<SubmitBatch> Frontend::flush_submits(TimeNs now, bool force) {
    std::lock_guard<std::mutex> g(mu_);
    if (coalescer_.empty()) return std::nullopt;
    if (!force && now < *coalesce_deadline_) return std::nullopt;

    std::vector<TransferTask> tasks;
    tasks.reserve(coalescer_.size());
    for (const auto& p : coalescer_) {
        RequestRecord* rec = find(p.request_id);
        TransferTask t;
        t.region = regions_.prompt.id;
        t.kind = TaskKind::write;
        t.offset = static_cast<std::uint64_t>(p.slot) * regions_.prompt_stride;
        t.payload = PromptBoxRegion::pack(rec->prompt, rec->max_output, rec->seed,
                                          rec->request_id, rec->arrival_seq);
        t.length = t.payload.size();
        tasks.push_back(std::move(t));
    }
    auto res = transport_.post(cfg_.submit_qp, std::move(tasks), now);
    SubmitBatch batch;
    batch.complete_at = res.batch_complete;
    for (std::size_t i = 0; i < res.accepted; ++i)
        batch.request_ids.push_back(coalescer_[i].request_id);
    coalescer_.erase(coalescer_.begin(), coalescer_.begin() + res.accepted);
    if (coalescer_.empty()) {
        coalesce_deadline_.reset();
    } else {
        coalesce_deadline_ = now + cfg_.coalesce_ns;  // pool ran dry; retry the tail
    }
    if (batch.request_ids.empty()) return std::nullopt;
    return batch;
}

void Frontend::finish_submits(const SubmitBatch& batch, TimeNs now) {
    std::lock_guard<std::mutex> g(mu_);
    // Drain write completions so the task pool recycles.
    transport_.poll(cfg_.submit_qp, batch.request_ids.size() + 16, now);
    for (std::uint64_t id : batch.request_ids) {
        RequestRecord* rec = find(id);
        if (!rec || rec->status != RequestStatus::queued) continue;
        std::uint32_t slot = rec->slot_index;
        if (ring_.transition(slot, SlotState::Empty, SlotState::PrefillPending,
                             Actor::frontend)) {
            rec->status = RequestStatus::submitted;
            rec->marks.submit = now;
            rec->prompt.clear();
            cache_.clear_reservation(slot);
            continue;
        }
        // Stale-free slot: the cached view lied.  Correct the bit and route
        // the request through a fresh reservation.
        ++stats_.stale_flips;
        cache_.mark_taken(slot);
        slot_owner_[slot] = 0;
        rec->slot_index = kNoSlot;
        if (auto retry = cache_.try_acquire()) {
            rec->slot_index = *retry;
            slot_owner_[*retry] = id;
            coalescer_.push_back({id, *retry});
            if (!coalesce_deadline_) coalesce_deadline_ = now + cfg_.coalesce_ns;
        } else {
            rec->status = RequestStatus::failed;
            auto sit = sinks_.find(id);
            if (sit != sinks_.end()) {
                sit->second({}, now, true);
                sinks_.erase(sit);
            }
            --active_count_;
        }
    }
}

void Frontend::build_read_plan(const std::vector<SlotMeta>& metas,
                               std::vector<ReadItem>& plan) {
    plan.clear();
    std::size_t budget = cfg_.max_reads_per_cycle;
    bool capped = false;
    auto consider = [&](std::uint64_t id) {
        RequestRecord* rec = find(id);
        if (!rec || rec->slot_index == kNoSlot) return;
        if (rec->status != RequestStatus::submitted && rec->status != RequestStatus::streaming &&
            rec->status != RequestStatus::failed)
            return;
        const SlotMeta& m = metas[rec->slot_index];
        if (m.request_id != rec->request_id) return;  // snapshot predates our write
        if (m.generated <= rec->last_seen_generated) return;
        if (budget == 0) {
            capped = true;
            return;
        }
        plan.push_back({id, rec->slot_index, rec->last_seen_generated,
                        m.generated - rec->last_seen_generated});
        --budget;
    };
    if (cfg_.urgent_enabled) {
        for (std::uint64_t id : order_) {
            RequestRecord* rec = find(id);
            if (rec && rec->urgent && rec->status != RequestStatus::failed) consider(id);
        }
        for (std::uint64_t id : order_) {
            RequestRecord* rec = find(id);
            if (rec && !(rec->urgent && rec->status != RequestStatus::failed)) consider(id);
        }
    } else {
        for (std::uint64_t id : order_) consider(id);
    }
    if (capped) ++stats_.capped_cycles;
}

void Frontend::deliver(RequestRecord& rec, std::span<const TokenId> ids, TimeNs now) {
    if (ids.empty()) return;
    if (rec.marks.first_token < 0) {
        rec.marks.first_token = now;
        rec.urgent = false;
    }
    if (rec.status == RequestStatus::submitted) rec.status = RequestStatus::streaming;
    rec.streamed_ids.insert(rec.streamed_ids.end(), ids.begin(), ids.end());
    for (std::size_t k = 0; k < ids.size(); ++k) rec.token_times.push_back(now);
    rec.tokens_streamed += static_cast<std::uint32_t>(ids.size());
    rec.last_seen_generated += static_cast<std::uint32_t>(ids.size());
    rec.marks.last_token = now;
    stats_.tokens_delivered += ids.size();
    cycle_delivered_ += ids.size();
    auto sit = sinks_.find(rec.request_id);
    if (sit != sinks_.end()) sit->second(ids, now, false);
}

void Frontend::finalize(RequestRecord& rec, TimeNs now) {
    auto sit = sinks_.find(rec.request_id);
    if (sit != sinks_.end()) {
        sit->second({}, now, true);
        sinks_.erase(sit);
    }
    std::uint32_t slot = rec.slot_index;
    if (slot != kNoSlot && ring_.reclaim(slot)) {
        slot_owner_[slot] = 0;
        cache_.mark_free(slot);
        rec.slot_index = kNoSlot;
    }
    if (rec.status != RequestStatus::failed) rec.status = RequestStatus::done;
    --active_count_;
}

ReaderOutcome Frontend::advance_reader(TimeNs now) {
    std::lock_guard<std::mutex> g(mu_);
    ReaderOutcome out;

    if (phase_ == ReaderPhase::wait) {
        if (now < cycle_start_) {
            out.next_event = cycle_start_;
            return out;
        }
        TransferTask task;
        task.region = regions_.meta.id;
        task.kind = TaskKind::read;
        task.offset = 0;
        task.length = regions_.meta.length;
        auto res = transport_.post(cfg_.reader_qp, {std::move(task)}, now);
        if (res.accepted == 0) {  // pool exhausted; back off one interval
            cycle_start_ = now + interval_ns_;
            out.next_event = cycle_start_;
            return out;
        }
        phase_ = ReaderPhase::meta_wait;
        phase_ready_ = res.batch_complete;
        out.next_event = phase_ready_;
        return out;
    }

    if (phase_ == ReaderPhase::meta_wait) {
        if (now < phase_ready_) {
            out.next_event = phase_ready_;
            return out;
        }
        auto comps = transport_.poll(cfg_.reader_qp, 4, now);
        metas_.clear();
        for (const auto& c : comps)
            if (c.kind == TaskKind::read && c.data.size() == regions_.meta.length)
                metas_ = RingBuffer::parse_metadata(c.data);
        cache_.refresh(metas_);
        build_read_plan(metas_, plan_);
        if (plan_.empty()) {
            finish_cycle(now, out);
            return out;
        }
        std::vector<TransferTask> tasks;
        tasks.reserve(plan_.size());
        for (const auto& item : plan_) {
            TransferTask t;
            t.region = regions_.output.id;
            t.kind = TaskKind::read;
            t.offset = (static_cast<std::uint64_t>(item.slot) * ring_.output_quota() +
                        item.from) *
                       4;
            t.length = static_cast<std::uint64_t>(item.count) * 4;
            tasks.push_back(std::move(t));
        }
        auto res = transport_.post(cfg_.reader_qp, std::move(tasks), now);
        plan_.resize(res.accepted);  // pool-trimmed tail is retried next cycle
        stats_.reads_posted += res.accepted;
        if (plan_.empty()) {
            finish_cycle(now, out);
            return out;
        }
        phase_ = ReaderPhase::reads_wait;
        phase_ready_ = res.batch_complete;
        out.next_event = phase_ready_;
        return out;
    }

    // reads_wait
    if (now < phase_ready_) {
        out.next_event = phase_ready_;
        return out;
    }
    auto comps = transport_.poll(cfg_.reader_qp, plan_.size() + 4, now);
    for (std::size_t k = 0; k < comps.size() && k < plan_.size(); ++k) {
        const auto& item = plan_[k];
        const auto& data = comps[k].data;
        RequestRecord* rec = find(item.request_id);
        if (!rec) continue;
        std::size_t n = data.size() / 4;
        std::vector<TokenId> ids(n);
        for (std::size_t i = 0; i < n; ++i) ids[i] = get_u32(data.data() + i * 4);
        if (rec->status == RequestStatus::failed) {
            // Client is gone: account the drain, deliver nothing.
            rec->last_seen_generated += static_cast<std::uint32_t>(n);
        } else {
            deliver(*rec, ids, now);
        }
    }
    finish_cycle(now, out);
    return out;
}

// Completion sweep + interval adaptation; closes the current reader cycle.
void Frontend::finish_cycle(TimeNs now, ReaderOutcome& out) {
    std::size_t finalized = 0;
    for (std::uint64_t id : order_) {
        RequestRecord* rec = find(id);
        if (!rec || rec->slot_index == kNoSlot) continue;
        if (rec->status != RequestStatus::submitted && rec->status != RequestStatus::streaming &&
            rec->status != RequestStatus::failed)
            continue;
        if (rec->slot_index >= metas_.size()) continue;
        const SlotMeta& m = metas_[rec->slot_index];
        if (m.request_id != rec->request_id) continue;
        if (m.state == SlotState::DecodeCompleted && rec->last_seen_generated == m.generated) {
            finalize(*rec, now);
            ++finalized;
        }
    }
    if (finalized > 0) {
        std::erase_if(order_, [this](std::uint64_t id) {
            RequestRecord* rec = find(id);
            return !rec || ((rec->status == RequestStatus::done ||
                             rec->status == RequestStatus::failed) &&
                            rec->slot_index == kNoSlot);
        });
    }
    if (cycle_delivered_ > 0) {
        interval_ns_ = std::max(cfg_.poll_min_ns, interval_ns_ / 2);
    } else {
        interval_ns_ = std::min(cfg_.poll_max_ns, interval_ns_ * 2);
    }
    ++stats_.reader_cycles;
    phase_ = ReaderPhase::wait;
    cycle_start_ = now + interval_ns_;
    out.delivered = cycle_delivered_;
    out.finalized = finalized;
    out.next_event = cycle_start_;
    out.cycle_finished = true;
    cycle_delivered_ = 0;
}

void Frontend::fail_request(std::uint64_t request_id) {
    std::lock_guard<std::mutex> g(mu_);
    RequestRecord* rec = find(request_id);
    if (!rec) return;
    if (rec->status == RequestStatus::done || rec->status == RequestStatus::failed) return;
    sinks_.erase(request_id);
    if (rec->status == RequestStatus::queued) {
        // Never hit the wire: drop the reservation and the coalescer entry.
        std::erase_if(coalescer_,
                      [&](const PendingSubmit& p) { return p.request_id == request_id; });
        if (coalescer_.empty()) coalesce_deadline_.reset();
        if (rec->slot_index != kNoSlot) {
            cache_.mark_free(rec->slot_index);
            slot_owner_[rec->slot_index] = 0;
            rec->slot_index = kNoSlot;
        }
        --active_count_;
    }
    // Submitted or streaming: keep the slot; the reader drains the device's
    // output silently and reclaims at completion.
    rec->status = RequestStatus::failed;
}

RequestRecord Frontend::snapshot_request(std::uint64_t request_id) const {
    std::lock_guard<std::mutex> g(mu_);
    auto it = records_.find(request_id);
    if (it == records_.end()) raise(Errc::invalid_argument, "unknown request id");
    return *it->second;
}

std::vector<std::uint64_t> Frontend::request_ids() const {
    std::lock_guard<std::mutex> g(mu_);
    std::vector<std::uint64_t> ids;
    ids.reserve(records_.size());
    for (const auto& [id, rec] : records_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::size_t Frontend::active_requests() const {
    std::lock_guard<std::mutex> g(mu_);
    return active_count_;
}

bool Frontend::all_terminal() const {
    std::lock_guard<std::mutex> g(mu_);
    return active_count_ == 0;
}

}  // namespace devserve
