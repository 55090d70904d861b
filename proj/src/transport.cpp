#include "devserve/transport.hpp"

#include <cstring>

namespace devserve {

void Region::read(std::uint64_t, std::uint64_t, std::uint8_t*) const {
    raise(Errc::permission_denied, "region is not readable");
}

void Region::write(std::uint64_t, std::uint64_t, const std::uint8_t*) {
    raise(Errc::permission_denied, "region is not writable");
}

void SpanRegion::read(std::uint64_t offset, std::uint64_t len, std::uint8_t* dst) const {
    std::memcpy(dst, base_ + offset, len);
}

void SpanRegion::write(std::uint64_t offset, std::uint64_t len, const std::uint8_t* src) {
    if (!writable_) raise(Errc::permission_denied, "region is not writable");
    std::memcpy(base_ + offset, src, len);
}

Transport::Transport(TransportConfig cfg) : cfg_(cfg), pool_free_(cfg.task_pool) {
    if (cfg_.queue_pairs == 0) raise(Errc::invalid_argument, "need at least one queue pair");
    queues_.resize(cfg_.queue_pairs);
}

RegionHandle Transport::register_region(const std::string& name, std::shared_ptr<Region> region) {
    std::lock_guard<std::mutex> g(mu_);
    if (!region || region->length() == 0) raise(Errc::invalid_size, "zero-length region");
    if (region_names_.count(name))
        raise(Errc::double_registration, "region '" + name + "' already registered");
    auto id = static_cast<std::uint32_t>(regions_.size());
    regions_.push_back(std::move(region));
    region_names_.emplace(name, id);
    return {id, regions_.back()->length(), regions_.back()->writable()};
}

RegionHandle Transport::lookup_region(const std::string& name) const {
    std::lock_guard<std::mutex> g(mu_);
    auto it = region_names_.find(name);
    if (it == region_names_.end()) raise(Errc::invalid_argument, "unknown region '" + name + "'");
    const auto& r = regions_[it->second];
    return {it->second, r->length(), r->writable()};
}

PostResult Transport::post(std::uint32_t qp, std::vector<TransferTask> tasks, TimeNs now) {
    std::lock_guard<std::mutex> g(mu_);
    if (qp >= queues_.size()) raise(Errc::invalid_argument, "bad queue pair");
    PostResult res;
    TimeNs t = now + cfg_.c_fixed_ns;  // one fixed overhead per coalesced batch
    for (auto& task : tasks) {
        if (pool_free_ == 0) break;
        if (task.region >= regions_.size()) raise(Errc::invalid_argument, "bad region id");
        Region& region = *regions_[task.region];
        if (task.offset + task.length > region.length())
            raise(Errc::region_out_of_bounds, "transfer outside region bounds");
        if (task.kind == TaskKind::write) {
            if (task.payload.size() != task.length)
                raise(Errc::invalid_argument, "write payload length mismatch");
            // Payload lands now; remote visibility is gated by the poster,
            // which flips state only after this task's completion time.
            region.write(task.offset, task.length, task.payload.data());
        } else if (!region.readable()) {
            raise(Errc::permission_denied, "region is not readable");
        }
        t += static_cast<TimeNs>(task.length) * cfg_.c_byte_ns;
        TaskRec rec{next_id_++, task.region, task.kind, task.offset, task.length, t};
        queues_[qp].push_back(rec);
        --pool_free_;
        res.ids.push_back(rec.id);
        res.complete_at.push_back(t);
        ++res.accepted;
    }
    res.batch_complete = res.accepted ? res.complete_at.back() : now;
    if (device_hook_) {
        for (auto id : res.ids) {
            ++violations_;
            device_hook_(id);
        }
    }
    return res;
}

std::vector<Completion> Transport::poll(std::uint32_t qp, std::size_t max_completions, TimeNs now) {
    std::lock_guard<std::mutex> g(mu_);
    if (qp >= queues_.size()) raise(Errc::invalid_argument, "bad queue pair");
    std::vector<Completion> out;
    auto& q = queues_[qp];
    std::size_t budget = std::min<std::size_t>(max_completions, cfg_.cq_depth);
    while (!q.empty() && out.size() < budget && q.front().complete_at <= now) {
        TaskRec rec = q.front();
        q.pop_front();
        Completion c;
        c.id = rec.id;
        c.kind = rec.kind;
        if (rec.kind == TaskKind::read) {
            c.data.resize(rec.length);
            regions_[rec.region]->read(rec.offset, rec.length, c.data.data());
        }
        if (device_hook_) {
            ++violations_;
            device_hook_(rec.id);
        }
        ++pool_free_;
        out.push_back(std::move(c));
    }
    return out;
}

std::optional<TimeNs> Transport::next_completion(std::uint32_t qp) const {
    std::lock_guard<std::mutex> g(mu_);
    if (qp >= queues_.size()) raise(Errc::invalid_argument, "bad queue pair");
    if (queues_[qp].empty()) return std::nullopt;
    return queues_[qp].front().complete_at;
}

std::size_t Transport::in_flight() const {
    std::lock_guard<std::mutex> g(mu_);
    return cfg_.task_pool - pool_free_;
}

std::uint32_t Transport::task_pool_free() const {
    std::lock_guard<std::mutex> g(mu_);
    return pool_free_;
}

void Transport::register_device_plane_hook(std::function<void(TaskId)> hook) {
    std::lock_guard<std::mutex> g(mu_);
    device_hook_ = std::move(hook);
}

std::uint64_t Transport::one_sided_violations() const {
    std::lock_guard<std::mutex> g(mu_);
    return violations_;
}

}  // namespace devserve
