#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "devserve/clock.hpp"
#include "devserve/errors.hpp"

namespace devserve {

// A registered memory window the remote side can read or write without any
// code running on the owning plane.  Implementations project bytes out of
// (or into) the structure backing the region.
class Region {
  public:
    virtual ~Region() = default;
    virtual std::uint64_t length() const = 0;
    virtual bool readable() const { return true; }
    virtual bool writable() const { return false; }
    virtual void read(std::uint64_t offset, std::uint64_t len, std::uint8_t* dst) const;
    virtual void write(std::uint64_t offset, std::uint64_t len, const std::uint8_t* src);
};

// Plain memory region over caller-owned bytes.
class SpanRegion final : public Region {
  public:
    SpanRegion(std::uint8_t* base, std::uint64_t length, bool writable)
        : base_(base), length_(length), writable_(writable) {}
    std::uint64_t length() const override { return length_; }
    bool writable() const override { return writable_; }
    void read(std::uint64_t offset, std::uint64_t len, std::uint8_t* dst) const override;
    void write(std::uint64_t offset, std::uint64_t len, const std::uint8_t* src) override;

  private:
    std::uint8_t* base_;
    std::uint64_t length_;
    bool writable_;
};

struct RegionHandle {
    std::uint32_t id = 0;
    std::uint64_t length = 0;
    bool writable = false;
};

enum class TaskKind { read, write };

using TaskId = std::uint64_t;

struct TransferTask {
    std::uint32_t region = 0;
    TaskKind kind = TaskKind::read;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
    std::vector<std::uint8_t> payload;  // writes only; copied at post time
};

struct Completion {
    TaskId id = 0;
    TaskKind kind = TaskKind::read;
    std::vector<std::uint8_t> data;  // read results, captured at delivery
};

struct PostResult {
    std::size_t accepted = 0;
    std::vector<TaskId> ids;
    std::vector<TimeNs> complete_at;  // parallel to ids
    TimeNs batch_complete = 0;
};

struct TransportConfig {
    TimeNs c_fixed_ns = 2 * kUs;  // per posted batch
    TimeNs c_byte_ns = 5;         // per transferred byte
    std::uint32_t cq_depth = 4096;
    std::uint32_t task_pool = 8192;
    std::uint32_t queue_pairs = 4;
};

// Latency-accounted emulation of a one-sided RDMA NIC.  Completion order is
// FIFO per queue pair; a coalesced post shares a single fixed overhead.  The
// caller supplies `now` so the same instance serves both the virtual and the
// wall timeline.
class Transport {
  public:
    explicit Transport(TransportConfig cfg = {});

    RegionHandle register_region(const std::string& name, std::shared_ptr<Region> region);
    RegionHandle lookup_region(const std::string& name) const;

    // Posts up to tasks.size() transfers on one queue pair.  Fewer are
    // accepted when the task pool runs dry; the tail of `tasks` is dropped in
    // that case and the caller may re-post it later.
    PostResult post(std::uint32_t qp, std::vector<TransferTask> tasks, TimeNs now);

    // Delivers at most max_completions tasks whose completion time has
    // passed, in post order.  Read data is captured here.
    std::vector<Completion> poll(std::uint32_t qp, std::size_t max_completions, TimeNs now);

    std::optional<TimeNs> next_completion(std::uint32_t qp) const;

    std::size_t in_flight() const;
    std::uint32_t task_pool_free() const;

    // Wiring a device-plane callback into the datapath is exactly the defect
    // the audit exists to catch; production never registers one.
    void register_device_plane_hook(std::function<void(TaskId)> hook);
    std::uint64_t one_sided_violations() const;

    const TransportConfig& config() const { return cfg_; }

  private:
    struct TaskRec {
        TaskId id;
        std::uint32_t region;
        TaskKind kind;
        std::uint64_t offset;
        std::uint64_t length;
        TimeNs complete_at;
    };

    TransportConfig cfg_;
    mutable std::mutex mu_;
    std::vector<std::shared_ptr<Region>> regions_;
    std::unordered_map<std::string, std::uint32_t> region_names_;
    std::vector<std::deque<TaskRec>> queues_;
    TaskId next_id_ = 1;
    std::uint32_t pool_free_;
    std::function<void(TaskId)> device_hook_;
    std::uint64_t violations_ = 0;
};

}  // namespace devserve
