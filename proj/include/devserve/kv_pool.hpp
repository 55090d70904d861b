#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

#include "devserve/errors.hpp"

namespace devserve {

// Paged KV bookkeeping.  Pages are opaque ids; the pool only tracks
// ownership.  Allocation happens when a request is claimed for prefill and
// covers its whole lifetime (prompt plus output ceiling), so decode never
// needs a mid-flight allocation.
class KvPagePool {
  public:
    KvPagePool(std::uint32_t page_size, std::uint32_t total_pages);

    static std::uint32_t pages_for(std::uint64_t token_count, std::uint32_t page_size) {
        return static_cast<std::uint32_t>((token_count + page_size - 1) / page_size);
    }

    // nullopt when the pool cannot cover the request; the caller defers
    // admission and retries on a later scan.
    std::optional<std::vector<std::uint32_t>> alloc(std::uint64_t request_id,
                                                    std::uint64_t token_count);

    void free(std::uint64_t request_id);

    bool holds(std::uint64_t request_id) const;
    std::uint32_t pages_of(std::uint64_t request_id) const;

    std::uint32_t page_size() const { return page_size_; }
    std::uint32_t total_pages() const { return total_pages_; }
    std::uint32_t free_pages() const;
    std::uint32_t allocated_pages() const;

  private:
    std::uint32_t page_size_;
    std::uint32_t total_pages_;
    mutable std::mutex mu_;
    std::vector<std::uint32_t> free_list_;
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> owned_;
};

}  // namespace devserve
