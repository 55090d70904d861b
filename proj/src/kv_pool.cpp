#include "devserve/kv_pool.hpp"

namespace devserve {

KvPagePool::KvPagePool(std::uint32_t page_size, std::uint32_t total_pages)
    : page_size_(page_size), total_pages_(total_pages) {
    if (page_size == 0 || total_pages == 0)
        raise(Errc::invalid_size, "page size and pool size must be positive");
    free_list_.reserve(total_pages);
    for (std::uint32_t i = total_pages; i > 0; --i) free_list_.push_back(i - 1);
}

std::optional<std::vector<std::uint32_t>> KvPagePool::alloc(std::uint64_t request_id,
                                                            std::uint64_t token_count) {
    if (token_count == 0) raise(Errc::invalid_argument, "zero-token KV allocation");
    std::uint32_t need = pages_for(token_count, page_size_);
    std::lock_guard<std::mutex> g(mu_);
    if (owned_.count(request_id))
        raise(Errc::invalid_argument, "request already holds KV pages");
    if (need > free_list_.size()) return std::nullopt;
    std::vector<std::uint32_t> pages(free_list_.end() - need, free_list_.end());
    free_list_.resize(free_list_.size() - need);
    owned_.emplace(request_id, pages);
    return pages;
}

void KvPagePool::free(std::uint64_t request_id) {
    std::lock_guard<std::mutex> g(mu_);
    auto it = owned_.find(request_id);
    if (it == owned_.end()) raise(Errc::invalid_argument, "request holds no KV pages");
    free_list_.insert(free_list_.end(), it->second.begin(), it->second.end());
    owned_.erase(it);
}

bool KvPagePool::holds(std::uint64_t request_id) const {
    std::lock_guard<std::mutex> g(mu_);
    return owned_.count(request_id) != 0;
}

std::uint32_t KvPagePool::pages_of(std::uint64_t request_id) const {
    std::lock_guard<std::mutex> g(mu_);
    auto it = owned_.find(request_id);
    return it == owned_.end() ? 0 : static_cast<std::uint32_t>(it->second.size());
}

std::uint32_t KvPagePool::free_pages() const {
    std::lock_guard<std::mutex> g(mu_);
    return static_cast<std::uint32_t>(free_list_.size());
}

std::uint32_t KvPagePool::allocated_pages() const {
    std::lock_guard<std::mutex> g(mu_);
    std::uint32_t n = 0;
    for (const auto& [id, pages] : owned_) n += static_cast<std::uint32_t>(pages.size());
    return n;
}

}  // namespace devserve
