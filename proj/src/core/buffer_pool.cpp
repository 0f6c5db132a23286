#include "difache/core/buffer_pool.hpp"

#include <algorithm>
#include <iterator>
#include <stdexcept>

#include "difache/common.hpp"

namespace difache::core {

BufferPool::BufferPool(std::uint64_t bytes, std::uint32_t chunk_bytes)
    : chunks_(chunk_bytes ? bytes / chunk_bytes : 0), chunk_(chunk_bytes) {
  if (chunk_bytes == 0) throw ConfigError("chunk size must be positive");
  reset();
}

void BufferPool::reset() {
  runs_.clear();
  if (chunks_) runs_[0] = chunks_;
  free_ = chunks_;
}

std::uint32_t BufferPool::chunks_for(std::uint64_t bytes) const {
  return static_cast<std::uint32_t>((bytes + chunk_ - 1) / chunk_);
}

std::optional<std::uint32_t> BufferPool::allocate(std::uint64_t bytes) {
  std::uint64_t need = std::max<std::uint64_t>(1, chunks_for(bytes));
  for (auto it = runs_.begin(); it != runs_.end(); ++it) {
    if (it->second < need) continue;
    std::uint64_t start = it->first, len = it->second;
    runs_.erase(it);
    if (len > need) runs_[start + need] = len - need;
    free_ -= need;
    return static_cast<std::uint32_t>(start * chunk_);
  }
  return std::nullopt;
}

void BufferPool::release(std::uint32_t offset, std::uint64_t bytes) {
  std::uint64_t start = offset / chunk_;
  std::uint64_t len = std::max<std::uint64_t>(1, chunks_for(bytes));
  auto next = runs_.lower_bound(start);
  if (next != runs_.end() && next->first < start + len)
    throw std::logic_error("buffer pool double free");
  if (next != runs_.begin()) {
    auto prev = std::prev(next);
    if (prev->first + prev->second > start) throw std::logic_error("buffer pool double free");
    if (prev->first + prev->second == start) {
      start = prev->first;
      len += prev->second;
      runs_.erase(prev);
    }
  }
  if (next != runs_.end() && next->first == start + len) {
    len += next->second;
    runs_.erase(next);
  }
  runs_[start] = len;
  free_ += std::max<std::uint64_t>(1, chunks_for(bytes));
}

bool BufferPool::consistent() const {
  std::uint64_t end = 0, total = 0;
  bool first = true;
  for (auto& [s, l] : runs_) {
    if (l == 0 || (!first && s <= end)) return false;
    end = s + l;
    total += l;
    first = false;
  }
  return end <= chunks_ && total == free_;
}

}  // namespace difache::core
