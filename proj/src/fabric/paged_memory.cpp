#include "difache/fabric/paged_memory.hpp"

#include <algorithm>
#include <cstring>

namespace difache::fabric {

std::uint64_t* PagedMemory::page(std::uint64_t idx, bool create) const {
  if (idx == last_idx_) return last_page_;
  auto it = pages_.find(idx);
  if (it == pages_.end()) {
    if (!create) return nullptr;
    auto p = std::make_unique<std::uint64_t[]>(kPageWords);  // value-initialized
    it = pages_.emplace(idx, std::move(p)).first;
  }
  last_idx_ = idx;
  last_page_ = it->second.get();
  return last_page_;
}

void PagedMemory::read(std::uint64_t off, std::span<std::byte> out) const {
  std::size_t done = 0;
  while (done < out.size()) {
    std::uint64_t a = off + done;
    std::uint64_t in_page = a % kPageBytes;
    std::size_t n = std::min<std::size_t>(out.size() - done, kPageBytes - in_page);
    const std::uint64_t* p = page(a / kPageBytes, false);
    if (p)
      std::memcpy(out.data() + done, reinterpret_cast<const std::byte*>(p) + in_page, n);
    else
      std::memset(out.data() + done, 0, n);
    done += n;
  }
}

void PagedMemory::write(std::uint64_t off, std::span<const std::byte> in) {
  std::size_t done = 0;
  while (done < in.size()) {
    std::uint64_t a = off + done;
    std::uint64_t in_page = a % kPageBytes;
    std::size_t n = std::min<std::size_t>(in.size() - done, kPageBytes - in_page);
    std::uint64_t* p = page(a / kPageBytes, true);
    std::memcpy(reinterpret_cast<std::byte*>(p) + in_page, in.data() + done, n);
    done += n;
  }
}

std::uint64_t PagedMemory::load(std::uint64_t off) const {
  const std::uint64_t* p = page(off / kPageBytes, false);
  return p ? p[(off % kPageBytes) / 8] : 0;
}

void PagedMemory::store(std::uint64_t off, std::uint64_t v) {
  if (v == 0 && !page(off / kPageBytes, false)) return;
  page(off / kPageBytes, true)[(off % kPageBytes) / 8] = v;
}

std::uint64_t PagedMemory::cas(std::uint64_t off, std::uint64_t expected, std::uint64_t desired) {
  std::uint64_t cur = load(off);
  if (cur == expected) store(off, desired);
  return cur;
}

std::uint64_t PagedMemory::faa(std::uint64_t off, std::uint64_t addend) {
  std::uint64_t cur = load(off);
  store(off, cur + addend);
  return cur;
}

void PagedMemory::zero(std::uint64_t off, std::uint64_t len) {
  std::uint64_t end = off + len;
  std::uint64_t a = off;
  while (a < end) {
    std::uint64_t idx = a / kPageBytes;
    std::uint64_t in_page = a % kPageBytes;
    std::uint64_t n = std::min<std::uint64_t>(end - a, kPageBytes - in_page);
    if (n == kPageBytes) {
      pages_.erase(idx);
      if (idx == last_idx_) {
        last_idx_ = ~std::uint64_t{0};
        last_page_ = nullptr;
      }
    } else if (std::uint64_t* p = page(idx, false)) {
      std::memset(reinterpret_cast<std::byte*>(p) + in_page, 0, n);
    }
    a += n;
  }
}

}  // namespace difache::fabric
