#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <unordered_map>

namespace difache::fabric {

// Sparse byte-addressable region. Pages are allocated on first write, so a
// large registered region costs nothing until it is touched. Untouched bytes
// read as zero.
class PagedMemory {
 public:
  static constexpr std::size_t kPageBytes = 4096;
  static constexpr std::size_t kPageWords = kPageBytes / 8;

  explicit PagedMemory(std::uint64_t size) : size_(size) {}

  std::uint64_t size() const { return size_; }
  bool in_bounds(std::uint64_t off, std::uint64_t len) const {
    return off <= size_ && len <= size_ - off;
  }

  void read(std::uint64_t off, std::span<std::byte> out) const;
  void write(std::uint64_t off, std::span<const std::byte> in);

  // 8-byte aligned word access.
  std::uint64_t load(std::uint64_t off) const;
  void store(std::uint64_t off, std::uint64_t v);
  std::uint64_t cas(std::uint64_t off, std::uint64_t expected, std::uint64_t desired);
  std::uint64_t faa(std::uint64_t off, std::uint64_t addend);

  void clear() { pages_.clear(); last_idx_ = ~std::uint64_t{0}; last_page_ = nullptr; }
  // Zeroes [off, off+len); whole pages inside the range are released.
  void zero(std::uint64_t off, std::uint64_t len);
  std::size_t pages_allocated() const { return pages_.size(); }

 private:
  std::uint64_t* page(std::uint64_t idx, bool create) const;

  std::uint64_t size_;
  mutable std::unordered_map<std::uint64_t, std::unique_ptr<std::uint64_t[]>> pages_;
  mutable std::uint64_t last_idx_ = ~std::uint64_t{0};
  mutable std::uint64_t* last_page_ = nullptr;
};

}  // namespace difache::fabric
