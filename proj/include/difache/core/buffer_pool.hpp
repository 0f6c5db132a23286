#pragma once

#include <cstdint>
#include <map>
#include <optional>

namespace difache::core {

// Cache buffer space carved into fixed-size chunks. An allocation takes the
// fewest whole chunks that fit and is contiguous (first fit over free runs).
class BufferPool {
 public:
  BufferPool(std::uint64_t bytes, std::uint32_t chunk_bytes);

  std::uint32_t chunk_bytes() const { return chunk_; }
  std::uint64_t total_chunks() const { return chunks_; }
  std::uint64_t free_chunks() const { return free_; }
  std::uint32_t chunks_for(std::uint64_t bytes) const;

  // Byte offset of the allocation within the pool.
  std::optional<std::uint32_t> allocate(std::uint64_t bytes);
  void release(std::uint32_t offset, std::uint64_t bytes);
  void reset();

  // Checks the free map is sorted, disjoint and within bounds.
  bool consistent() const;

 private:
  std::uint64_t chunks_;
  std::uint32_t chunk_;
  std::uint64_t free_ = 0;
  std::map<std::uint64_t, std::uint64_t> runs_;  // first chunk -> length
};

}  // namespace difache::core
