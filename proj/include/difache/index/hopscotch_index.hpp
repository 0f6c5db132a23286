#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>

#include "difache/fabric/paged_memory.hpp"

namespace difache::index {

struct IndexConfig {
  static constexpr std::uint32_t kNeighborhood = 16;  // H
  static constexpr std::uint32_t kBucketsPerGroup = 4;
  static constexpr std::uint32_t kGroupBytes = 64;

  std::uint64_t num_buckets = 2097152;
  // Linear scan limit when looking for an empty bucket to hop back.
  std::uint32_t max_probe = 4096;

  void validate() const;
  // Buckets actually laid out: home buckets plus H-1 overflow buckets so a
  // neighbourhood never wraps.
  std::uint64_t total_buckets() const { return num_buckets + kNeighborhood - 1; }
  std::uint64_t num_groups() const {
    return (total_buckets() + kBucketsPerGroup - 1) / kBucketsPerGroup;
  }
  std::uint64_t region_bytes() const { return num_groups() * kGroupBytes; }
  std::uint64_t home_bucket(std::uint64_t key) const;
};

// Group layout (one cache line, all fields little-endian words):
//   +0  lock word (0 = free, else holder id)
//   +8  key[0..3]             (0 = empty)
//   +40 value[0..3] as u32
//   +56 hop_info[0..3] as u16 (bit i: bucket home+i holds a key homed here)
class HopscotchIndex {
 public:
  using Key = std::uint64_t;
  using Value = std::uint32_t;

  enum class InsertStatus { kInserted, kAlreadyPresent, kFull };
  struct InsertResult {
    InsertStatus status;
    Value value;  // inserted value, or the existing one
  };
  struct Victim {
    Key key;
    Value value;
  };
  // Lower rank is evicted first; nullopt marks an entry that must stay.
  using VictimRank = std::function<std::optional<std::uint64_t>(Key, Value)>;

  HopscotchIndex(fabric::PagedMemory& mem, std::uint64_t base, IndexConfig cfg,
                 std::uint64_t lock_id);

  const IndexConfig& config() const { return cfg_; }
  std::uint64_t base() const { return base_; }
  std::uint64_t home_bucket(Key k) const { return cfg_.home_bucket(k); }

  InsertResult insert(Key k, Value v);
  std::optional<Value> lookup(Key k) const;
  // Picks and removes a victim among the buckets of k's neighbourhood.
  std::optional<Victim> evict(Key k, const VictimRank& rank);
  bool erase(Key k);

  // Invoked after every store while an insert/evict holds its locks, and
  // while spinning on a busy lock. Schedule tests hook executor yields here.
  void set_yield(std::function<void()> fn) { yield_ = std::move(fn); }

  std::uint64_t size() const { return size_; }
  // Empty string when the neighbourhood and hop_info invariants hold.
  std::string check_invariants() const;
  // Direct bucket access for tests.
  Key bucket_key(std::uint64_t b) const;
  Value bucket_value(std::uint64_t b) const;
  std::uint16_t hop_info(std::uint64_t b) const;

  // Remote lookup support: the byte range covering k's neighbourhood, and a
  // search over a raw copy of that range.
  struct ProbeRange {
    std::uint64_t offset;  // absolute offset in the owner's region
    std::uint32_t len;
    std::uint64_t first_group;
  };
  static ProbeRange probe_range(const IndexConfig& cfg, std::uint64_t base, Key k);
  enum class SnapshotStatus { kFound, kNotFound, kLocked };
  struct SnapshotResult {
    SnapshotStatus status;
    Value value;
  };
  static SnapshotResult search_snapshot(const IndexConfig& cfg, Key k,
                                        std::span<const std::byte> snap,
                                        std::uint64_t first_group);

 private:
  std::uint64_t group_off(std::uint64_t g) const { return base_ + g * IndexConfig::kGroupBytes; }
  void set_key(std::uint64_t b, Key k);
  void set_value(std::uint64_t b, Value v);
  void set_hop(std::uint64_t b, std::uint16_t h);
  void lock_group(std::uint64_t g);
  void unlock_group(std::uint64_t g);
  void step() const {
    if (yield_) yield_();
  }

  fabric::PagedMemory& mem_;
  std::uint64_t base_;
  IndexConfig cfg_;
  std::uint64_t lock_id_;
  std::uint64_t size_ = 0;
  std::function<void()> yield_;
};

}  // namespace difache::index
