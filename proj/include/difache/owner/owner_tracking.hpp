#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "difache/common.hpp"
#include "difache/fabric/fabric.hpp"

namespace difache::owner {

enum class TrackingMode { kBroadcast, kOwnerSets };
enum class TrackingPolicy { kBroadcast, kOwnerSets, kAuto };

const char* to_string(TrackingMode m);
TrackingPolicy parse_policy(const std::string& s);
// kAuto switches to owner sets once the live CN count exceeds `threshold`.
TrackingMode resolve(TrackingPolicy p, std::size_t live_cns, std::size_t threshold = 32);

inline std::uint64_t owner_bit(std::uint16_t cn) { return std::uint64_t{1} << (cn % 64); }

// Live CNs whose residue class is set in `bits`, minus the writer.
std::vector<std::uint16_t> owners_from_bits(std::uint64_t bits, std::uint16_t writer,
                                            std::span<const std::uint16_t> live);

// Where each MN keeps its owner-set directory: `slots` entries of
// {key word, owner-set word}, linear probing from hash(key).
struct DirectoryLayout {
  std::uint64_t base = std::uint64_t{1} << 41;
  std::uint64_t slots = std::uint64_t{1} << 21;
  std::uint32_t max_probes = 64;

  std::uint64_t region_end() const { return base + slots * 16; }
};

// Owner-set operations against MN memory, all through fabric atomics. Batch
// forms advance every entry's CAS loop in lock step so one fabric batch
// carries one attempt per entry.
class OwnerDirectory {
 public:
  OwnerDirectory(fabric::Fabric& fab, DirectoryLayout layout) : fab_(fab), layout_(layout) {}

  const DirectoryLayout& layout() const { return layout_; }

  // Address of the owner-set word for each key. Throws DirectoryFull for an
  // entry only in the single-key form; the batch form leaves it empty.
  RemoteAddr ensure_owner_set(fabric::IoContext& io, std::uint64_t key);
  std::vector<std::optional<RemoteAddr>> ensure_owner_sets(fabric::IoContext& io,
                                                           std::span<const std::uint64_t> keys);

  // Sets bit (cn mod 64); returns once the bit is observed set.
  void record_owner(fabric::IoContext& io, RemoteAddr set, std::uint16_t cn,
                    std::uint64_t hint = 0);
  void record_owners(fabric::IoContext& io, std::span<const RemoteAddr> sets, std::uint16_t cn,
                     std::span<const std::uint64_t> hints = {});

  // Swaps each set to just the writer's bit and returns the pre-swap value.
  std::uint64_t acquire(fabric::IoContext& io, RemoteAddr set, std::uint16_t writer,
                        std::uint64_t hint = 0);
  std::vector<std::uint64_t> acquire_all(fabric::IoContext& io, std::span<const RemoteAddr> sets,
                                         std::uint16_t writer,
                                         std::span<const std::uint64_t> hints = {});

  std::vector<std::uint16_t> acquire_and_collect_owners(fabric::IoContext& io, RemoteAddr set,
                                                        std::uint16_t writer,
                                                        std::span<const std::uint16_t> live,
                                                        std::uint64_t hint = 0);

  // Broadcast: every live CN but the writer. Owner sets: acquire-and-collect.
  std::vector<std::uint16_t> owners_for_invalidation(fabric::IoContext& io, std::uint64_t key,
                                                     std::uint16_t writer, TrackingMode mode,
                                                     std::span<const std::uint16_t> live);

  // Reads the owner-set word for key straight from MN memory (tests and
  // checkers); nullopt when the key has no entry.
  std::optional<std::uint64_t> peek(const fabric::PagedMemory& mn_mem, std::uint64_t key) const;

  // Coordinator use: drop every directory entry on an MN.
  static void clear(fabric::PagedMemory& mn_mem, const DirectoryLayout& layout);

 private:
  std::uint64_t slot_of(std::uint64_t key, std::uint32_t probe) const;

  fabric::Fabric& fab_;
  DirectoryLayout layout_;
};

}  // namespace difache::owner
