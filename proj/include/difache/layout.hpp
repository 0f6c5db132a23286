#pragma once

#include <cstdint>

#include "difache/common.hpp"
#include "difache/owner/owner_tracking.hpp"

namespace difache {

// Fixed placement of protocol metadata inside every MN region. Objects are
// allocated from kFirstObjectOffset upward and must stay below mode_lock_base.
struct MnLayout {
  std::uint64_t mode_lock_base = std::uint64_t{1} << 40;
  std::uint32_t mode_locks = 65536;
  owner::DirectoryLayout directory;
  // Application lock words used by the benchmark client.
  std::uint64_t app_lock_base = std::uint64_t{1} << 42;
  std::uint64_t region_size = std::uint64_t{1} << 44;

  RemoteAddr mode_lock(std::uint64_t key) const {
    std::uint64_t slot = util::mix64(key ^ 0x6d6f64656c6f636bULL) % mode_locks;
    return {NodeId::mn(key_mn(key)), mode_lock_base + 8 * slot};
  }
};

class FailureReporter {
 public:
  virtual ~FailureReporter() = default;
  // A fabric op from src to dst timed out.
  virtual void report_timeout(NodeId src, NodeId dst) = 0;
};

}  // namespace difache
