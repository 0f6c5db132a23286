#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "difache/adaptive/profit.hpp"
#include "difache/common.hpp"
#include "difache/events.hpp"

namespace difache::adaptive {

// Per-worker ring buffers of recent event latencies. The CN-wide estimate of
// an event's latency is the mean over workers of each worker's median.
class LatencyBuffers {
 public:
  LatencyBuffers(int workers, std::size_t capacity = 256, Latencies defaults = {});

  void record(int worker, EventClass e, Nanos latency);
  // Classes with no samples anywhere fall back to the defaults.
  Latencies aggregate();
  double median(int worker, EventClass e) const;
  std::size_t samples(int worker, EventClass e) const;
  int workers() const { return static_cast<int>(rings_.size()); }

 private:
  struct Ring {
    std::vector<Nanos> data;
    std::size_t next = 0;
  };
  std::size_t capacity_;
  Latencies defaults_;
  std::vector<std::array<Ring, kEventClasses>> rings_;
  bool dirty_ = true;
  Latencies cached_;
};

}  // namespace difache::adaptive
