#pragma once

#include <cstddef>
#include <cstdint>

#include "difache/adaptive/profit.hpp"
#include "difache/common.hpp"

namespace difache::adaptive {

// Per-object policy knobs shared by every CN.
struct AdaptiveConfig {
  bool enabled = true;  // false: every object is always cached
  double default_threshold = 0.75;
  std::uint16_t default_interval = 8;
  std::uint16_t promoted_interval = 255;  // interval after an object's first switch
  std::uint64_t spin_bound = 1000000;     // switching-flag spins before SwitchStuck
  Nanos spin_backoff = 100;
  std::size_t latency_samples = 256;
  Latencies default_latencies;
};

// Counter-word addend for one access: a single FAA bumps every lane.
std::uint64_t counter_addend(bool is_read, bool hit);

enum class Decision { kKeep, kSwitchOn, kSwitchOff };

struct Evaluation {
  Decision decision = Decision::kKeep;
  std::uint16_t threshold = 0;  // threshold in force after evaluation
};

// End-of-interval decision from the counter snapshot. A cached object first
// refreshes its threshold from the current latency estimates.
Evaluation evaluate(bool mode_on, std::uint64_t counters, std::uint16_t threshold,
                    const Latencies& lat);

}  // namespace difache::adaptive
