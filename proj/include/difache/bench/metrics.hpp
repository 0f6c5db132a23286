#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "difache/common.hpp"
#include "difache/events.hpp"
#include "difache/util/histogram.hpp"

namespace difache::bench {

struct EventStats {
  std::uint64_t count = 0;
  std::uint64_t bytes = 0;
  util::Histogram latency;
};

struct Metrics {
  std::array<EventStats, kEventClasses> events;
  std::uint64_t failed_ops = 0;
  std::uint64_t read_retries = 0;
  Nanos sim_time = 0;            // simulated span of the measured run
  std::uint64_t invalidations = 0;
  std::uint64_t mn_bytes = 0;
  // Event class of every completed op, in completion order.
  std::vector<std::uint8_t> op_log;
  // Completions per time bin (optional timeline output).
  Nanos bin = 0;
  std::vector<std::uint64_t> timeline;

  void record(EventClass e, Nanos latency, std::uint64_t bytes, Nanos now);

  std::uint64_t ops() const;
  std::uint64_t reads() const;
  std::uint64_t writes() const { return ops() - reads(); }
  std::uint64_t count(EventClass e) const { return events[static_cast<std::size_t>(e)].count; }
  double hit_rate() const;
  // Completed ops per simulated second.
  double throughput() const;
  // Hit rate over op_log[from, to).
  double hit_rate_window(std::size_t from, std::size_t to) const;

  std::string csv(bool with_timeline = false) const;
};

}  // namespace difache::bench
