#include "difache/bench/metrics.hpp"

#include <algorithm>
#include <cstdio>

namespace difache::bench {

void Metrics::record(EventClass e, Nanos latency, std::uint64_t bytes, Nanos now) {
  auto& s = events[static_cast<std::size_t>(e)];
  ++s.count;
  s.bytes += bytes;
  s.latency.add(static_cast<std::uint64_t>(std::max<Nanos>(latency, 0)));
  op_log.push_back(static_cast<std::uint8_t>(e));
  if (bin > 0) {
    auto b = static_cast<std::size_t>(now / bin);
    if (timeline.size() <= b) timeline.resize(b + 1, 0);
    ++timeline[b];
  }
}

std::uint64_t Metrics::ops() const {
  std::uint64_t n = 0;
  for (const auto& s : events) n += s.count;
  return n;
}

std::uint64_t Metrics::reads() const {
  return count(EventClass::kReadHit) + count(EventClass::kReadMiss) +
         count(EventClass::kReadBypass);
}

double Metrics::hit_rate() const {
  auto r = reads();
  return r ? static_cast<double>(count(EventClass::kReadHit)) / static_cast<double>(r) : 0.0;
}

double Metrics::throughput() const {
  return sim_time > 0 ? static_cast<double>(ops()) * 1e9 / static_cast<double>(sim_time) : 0.0;
}

double Metrics::hit_rate_window(std::size_t from, std::size_t to) const {
  to = std::min(to, op_log.size());
  std::uint64_t reads = 0, hits = 0;
  for (std::size_t i = from; i < to; ++i) {
    auto e = static_cast<EventClass>(op_log[i]);
    if (!is_read(e)) continue;
    ++reads;
    if (e == EventClass::kReadHit) ++hits;
  }
  return reads ? static_cast<double>(hits) / static_cast<double>(reads) : 0.0;
}

std::string Metrics::csv(bool with_timeline) const {
  std::string out = "event_class,count,p50,p99,bytes\n";
  char line[256];
  for (std::size_t i = 0; i < kEventClasses; ++i) {
    const auto& s = events[i];
    std::snprintf(line, sizeof line, "%s,%llu,%llu,%llu,%llu\n",
                  to_string(static_cast<EventClass>(i)), static_cast<unsigned long long>(s.count),
                  static_cast<unsigned long long>(s.latency.quantile(0.5)),
                  static_cast<unsigned long long>(s.latency.quantile(0.99)),
                  static_cast<unsigned long long>(s.bytes));
    out += line;
  }
  out += "throughput,hit_rate,invalidations,mn_bytes\n";
  std::snprintf(line, sizeof line, "%.1f,%.6f,%llu,%llu\n", throughput(), hit_rate(),
                static_cast<unsigned long long>(invalidations),
                static_cast<unsigned long long>(mn_bytes));
  out += line;
  if (with_timeline && bin > 0) {
    out += "time_ns,ops\n";
    for (std::size_t b = 0; b < timeline.size(); ++b) {
      std::snprintf(line, sizeof line, "%lld,%llu\n", static_cast<long long>(b * bin),
                    static_cast<unsigned long long>(timeline[b]));
      out += line;
    }
  }
  return out;
}

}  // namespace difache::bench
