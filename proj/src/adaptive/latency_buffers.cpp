#include "difache/adaptive/latency_buffers.hpp"

#include <algorithm>

namespace difache::adaptive {

LatencyBuffers::LatencyBuffers(int workers, std::size_t capacity, Latencies defaults)
    : capacity_(capacity), defaults_(defaults), rings_(std::max(workers, 1)), cached_(defaults) {
  if (capacity == 0) throw ConfigError("latency buffer capacity must be positive");
}

void LatencyBuffers::record(int worker, EventClass e, Nanos latency) {
  if (worker < 0 || worker >= workers()) worker = 0;
  Ring& r = rings_[worker][static_cast<std::size_t>(e)];
  if (r.data.size() < capacity_) {
    r.data.push_back(latency);
  } else {
    r.data[r.next] = latency;
  }
  r.next = (r.next + 1) % capacity_;
  dirty_ = true;
}

std::size_t LatencyBuffers::samples(int worker, EventClass e) const {
  return rings_.at(worker)[static_cast<std::size_t>(e)].data.size();
}

double LatencyBuffers::median(int worker, EventClass e) const {
  std::vector<Nanos> v = rings_.at(worker)[static_cast<std::size_t>(e)].data;
  if (v.empty()) return 0;
  auto mid = v.begin() + v.size() / 2;
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2) return static_cast<double>(*mid);
  Nanos hi = *mid;
  Nanos lo = *std::max_element(v.begin(), mid);
  return (static_cast<double>(lo) + static_cast<double>(hi)) / 2;
}

Latencies LatencyBuffers::aggregate() {
  if (!dirty_) return cached_;
  auto agg = [&](EventClass e, double fallback) {
    double sum = 0;
    int n = 0;
    for (int w = 0; w < workers(); ++w) {
      if (samples(w, e) == 0) continue;
      sum += median(w, e);
      ++n;
    }
    return n ? sum / n : fallback;
  };
  cached_.t_rhit = agg(EventClass::kReadHit, defaults_.t_rhit);
  cached_.t_rmiss = agg(EventClass::kReadMiss, defaults_.t_rmiss);
  cached_.t_wcached = agg(EventClass::kWriteCached, defaults_.t_wcached);
  cached_.t_rb = agg(EventClass::kReadBypass, defaults_.t_rb);
  cached_.t_wb = agg(EventClass::kWriteBypass, defaults_.t_wb);
  dirty_ = false;
  return cached_;
}

}  // namespace difache::adaptive
