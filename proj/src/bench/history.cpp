#include "difache/bench/history.hpp"

#include <algorithm>
#include <unordered_map>

namespace difache::bench {

std::string Violation::describe() const {
  return "read #" + std::to_string(index) + " of object " + std::to_string(object) +
         " returned version " + std::to_string(version) + ", allowed [" + std::to_string(lower) +
         ", " + std::to_string(upper) + "]";
}

ValidationResult validate_history(std::span<const HistoryOp> ops) {
  struct PerObject {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> by_end;    // end, version
    std::vector<std::pair<std::uint64_t, std::uint64_t>> by_start;  // start, version
    std::vector<std::size_t> reads;
  };
  std::unordered_map<std::uint64_t, PerObject> objs;
  ValidationResult res;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const auto& op = ops[i];
    auto& o = objs[op.object];
    if (op.write) {
      ++res.writes;
      o.by_start.emplace_back(op.start, op.version);
      if (op.end != kNever) o.by_end.emplace_back(op.end, op.version);
    } else {
      ++res.reads;
      o.reads.push_back(i);
    }
  }
  for (auto& [object, o] : objs) {
    auto prefix_max = [](auto& v) {
      std::sort(v.begin(), v.end());
      for (std::size_t i = 1; i < v.size(); ++i) v[i].second = std::max(v[i].second, v[i - 1].second);
    };
    prefix_max(o.by_end);
    prefix_max(o.by_start);
    auto max_before = [](const auto& v, std::uint64_t t) -> std::uint64_t {
      auto it = std::lower_bound(v.begin(), v.end(), std::pair<std::uint64_t, std::uint64_t>{t, 0});
      return it == v.begin() ? 0 : std::prev(it)->second;
    };
    for (std::size_t i : o.reads) {
      const auto& r = ops[i];
      std::uint64_t lo = max_before(o.by_end, r.start);
      std::uint64_t hi = max_before(o.by_start, r.end);
      if (r.version < lo || r.version > hi) {
        ++res.violations;
        if (!res.first || i < res.first->index) res.first = Violation{i, object, r.version, lo, hi};
      }
    }
  }
  res.ok = res.violations == 0;
  return res;
}

}  // namespace difache::bench
