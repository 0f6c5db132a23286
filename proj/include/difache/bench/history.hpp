#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace difache::bench {

inline constexpr std::uint64_t kNever = std::numeric_limits<std::uint64_t>::max();

// One completed (or, for writes, possibly incomplete) operation. Times are
// global event stamps.
struct HistoryOp {
  std::uint64_t object = 0;
  bool write = false;
  std::uint64_t version = 0;
  std::uint64_t start = 0;
  std::uint64_t end = 0;  // kNever: write outcome unknown
  int client = 0;
};

struct Violation {
  std::size_t index = 0;  // into the checked history
  std::uint64_t object = 0;
  std::uint64_t version = 0;
  std::uint64_t lower = 0;  // newest version completed before the read began
  std::uint64_t upper = 0;  // newest version started before the read ended
  std::string describe() const;
};

struct ValidationResult {
  bool ok = true;
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
  std::uint64_t violations = 0;
  std::optional<Violation> first;
};

// Every accepted read must return a version no older than any write that
// completed before it began, and no newer than any write started before it
// ended. Version 0 is the initial image.
ValidationResult validate_history(std::span<const HistoryOp> ops);

class History {
 public:
  void add(const HistoryOp& op) {
    if (enabled_) ops_.push_back(op);
  }
  void set_end(std::size_t i, std::uint64_t end) { ops_[i].end = end; }
  void set_enabled(bool on) { enabled_ = on; }
  const std::vector<HistoryOp>& ops() const { return ops_; }
  ValidationResult validate() const { return validate_history(ops_); }

 private:
  bool enabled_ = true;
  std::vector<HistoryOp> ops_;
};

}  // namespace difache::bench
