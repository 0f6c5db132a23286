#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "difache/baselines/cmcache.hpp"
#include "difache/bench/history.hpp"
#include "difache/bench/metrics.hpp"
#include "difache/bench/trace.hpp"
#include "difache/bench/workload.hpp"
#include "difache/coord/coordinator.hpp"
#include "difache/core/cache_node.hpp"
#include "difache/fabric/fabric.hpp"

namespace difache::bench {

enum class Coherence { kDifache, kDifacheNoac, kCmcache, kNocache };
Coherence parse_coherence(const std::string& s);
const char* to_string(Coherence c);

struct FaultPlan {
  std::optional<std::uint16_t> kill_cn;
  std::uint64_t kill_cn_at = 0;  // attempted-op index
  std::optional<std::uint64_t> kill_mn_at;
  std::uint16_t kill_mn = 0;
  // Recover every killed node this many attempted ops after the last kill.
  std::optional<std::uint64_t> recover_after;

  bool any() const { return kill_cn || kill_mn_at; }
};

struct ExperimentConfig {
  WorkloadSpec workload;
  Coherence coherence = Coherence::kDifache;
  bool deterministic = true;
  const Trace* trace = nullptr;  // replaces the synthetic stream when set
  FaultPlan faults;
  int mns = 1;

  fabric::FabricConfig fabric;
  core::CacheConfig cache;
  baselines::CmConfig cm;
  coord::CoordinatorConfig coord;

  bool record_history = true;
  bool skip_invalidation = false;  // negative control
  bool record_hit_stamps = false;
  std::uint64_t warmup_ops = 0;  // completed ops left out of the metrics
  Nanos timeline_bin = 0;
  std::uint32_t max_read_retries = 100000;
  std::uint64_t lock_retry_cap = 1000000;
  Nanos lock_backoff = 1000;
  std::function<void(const fabric::TraceEntry&)> fabric_trace;
};

enum class FaultKind { kKillCn, kKillMn, kRecoverMn, kRecoverCn };

struct FaultEvent {
  FaultKind kind;
  std::uint64_t op_index;  // completed ops at that moment (index into op_log)
  Nanos time;
};

struct PopulationModes {
  std::uint64_t objects = 0;  // objects with a header on some CN
  std::uint64_t on = 0;       // of those, objects cached on the majority of CNs
};

struct ExperimentResult {
  Metrics metrics;
  ValidationResult validation;
  std::vector<HistoryOp> history;
  fabric::FabricStats fabric;
  std::vector<core::CacheStats> cache_stats;
  baselines::CmStats cm_stats;
  std::vector<coord::FenceWindow> fences;
  std::uint64_t hits_in_fences = 0;
  std::uint64_t hit_stamps = 0;
  std::vector<FaultEvent> faults;
  std::vector<PopulationModes> modes;  // difache only, one per population
  std::uint64_t tracking_changes = 0;
  std::string csv;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace difache::bench
