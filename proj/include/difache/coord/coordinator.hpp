#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <vector>

#include "difache/engine.hpp"
#include "difache/fabric/fabric.hpp"
#include "difache/layout.hpp"
#include "difache/owner/owner_tracking.hpp"
#include "difache/sim/executor.hpp"

namespace difache::coord {

struct CoordinatorConfig {
  Nanos fence_duration = 20000;  // caching stays off this long during a change
  owner::TrackingPolicy tracking = owner::TrackingPolicy::kAuto;
  std::size_t tracking_threshold = 32;
};

// Stamps bracketing one caching-off window.
struct FenceWindow {
  std::uint64_t start_stamp = 0;
  std::uint64_t end_stamp = 0;  // 0 while open
  Nanos start = 0, end = 0;
};

enum class NodeEvent { kDead, kRecovered };

// Single in-process membership authority. Epoch changes are serialized;
// queries are plain reads.
class Coordinator final : public FailureReporter {
 public:
  using Listener = std::function<void(NodeId, NodeEvent)>;

  Coordinator(sim::Executor& ex, fabric::Fabric& fab, MnLayout layout, CoordinatorConfig cfg);

  void add_engine(std::uint16_t cn, Engine* e);
  void add_mn(std::uint16_t mn);
  // Publishes the initial membership (no fence).
  void start();

  void scale_add(std::uint16_t cn);
  void scale_remove(std::uint16_t cn);
  void report_timeout(NodeId src, NodeId dst) override;
  void recover_cn(std::uint16_t cn);
  void recover_mn(std::uint16_t mn);

  void add_listener(Listener l) { listeners_.push_back(std::move(l)); }

  const Membership& membership() const { return membership_; }
  const std::vector<FenceWindow>& fences() const { return fences_; }
  bool inside_fence(std::uint64_t stamp) const;
  bool is_dead(NodeId n) const { return dead_.count(n) > 0; }
  std::uint64_t tracking_changes() const { return tracking_changes_; }

 private:
  void scale(const std::function<void()>& change);
  void publish();
  void release_mode_locks(std::uint16_t cn);
  // A switcher that died mid-switch leaves flags set; settle those objects
  // to cache-off everywhere.
  void settle_switches();

  sim::Executor& ex_;
  fabric::Fabric& fab_;
  MnLayout layout_;
  CoordinatorConfig cfg_;
  std::unique_ptr<sim::Semaphore> serial_;
  std::map<std::uint16_t, Engine*> engines_;
  std::vector<std::uint16_t> mns_;
  std::set<std::uint16_t> live_;
  std::set<NodeId> dead_;
  std::map<NodeId, Nanos> recovered_at_;
  Membership membership_;
  std::vector<FenceWindow> fences_;
  std::vector<Listener> listeners_;
  std::uint64_t tracking_changes_ = 0;
};

}  // namespace difache::coord
