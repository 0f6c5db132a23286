#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <unordered_map>
#include <vector>

#include "difache/core/buffer_pool.hpp"
#include "difache/engine.hpp"
#include "difache/layout.hpp"
#include "difache/sim/executor.hpp"

namespace difache::baselines {

struct CmConfig {
  int manager_workers = 16;
  Nanos service_time = 3500;      // processing per RPC
  std::uint32_t rpc_bytes = 64;   // request size without payload
  std::uint32_t entries = 1 << 20;
  std::uint64_t buffer_bytes = std::uint64_t{64} << 20;
  std::uint32_t chunk_bytes = 256;
  Nanos local_op = 60;
  double copy_per_byte = 0.25;
};

struct CmStats {
  std::uint64_t rpcs = 0;
  std::uint64_t invalidations = 0;
  std::uint64_t source_reads = 0;
  std::uint64_t source_writes = 0;
  Nanos queue_wait = 0;  // time RPCs spent waiting for a worker or the object
};

class CmCacheNode;

// The central manager. It runs on its own node; RPCs are one-way messages
// each way plus service time, serialized per object.
class CmManager {
 public:
  CmManager(fabric::Fabric& fab, CmConfig cfg);

  void attach(CmCacheNode* cn);
  const CmStats& stats() const { return stats_; }
  const CmConfig& config() const { return cfg_; }

  // Called in the requesting client's task after its request arrived.
  void serve_miss(std::uint16_t cn, std::uint32_t slot, RemoteAddr obj, std::span<std::byte> out);
  void serve_write(std::uint16_t cn, std::uint32_t slot, std::uint64_t token, RemoteAddr obj,
                   std::span<const std::byte> in);
  void forget_mn(std::uint16_t mn);
  void forget_cn(std::uint16_t cn);

 private:
  struct Lane {
    std::unique_ptr<sim::Semaphore> mutex;
    std::map<std::uint16_t, std::uint32_t> owners;  // cn -> state slot
  };
  Lane& lane(std::uint64_t key);
  void enter(Lane& l);
  void leave(Lane& l);

  fabric::Fabric& fab_;
  CmConfig cfg_;
  NodeId self_ = NodeId::manager(0);
  fabric::IoContext io_;
  std::unique_ptr<sim::Semaphore> workers_;
  std::unordered_map<std::uint64_t, Lane> lanes_;
  std::map<std::uint16_t, CmCacheNode*> nodes_;
  CmStats stats_;
};

// CN side: a local map of cached images whose state words live in CN memory
// so the manager can invalidate them with a one-sided write.
class CmCacheNode final : public Engine {
 public:
  CmCacheNode(std::uint16_t cn, fabric::Fabric& fab, CmManager& mgr,
              FailureReporter* reporter = nullptr);

  NodeId node() const override { return self_; }
  std::uint16_t cn() const { return cn_; }
  EventClass read(Worker& w, RemoteAddr obj, std::span<std::byte> out) override;
  EventClass write(Worker& w, RemoteAddr obj, std::span<const std::byte> in) override;
  std::uint64_t atomic_cas(Worker& w, RemoteAddr word, std::uint64_t expected,
                           std::uint64_t desired) override;
  std::uint64_t atomic_faa(Worker& w, RemoteAddr word, std::uint64_t addend) override;

  void apply_membership(const Membership& m) override { caching_ = m.caching_enabled; }
  void on_mn_failure(std::uint16_t mn) override;
  void wipe_cache() override;
  void reset_after_recovery() override;

  std::uint64_t state_offset(std::uint32_t slot) const { return 64 + 8ull * slot; }
  const std::array<std::uint64_t, kEventClasses>& events() const { return events_; }

 private:
  struct Entry {
    std::uint32_t slot;
    std::uint32_t buf = 0xffffffffu;
    std::uint32_t len = 0;
  };
  static constexpr std::uint64_t kValid = 1;

  Entry& entry(std::uint64_t key, std::uint32_t len);
  void evict_one(std::uint64_t keep);
  void drop(std::uint64_t key);
  void install(Entry& e, std::uint64_t token, std::span<const std::byte> data);
  void local(Nanos n);
  Nanos copy_cost(std::size_t n) const;
  template <class F>
  auto guarded(F&& f) -> decltype(f());

  std::uint16_t cn_;
  NodeId self_;
  fabric::Fabric& fab_;
  CmManager& mgr_;
  FailureReporter* reporter_;
  bool caching_ = true;
  std::uint64_t buffer_base_;
  core::BufferPool pool_;
  std::unordered_map<std::uint64_t, Entry> entries_;
  std::vector<std::uint32_t> free_slots_;
  std::uint32_t slot_bump_ = 0;
  std::uint64_t next_token_ = 1;
  std::vector<std::uint64_t> clock_;
  std::size_t hand_ = 0;
  std::array<std::uint64_t, kEventClasses> events_{};
};

}  // namespace difache::baselines
