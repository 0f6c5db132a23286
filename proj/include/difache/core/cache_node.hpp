#pragma once

#include <array>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "difache/adaptive/latency_buffers.hpp"
#include "difache/adaptive/mode_controller.hpp"
#include "difache/core/buffer_pool.hpp"
#include "difache/core/cache_header.hpp"
#include "difache/engine.hpp"
#include "difache/index/hopscotch_index.hpp"
#include "difache/layout.hpp"
#include "difache/owner/owner_tracking.hpp"

namespace difache::core {

// Simulated CPU cost of CN-local work.
struct LocalCosts {
  Nanos op = 60;              // one local metadata access
  double copy_per_byte = 0.25;
};

struct CacheConfig {
  index::IndexConfig index;
  std::uint64_t num_headers = 0;  // 0: one per bucket
  std::uint64_t buffer_bytes = std::uint64_t{64} << 20;
  std::uint32_t chunk_bytes = 256;
  std::uint32_t max_object_bytes = 64 * 1024;
  int workers = 16;
  LocalCosts local;
  adaptive::AdaptiveConfig adaptive;
  std::uint32_t lookup_retry_cap = 64;
  std::uint64_t lock_retry_cap = 1000000;
  Nanos lock_backoff = 500;
  // Mutation for negative controls: writers never invalidate peers.
  bool skip_invalidation = false;
  // Record the simulated stamp of every hit (fence checks).
  bool record_hit_stamps = false;
};

struct CacheStats {
  std::array<std::uint64_t, kEventClasses> events{};
  std::uint64_t remote_lookups = 0;       // neighbourhood reads started
  std::uint64_t lookup_retries = 0;
  std::uint64_t invalidation_targets = 0; // CNs probed on behalf of a write
  std::uint64_t invalidation_msgs = 0;    // invalidating atomics sent
  std::uint64_t switches = 0;
  std::uint64_t already_switched = 0;
  std::uint64_t evictions = 0;
  std::uint64_t buffer_reclaims = 0;
  std::uint64_t header_allocs = 0;
  std::uint64_t fills_aborted = 0;
  std::uint64_t uncacheable = 0;
};

// Receives coherence events from writers (model checking hooks).
class CoherenceObserver {
 public:
  virtual ~CoherenceObserver() = default;
  virtual void collected(std::uint16_t writer, std::uint64_t key,
                         const std::vector<std::uint16_t>& targets) = 0;
  virtual void invalidated(std::uint16_t writer, std::uint16_t target, std::uint64_t key) = 0;
};

struct ReadRequest {
  RemoteAddr obj;
  std::span<std::byte> out;
  RemoteAddr ancestor;          // equal to obj for plain objects
  std::uint32_t ancestor_len = 0;
};

struct WriteRequest {
  RemoteAddr obj;
  std::span<const std::byte> in;
  RemoteAddr ancestor;
  std::uint32_t ancestor_len = 0;
};

struct AccessResult {
  EventClass event = EventClass::kReadBypass;
  FabricStatus status = FabricStatus::kOk;
  std::exception_ptr error;  // set when status != kOk
};

enum class SwitchResult { kSwitched, kAlreadySwitched, kAborted };

// Decoded copy of one header.
struct HeaderView {
  std::uint32_t offset = 0;
  std::uint64_t state = 0, counters = 0, policy = 0, buffer = 0;
  bool valid() const { return hdr::effectively_valid(state, buffer); }
  bool mode_on() const { return state & hdr::kModeOn; }
  bool switching() const { return state & hdr::kSwitching; }
  std::uint16_t interval() const { return hdr::interval(policy); }
  double threshold() const { return adaptive::from_fixed(hdr::threshold(policy)); }
};

// The CN-side cache of one compute node. Region layout (identical on every
// CN so remote CNs can compute addresses):
//   [0, 64) reserved | index groups | headers | buffer pool
class CacheNode final : public Engine {
 public:
  CacheNode(std::uint16_t cn, fabric::Fabric& fab, const MnLayout& mn, CacheConfig cfg,
            FailureReporter* reporter = nullptr);

  static std::uint64_t region_bytes(const CacheConfig& cfg);

  NodeId node() const override { return self_; }
  std::uint16_t cn() const { return cn_; }

  EventClass read(Worker& w, RemoteAddr obj, std::span<std::byte> out) override;
  EventClass write(Worker& w, RemoteAddr obj, std::span<const std::byte> in) override;
  std::uint64_t atomic_cas(Worker& w, RemoteAddr word, std::uint64_t expected,
                           std::uint64_t desired) override;
  std::uint64_t atomic_faa(Worker& w, RemoteAddr word, std::uint64_t addend) override;

  std::vector<AccessResult> read_batch(Worker& w, std::span<const ReadRequest> reqs);
  std::vector<AccessResult> write_batch(Worker& w, std::span<const WriteRequest> reqs);
  EventClass read_nested(Worker& w, RemoteAddr obj, RemoteAddr ancestor,
                         std::uint32_t ancestor_len, std::span<std::byte> out);
  EventClass write_nested(Worker& w, RemoteAddr obj, RemoteAddr ancestor,
                          std::uint32_t ancestor_len, std::span<const std::byte> in);

  // Remote-facing protocol steps, public for tests.
  struct LookupResult {
    enum Status { kFound, kNotFound, kDead } status;
    std::uint32_t offset;
  };
  std::vector<LookupResult> lookup_remote(fabric::IoContext& io,
                                          std::span<const std::pair<std::uint16_t, std::uint64_t>> q);
  std::optional<std::uint32_t> lookup_remote(fabric::IoContext& io, std::uint16_t cn,
                                             std::uint64_t key);
  void invalidate_remote(fabric::IoContext& io, std::uint16_t cn, std::uint64_t key);
  SwitchResult switch_mode(Worker& w, std::uint64_t key, bool on);

  // Engine coordinator hooks.
  void apply_membership(const Membership& m) override;
  void on_mn_failure(std::uint16_t mn) override;
  void wipe_cache() override;
  void reset_after_recovery() override;
  std::vector<std::uint64_t> switching_keys() const override;
  void force_mode_off(std::uint64_t key) override;

  std::optional<HeaderView> header(std::uint64_t key) const;
  std::optional<HeaderView> header(RemoteAddr obj) const { return header(pack_key(obj)); }
  const Membership& membership() const { return membership_; }
  const CacheStats& stats() const { return stats_; }
  const std::vector<std::uint64_t>& hit_stamps() const { return hit_stamps_; }
  index::HopscotchIndex& index() { return *index_; }
  const CacheConfig& config() const { return cfg_; }
  adaptive::LatencyBuffers& latencies() { return lat_; }
  BufferPool& buffer_pool() { return pool_; }
  void set_observer(CoherenceObserver* o) { observer_ = o; }

  std::uint64_t index_base() const { return index_base_; }
  std::uint64_t header_base() const { return header_base_; }
  std::uint64_t buffer_base() const { return buffer_base_; }

 private:
  struct Access;
  enum class Claim { kClaimed, kPartial, kBusy, kNotCacheable };
  struct Filled {
    std::uint16_t seq = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> ranges;  // [start, end)
  };

  fabric::PagedMemory& mem() { return fab_.memory(self_); }
  const fabric::PagedMemory& mem() const { return std::as_const(fab_).memory(self_); }
  sim::Executor& ex() { return fab_.executor(); }
  void local(Nanos n);
  Nanos copy_cost(std::size_t bytes) const;
  std::uint64_t ld(std::uint64_t off) const { return mem().load(off); }
  void st(std::uint64_t off, std::uint64_t v) { mem().store(off, v); }
  std::vector<std::uint16_t> live_others() const;
  void report(NodeId dst);
  void count(EventClass e) { ++stats_.events[static_cast<std::size_t>(e)]; }

  // Header management.
  std::optional<std::uint32_t> locate(Worker& w, std::uint64_t key, std::uint32_t size);
  std::optional<std::uint32_t> allocate_header(Worker& w, std::uint64_t key, std::uint64_t state,
                                               std::uint64_t policy);
  std::optional<std::uint32_t> pop_header(std::uint64_t key);
  void release_header(std::uint32_t hoff);
  std::optional<std::uint64_t> victim_rank(std::uint32_t hoff) const;
  bool evict_from(std::uint64_t key);
  std::optional<std::uint32_t> allocate_buffer(std::uint64_t bytes, std::uint32_t keep_hoff);
  void drop_buffer(std::uint32_t hoff);
  bool range_filled(std::uint32_t hoff, std::uint16_t seq, std::uint32_t rel,
                    std::uint32_t len) const;

  // Adaptive protocol (mode_controller.cpp).
  bool mode_check(Worker& w, Access& a, bool is_read);
  void default_mode(Worker& w, std::uint64_t key, std::uint64_t& state, std::uint64_t& policy,
                    std::uint32_t size);
  void lock_mode(Worker& w, std::uint64_t key);
  void unlock_mode(Worker& w, std::uint64_t key);
  SwitchResult switch_locked(Worker& w, std::uint64_t key, std::uint32_t hoff, bool on);
  void wait_not_switching(Worker& w, std::uint32_t hoff, std::uint32_t tag);

  // Data paths.
  void prepare(Worker& w, Access& a, bool is_read);
  bool try_hit(Access& a);
  Claim claim(Access& a);
  void publish(Access& a);
  void abort_claim(Access& a);
  bool own_update(Access& a);
  void invalidate_own(std::uint32_t hoff, std::uint32_t tag);
  void invalidate_everywhere(Worker& w, std::uint64_t key);
  std::optional<RemoteAddr> owner_set(Worker& w, std::uint64_t key);
  void prefetch_owner_sets(Worker& w, std::span<Access> as);
  void invalidate_targets(fabric::IoContext& io,
                          std::vector<std::pair<std::uint16_t, std::uint64_t>> targets);
  void finish(Worker& w, Access& a);

  std::uint16_t cn_;
  NodeId self_;
  fabric::Fabric& fab_;
  MnLayout mn_;
  CacheConfig cfg_;
  FailureReporter* reporter_;
  CoherenceObserver* observer_ = nullptr;
  owner::OwnerDirectory dir_;

  std::uint64_t index_base_, header_base_, buffer_base_, num_headers_;
  std::unique_ptr<index::HopscotchIndex> index_;
  BufferPool pool_;
  adaptive::LatencyBuffers lat_;
  Membership membership_;

  // Header pool: bump allocation plus a free list fed by eviction.
  std::uint64_t header_bump_ = 0;
  std::vector<std::uint32_t> free_headers_;
  std::vector<std::uint64_t> header_keys_;  // by header index; 0 = free
  std::uint64_t reclaim_hand_ = 0;

  std::unordered_map<std::uint32_t, Filled> filled_;
  std::unordered_map<std::uint64_t, RemoteAddr> owner_sets_;
  std::unordered_set<std::uint64_t> uncacheable_;

  CacheStats stats_;
  std::vector<std::uint64_t> hit_stamps_;
};

}  // namespace difache::core
