#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "difache/common.hpp"
#include "difache/events.hpp"
#include "difache/fabric/fabric.hpp"
#include "difache/owner/owner_tracking.hpp"

namespace difache {

// One client thread on a CN.
struct Worker {
  int id = 0;  // index within its CN
  fabric::IoContext io;
};

// Coordinator state as cached on each CN.
struct Membership {
  std::uint64_t epoch = 0;
  bool caching_enabled = true;
  std::vector<std::uint16_t> live_cns;
  owner::TrackingMode tracking = owner::TrackingMode::kBroadcast;
};

// A coherence engine instance on one CN. Reads and writes move whole byte
// images; failures surface as FabricError (the timeout result).
class Engine {
 public:
  virtual ~Engine() = default;

  virtual NodeId node() const = 0;
  virtual EventClass read(Worker& w, RemoteAddr obj, std::span<std::byte> out) = 0;
  virtual EventClass write(Worker& w, RemoteAddr obj, std::span<const std::byte> in) = 0;
  virtual std::uint64_t atomic_cas(Worker& w, RemoteAddr word, std::uint64_t expected,
                                   std::uint64_t desired) = 0;
  virtual std::uint64_t atomic_faa(Worker& w, RemoteAddr word, std::uint64_t addend) = 0;

  // Coordinator hooks.
  virtual void apply_membership(const Membership&) {}
  virtual void on_mn_failure(std::uint16_t /*mn*/) {}
  virtual void wipe_cache() {}
  // The CN came back with zeroed memory.
  virtual void reset_after_recovery() {}
  // Objects whose mode switch was left half done (the switcher died).
  virtual std::vector<std::uint64_t> switching_keys() const { return {}; }
  // Settle such an object to cache-off on this CN.
  virtual void force_mode_off(std::uint64_t /*key*/) {}
};

}  // namespace difache
