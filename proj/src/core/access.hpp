#pragma once

#include <exception>
#include <optional>
#include <vector>

#include "difache/core/cache_node.hpp"

namespace difache::core {

// Per-object state of one access while its batch is in flight.
struct CacheNode::Access {
  std::uint64_t key = 0;
  std::uint32_t tag = 0;
  RemoteAddr obj;
  std::uint32_t rel = 0;
  std::uint32_t len = 0;
  std::uint32_t anc_len = 0;
  std::span<std::byte> out;
  std::span<const std::byte> in;

  std::optional<std::uint32_t> hoff;
  bool mode_on = false;
  bool fetch = false;
  Claim claim = Claim::kNotCacheable;
  std::uint64_t claim_state = 0;
  std::uint64_t epoch = 0;
  bool invalidate = false;
  std::vector<std::uint16_t> targets;

  EventClass event = EventClass::kReadBypass;
  std::exception_ptr error;
  Nanos start = 0;
};

}  // namespace difache::core
