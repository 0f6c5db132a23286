#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "difache/util/hash.hpp"

namespace difache {

// Simulated time, in nanoseconds.
using Nanos = std::int64_t;

enum class NodeKind : std::uint8_t { kCompute, kMemory, kManager };

struct NodeId {
  NodeKind kind = NodeKind::kCompute;
  std::uint16_t id = 0;

  static NodeId cn(std::uint16_t i) { return {NodeKind::kCompute, i}; }
  static NodeId mn(std::uint16_t i) { return {NodeKind::kMemory, i}; }
  static NodeId manager(std::uint16_t i = 0) { return {NodeKind::kManager, i}; }

  friend bool operator==(const NodeId&, const NodeId&) = default;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

std::string to_string(NodeId n);

struct RemoteAddr {
  NodeId node;
  std::uint64_t offset = 0;

  RemoteAddr operator+(std::uint64_t d) const { return {node, offset + d}; }
  friend auto operator<=>(const RemoteAddr&, const RemoteAddr&) = default;
};

// Cache key: 16-bit MN id over a 48-bit offset. MN offsets below
// kFirstObjectOffset are never handed out, so 0 doubles as "empty".
inline constexpr std::uint64_t kFirstObjectOffset = 64;
inline constexpr std::uint64_t kOffsetMask = (std::uint64_t{1} << 48) - 1;

inline std::uint64_t pack_key(const RemoteAddr& a) {
  return (std::uint64_t{a.node.id} << 48) | (a.offset & kOffsetMask);
}
inline RemoteAddr unpack_key(std::uint64_t k) {
  return {NodeId::mn(static_cast<std::uint16_t>(k >> 48)), k & kOffsetMask};
}
inline std::uint16_t key_mn(std::uint64_t k) { return static_cast<std::uint16_t>(k >> 48); }

enum class FabricStatus { kOk, kNodeDead, kOutOfBounds, kMisaligned };

const char* to_string(FabricStatus s);

class FabricError : public std::runtime_error {
 public:
  FabricError(FabricStatus s, NodeId node, const std::string& what)
      : std::runtime_error(what), status_(s), node_(node) {}
  FabricStatus status() const { return status_; }
  NodeId node() const { return node_; }

 private:
  FabricStatus status_;
  NodeId node_;
};

// A spin or retry loop exceeded its bound (SwitchStuck, lock timeouts,
// scheduler step limit).
class LivenessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DirectoryFull : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RangeNotContained : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace difache
