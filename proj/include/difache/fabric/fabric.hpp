#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <tuple>
#include <span>
#include <vector>

#include "difache/common.hpp"
#include "difache/fabric/paged_memory.hpp"
#include "difache/sim/executor.hpp"
#include "difache/util/histogram.hpp"

namespace difache::fabric {

struct FabricConfig {
  Nanos base_rtt = 3500;
  double per_byte_cost = 0.5;         // ns per payload byte
  double mn_bandwidth_cap = 12.5e9;   // bytes per simulated second
  double cn_bandwidth_cap = 12.5e9;
  std::uint32_t message_overhead = 64;  // wire bytes added per op
  Nanos timeout = 100000;             // latency of an op that hits a dead node
  bool torn_read_injection = false;
  std::uint64_t seed = 1;
};

enum class OpKind : std::uint8_t { kRead, kWrite, kCas, kFaa, kMessage, kCount };

// What an op is for; only used for accounting and trace assertions.
enum class OpPurpose : std::uint8_t {
  kData,
  kIndexProbe,
  kProbeRetry,
  kHeaderState,
  kOwnerSet,
  kDirectory,
  kModeLock,
  kAppLock,
  kRpc,
  kInvalidate,
  kOther,
  kCount
};

const char* to_string(OpKind k);
const char* to_string(OpPurpose p);

struct FabricOp {
  OpKind kind = OpKind::kRead;
  OpPurpose purpose = OpPurpose::kData;
  RemoteAddr addr;
  std::span<std::byte> out;       // read destination
  std::span<const std::byte> in;  // write source
  std::uint64_t arg0 = 0;         // cas expected / faa addend / message bytes
  std::uint64_t arg1 = 0;         // cas desired
  std::uint64_t result = 0;       // cas/faa original value
  FabricStatus status = FabricStatus::kOk;
  Nanos latency = 0;

  static FabricOp read(RemoteAddr a, std::span<std::byte> out, OpPurpose p = OpPurpose::kData) {
    FabricOp o;
    o.kind = OpKind::kRead;
    o.purpose = p;
    o.addr = a;
    o.out = out;
    return o;
  }
  static FabricOp write(RemoteAddr a, std::span<const std::byte> in, OpPurpose p = OpPurpose::kData) {
    FabricOp o;
    o.kind = OpKind::kWrite;
    o.purpose = p;
    o.addr = a;
    o.in = in;
    return o;
  }
  static FabricOp cas(RemoteAddr a, std::uint64_t expected, std::uint64_t desired,
                      OpPurpose p = OpPurpose::kOther) {
    FabricOp o;
    o.kind = OpKind::kCas;
    o.purpose = p;
    o.addr = a;
    o.arg0 = expected;
    o.arg1 = desired;
    return o;
  }
  static FabricOp faa(RemoteAddr a, std::uint64_t addend, OpPurpose p = OpPurpose::kOther) {
    FabricOp o;
    o.kind = OpKind::kFaa;
    o.purpose = p;
    o.addr = a;
    o.arg0 = addend;
    return o;
  }
  static FabricOp message(NodeId dst, std::uint64_t bytes, OpPurpose p = OpPurpose::kRpc) {
    FabricOp o;
    o.kind = OpKind::kMessage;
    o.purpose = p;
    o.addr = {dst, 0};
    o.arg0 = bytes;
    return o;
  }

  std::uint64_t payload_bytes() const;
};

// Issuer of fabric ops: accumulates what one call cost.
struct IoContext {
  NodeId src;
  int actor = 0;
  std::uint64_t ops = 0;
  std::uint64_t bytes = 0;
};

struct NodeStats {
  std::uint64_t ops_in = 0;   // ops targeting this node
  std::uint64_t ops_out = 0;  // ops issued by this node
  std::uint64_t bytes_in = 0;
  std::uint64_t bytes_out = 0;
  Nanos queue_delay = 0;      // queuing accrued at this node's NIC
};

struct FabricStats {
  std::map<NodeId, NodeStats> nodes;
  std::array<std::array<std::uint64_t, static_cast<std::size_t>(OpPurpose::kCount)>,
             static_cast<std::size_t>(OpKind::kCount)>
      ops{};
  std::array<util::Histogram, static_cast<std::size_t>(OpKind::kCount)> latency;
  std::uint64_t torn_words = 0;
  std::uint64_t failed_ops = 0;

  std::uint64_t count(OpKind k, OpPurpose p) const {
    return ops[static_cast<std::size_t>(k)][static_cast<std::size_t>(p)];
  }
  std::uint64_t count(OpKind k) const;
  std::uint64_t count_purpose(OpPurpose p) const;
  std::uint64_t total_ops() const;
};

struct TraceEntry {
  std::uint64_t seq;
  NodeId src;
  int actor;
  OpKind kind;
  OpPurpose purpose;
  RemoteAddr addr;
  std::uint64_t bytes;
  std::uint64_t batch;  // ops in one batch share this id
  FabricStatus status;
};

// Simulated one-sided fabric. All ops in a batch are issued at the same
// instant; the caller is delayed by the slowest op and the memory effects are
// applied at completion, in op order.
class Fabric {
 public:
  Fabric(sim::Executor& ex, FabricConfig cfg);

  sim::Executor& executor() { return ex_; }
  const FabricConfig& config() const { return cfg_; }
  void set_torn_read_injection(bool on) { cfg_.torn_read_injection = on; }

  void add_node(NodeId n, std::uint64_t region_size);
  bool has_node(NodeId n) const;
  bool alive(NodeId n) const;
  // Direct access for the node that owns the memory (local loads/stores).
  PagedMemory& memory(NodeId n);
  const PagedMemory& memory(NodeId n) const;

  void batch(IoContext& io, std::span<FabricOp> ops);

  // Single-op helpers; throw FabricError on failure.
  void read(IoContext& io, RemoteAddr a, std::span<std::byte> out, OpPurpose p = OpPurpose::kData);
  void write(IoContext& io, RemoteAddr a, std::span<const std::byte> in,
             OpPurpose p = OpPurpose::kData);
  std::uint64_t cas(IoContext& io, RemoteAddr a, std::uint64_t expected, std::uint64_t desired,
                    OpPurpose p = OpPurpose::kOther);
  std::uint64_t faa(IoContext& io, RemoteAddr a, std::uint64_t addend,
                    OpPurpose p = OpPurpose::kOther);
  void message(IoContext& io, NodeId dst, std::uint64_t bytes, OpPurpose p = OpPurpose::kRpc);

  void inject_failure(NodeId n);
  // Brings the node back with a zeroed region.
  void recover(NodeId n);

  const FabricStats& stats() const { return stats_; }
  void reset_stats();
  void set_trace(std::function<void(const TraceEntry&)> fn) { trace_ = std::move(fn); }

  static void throw_if_failed(const FabricOp& op);

 private:
  struct Nic {
    double next_free = 0;  // ns
  };
  struct Node {
    std::unique_ptr<PagedMemory> mem;
    bool alive = true;
    Nic nic;
    // Remote writes applied while some torn-eligible read is in flight.
    std::deque<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>> write_log;
  };

  Node* find(NodeId n);
  const Node* find(NodeId n) const;
  Nanos queue(Node& node, Nanos t0, std::uint64_t wire_bytes, bool is_mn);
  void apply(Node& dst, FabricOp& op, std::uint64_t issue_seq,
             const std::vector<std::byte>* snapshot);

  sim::Executor& ex_;
  FabricConfig cfg_;
  std::map<NodeId, Node> nodes_;
  FabricStats stats_;
  std::function<void(const TraceEntry&)> trace_;
  std::mt19937_64 rng_;
  std::uint64_t op_seq_ = 0;
  std::uint64_t batch_seq_ = 0;
  std::multiset<std::uint64_t> inflight_reads_;
  std::vector<Node*> logged_;
};

}  // namespace difache::fabric
