#include "difache/fabric/fabric.hpp"

#include <algorithm>
#include <cstring>

namespace difache::fabric {

const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::kRead: return "read";
    case OpKind::kWrite: return "write";
    case OpKind::kCas: return "cas";
    case OpKind::kFaa: return "faa";
    case OpKind::kMessage: return "message";
    case OpKind::kCount: break;
  }
  return "?";
}

const char* to_string(OpPurpose p) {
  static const char* names[] = {"data",      "index_probe", "probe_retry", "header_state",
                                "owner_set", "directory",   "mode_lock",   "app_lock",
                                "rpc",       "invalidate",  "other"};
  auto i = static_cast<std::size_t>(p);
  return i < std::size(names) ? names[i] : "?";
}

std::uint64_t FabricOp::payload_bytes() const {
  switch (kind) {
    case OpKind::kRead: return out.size();
    case OpKind::kWrite: return in.size();
    case OpKind::kCas:
    case OpKind::kFaa: return 8;
    case OpKind::kMessage: return arg0;
    case OpKind::kCount: break;
  }
  return 0;
}

std::uint64_t FabricStats::count(OpKind k) const {
  std::uint64_t s = 0;
  for (auto v : ops[static_cast<std::size_t>(k)]) s += v;
  return s;
}

std::uint64_t FabricStats::count_purpose(OpPurpose p) const {
  std::uint64_t s = 0;
  for (auto& row : ops) s += row[static_cast<std::size_t>(p)];
  return s;
}

std::uint64_t FabricStats::total_ops() const {
  std::uint64_t s = 0;
  for (auto& row : ops)
    for (auto v : row) s += v;
  return s;
}

Fabric::Fabric(sim::Executor& ex, FabricConfig cfg) : ex_(ex), cfg_(cfg), rng_(cfg.seed) {
  if (cfg_.base_rtt < 0 || cfg_.per_byte_cost < 0 || cfg_.timeout < 0 ||
      cfg_.mn_bandwidth_cap <= 0 || cfg_.cn_bandwidth_cap <= 0)
    throw ConfigError("fabric costs must be non-negative and bandwidth caps positive");
}

void Fabric::add_node(NodeId n, std::uint64_t region_size) {
  if (nodes_.count(n)) throw ConfigError("duplicate node " + difache::to_string(n));
  Node node;
  node.mem = std::make_unique<PagedMemory>(region_size);
  nodes_.emplace(n, std::move(node));
  stats_.nodes[n];
}

Fabric::Node* Fabric::find(NodeId n) {
  auto it = nodes_.find(n);
  return it == nodes_.end() ? nullptr : &it->second;
}

const Fabric::Node* Fabric::find(NodeId n) const {
  auto it = nodes_.find(n);
  return it == nodes_.end() ? nullptr : &it->second;
}

bool Fabric::has_node(NodeId n) const { return find(n) != nullptr; }

bool Fabric::alive(NodeId n) const {
  const Node* node = find(n);
  return node && node->alive;
}

PagedMemory& Fabric::memory(NodeId n) {
  Node* node = find(n);
  if (!node) throw std::out_of_range("unknown node " + difache::to_string(n));
  return *node->mem;
}

const PagedMemory& Fabric::memory(NodeId n) const {
  const Node* node = find(n);
  if (!node) throw std::out_of_range("unknown node " + difache::to_string(n));
  return *node->mem;
}

void Fabric::inject_failure(NodeId n) {
  Node* node = find(n);
  if (!node) throw std::out_of_range("unknown node " + difache::to_string(n));
  node->alive = false;
}

void Fabric::recover(NodeId n) {
  Node* node = find(n);
  if (!node) throw std::out_of_range("unknown node " + difache::to_string(n));
  node->mem->clear();
  node->write_log.clear();
  node->alive = true;
}

void Fabric::reset_stats() {
  FabricStats fresh;
  for (auto& [id, _] : nodes_) fresh.nodes[id];
  stats_ = std::move(fresh);
}

Nanos Fabric::queue(Node& node, Nanos t0, std::uint64_t wire_bytes, bool is_mn) {
  double cap = is_mn ? cfg_.mn_bandwidth_cap : cfg_.cn_bandwidth_cap;
  double tx = static_cast<double>(wire_bytes) * 1e9 / cap;
  double start = std::max(static_cast<double>(t0), node.nic.next_free);
  node.nic.next_free = start + tx;
  return static_cast<Nanos>(start - static_cast<double>(t0));
}

void Fabric::apply(Node& dst, FabricOp& op, std::uint64_t issue_seq,
                   const std::vector<std::byte>* snapshot) {
  PagedMemory& mem = *dst.mem;
  std::uint64_t off = op.addr.offset;
  switch (op.kind) {
    case OpKind::kRead: {
      mem.read(off, op.out);
      if (!snapshot || dst.write_log.empty()) break;
      // Words overwritten by a remote write during the read window may still
      // come back with their old contents; each aligned word is all-old or
      // all-new.
      std::uint64_t end = off + op.out.size();
      for (std::uint64_t w = off & ~std::uint64_t{7}; w < end; w += 8) {
        std::uint64_t lo = std::max(w, off), hi = std::min(w + 8, end);
        const std::byte* old = snapshot->data() + (lo - off);
        std::byte* cur = op.out.data() + (lo - off);
        if (std::memcmp(old, cur, hi - lo) == 0) continue;
        bool raced = false;
        for (auto& [seq, woff, wlen] : dst.write_log)
          if (seq > issue_seq && woff < w + 8 && w < woff + wlen) {
            raced = true;
            break;
          }
        if (raced && (rng_() & 1)) {
          std::memcpy(cur, old, hi - lo);
          ++stats_.torn_words;
        }
      }
      break;
    }
    case OpKind::kWrite:
      mem.write(off, op.in);
      if (cfg_.torn_read_injection && !inflight_reads_.empty() && !op.in.empty()) {
        if (dst.write_log.empty()) logged_.push_back(&dst);
        dst.write_log.emplace_back(++op_seq_, off, op.in.size());
      }
      break;
    case OpKind::kCas: op.result = mem.cas(off, op.arg0, op.arg1); break;
    case OpKind::kFaa: op.result = mem.faa(off, op.arg0); break;
    case OpKind::kMessage:
    case OpKind::kCount: break;
  }
}

void Fabric::batch(IoContext& io, std::span<FabricOp> ops) {
  if (ops.empty()) return;
  Node* src = find(io.src);
  if (!src) throw std::out_of_range("unknown source node " + difache::to_string(io.src));
  const Nanos t0 = ex_.now();
  const std::uint64_t batch_id = ++batch_seq_;
  std::vector<std::vector<std::byte>> snaps(ops.size());
  std::vector<std::uint64_t> issue(ops.size(), 0);
  Nanos max_lat = 0;

  for (std::size_t i = 0; i < ops.size(); ++i) {
    FabricOp& op = ops[i];
    op.status = FabricStatus::kOk;
    op.result = 0;
    Node* dst = find(op.addr.node);
    if (!dst) throw std::out_of_range("unknown node " + difache::to_string(op.addr.node));
    std::uint64_t len = op.payload_bytes();
    bool atomic = op.kind == OpKind::kCas || op.kind == OpKind::kFaa;
    if (atomic && op.addr.offset % 8 != 0) {
      op.status = FabricStatus::kMisaligned;
    } else if (op.kind != OpKind::kMessage && !dst->mem->in_bounds(op.addr.offset, len)) {
      op.status = FabricStatus::kOutOfBounds;
    } else if (!src->alive || !dst->alive) {
      op.status = FabricStatus::kNodeDead;
    }
    if (op.status == FabricStatus::kOk) {
      std::uint64_t wire = len + cfg_.message_overhead;
      Nanos qd = queue(*dst, t0, wire, op.addr.node.kind == NodeKind::kMemory);
      Nanos qs = queue(*src, t0, wire, io.src.kind == NodeKind::kMemory);
      stats_.nodes[op.addr.node].queue_delay += qd;
      stats_.nodes[io.src].queue_delay += qs;
      Nanos wirelat = op.kind == OpKind::kMessage ? cfg_.base_rtt / 2 : cfg_.base_rtt;
      op.latency = wirelat + static_cast<Nanos>(static_cast<double>(len) * cfg_.per_byte_cost) +
                   qd + qs;
      if (op.kind == OpKind::kRead && cfg_.torn_read_injection) {
        snaps[i].resize(len);
        dst->mem->read(op.addr.offset, snaps[i]);
        issue[i] = ++op_seq_;
        inflight_reads_.insert(issue[i]);
      }
    } else {
      op.latency = op.status == FabricStatus::kNodeDead ? cfg_.timeout : 0;
    }
    max_lat = std::max(max_lat, op.latency);
  }

  ex_.delay(max_lat);

  for (std::size_t i = 0; i < ops.size(); ++i) {
    FabricOp& op = ops[i];
    Node* dst = find(op.addr.node);
    if (op.status == FabricStatus::kOk && (!src->alive || !dst->alive))
      op.status = FabricStatus::kNodeDead;  // died while the op was in flight
    if (op.status == FabricStatus::kOk) {
      apply(*dst, op, issue[i], issue[i] ? &snaps[i] : nullptr);
      std::uint64_t len = op.payload_bytes();
      // Reads move payload from dst to src; everything else src to dst.
      bool inbound = op.kind == OpKind::kRead;
      NodeStats& s = stats_.nodes[io.src];
      NodeStats& d = stats_.nodes[op.addr.node];
      (inbound ? d.bytes_out : s.bytes_out) += len;
      (inbound ? s.bytes_in : d.bytes_in) += len;
      s.ops_out++;
      d.ops_in++;
      io.bytes += len;
    } else {
      stats_.failed_ops++;
    }
    if (issue[i]) inflight_reads_.erase(inflight_reads_.find(issue[i]));
    stats_.ops[static_cast<std::size_t>(op.kind)][static_cast<std::size_t>(op.purpose)]++;
    stats_.latency[static_cast<std::size_t>(op.kind)].add(static_cast<std::uint64_t>(op.latency));
    io.ops++;
    if (trace_)
      trace_({++op_seq_, io.src, io.actor, op.kind, op.purpose, op.addr, op.payload_bytes(),
              batch_id, op.status});
  }

  if (!logged_.empty()) {
    std::uint64_t horizon = inflight_reads_.empty() ? ~std::uint64_t{0} : *inflight_reads_.begin();
    auto keep = logged_.begin();
    for (Node* n : logged_) {
      while (!n->write_log.empty() && std::get<0>(n->write_log.front()) < horizon)
        n->write_log.pop_front();
      if (!n->write_log.empty()) *keep++ = n;
    }
    logged_.erase(keep, logged_.end());
  }
}

void Fabric::throw_if_failed(const FabricOp& op) {
  if (op.status != FabricStatus::kOk)
    throw FabricError(op.status, op.addr.node,
                      std::string(to_string(op.kind)) + " on " + difache::to_string(op.addr.node) +
                          ": " + difache::to_string(op.status));
}

void Fabric::read(IoContext& io, RemoteAddr a, std::span<std::byte> out, OpPurpose p) {
  FabricOp op = FabricOp::read(a, out, p);
  batch(io, {&op, 1});
  throw_if_failed(op);
}

void Fabric::write(IoContext& io, RemoteAddr a, std::span<const std::byte> in, OpPurpose p) {
  FabricOp op = FabricOp::write(a, in, p);
  batch(io, {&op, 1});
  throw_if_failed(op);
}

std::uint64_t Fabric::cas(IoContext& io, RemoteAddr a, std::uint64_t expected,
                          std::uint64_t desired, OpPurpose p) {
  FabricOp op = FabricOp::cas(a, expected, desired, p);
  batch(io, {&op, 1});
  throw_if_failed(op);
  return op.result;
}

std::uint64_t Fabric::faa(IoContext& io, RemoteAddr a, std::uint64_t addend, OpPurpose p) {
  FabricOp op = FabricOp::faa(a, addend, p);
  batch(io, {&op, 1});
  throw_if_failed(op);
  return op.result;
}

void Fabric::message(IoContext& io, NodeId dst, std::uint64_t bytes, OpPurpose p) {
  FabricOp op = FabricOp::message(dst, bytes, p);
  batch(io, {&op, 1});
  throw_if_failed(op);
}

}  // namespace difache::fabric
