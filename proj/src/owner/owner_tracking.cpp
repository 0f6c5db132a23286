#include "difache/owner/owner_tracking.hpp"

namespace difache::owner {

using fabric::FabricOp;
using fabric::OpPurpose;

const char* to_string(TrackingMode m) {
  return m == TrackingMode::kBroadcast ? "broadcast" : "ownerset";
}

TrackingPolicy parse_policy(const std::string& s) {
  if (s == "broadcast") return TrackingPolicy::kBroadcast;
  if (s == "ownerset" || s == "owner-set" || s == "ownersets") return TrackingPolicy::kOwnerSets;
  if (s == "auto") return TrackingPolicy::kAuto;
  throw ConfigError("unknown owner tracking mode '" + s + "'");
}

TrackingMode resolve(TrackingPolicy p, std::size_t live_cns, std::size_t threshold) {
  switch (p) {
    case TrackingPolicy::kBroadcast: return TrackingMode::kBroadcast;
    case TrackingPolicy::kOwnerSets: return TrackingMode::kOwnerSets;
    case TrackingPolicy::kAuto: break;
  }
  return live_cns > threshold ? TrackingMode::kOwnerSets : TrackingMode::kBroadcast;
}

std::vector<std::uint16_t> owners_from_bits(std::uint64_t bits, std::uint16_t writer,
                                            std::span<const std::uint16_t> live) {
  std::vector<std::uint16_t> out;
  for (auto cn : live)
    if (cn != writer && (bits & owner_bit(cn))) out.push_back(cn);
  return out;
}

std::uint64_t OwnerDirectory::slot_of(std::uint64_t key, std::uint32_t probe) const {
  return (util::mix64(key ^ 0x6f776e6572736574ULL) + probe) % layout_.slots;
}

std::vector<std::optional<RemoteAddr>> OwnerDirectory::ensure_owner_sets(
    fabric::IoContext& io, std::span<const std::uint64_t> keys) {
  std::vector<std::optional<RemoteAddr>> out(keys.size());
  std::vector<std::uint32_t> probe(keys.size(), 0);
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < keys.size(); ++i) pending.push_back(i);
  std::vector<FabricOp> ops;
  while (!pending.empty()) {
    ops.clear();
    for (std::size_t i : pending) {
      NodeId mn = NodeId::mn(key_mn(keys[i]));
      std::uint64_t slot = layout_.base + 16 * slot_of(keys[i], probe[i]);
      ops.push_back(FabricOp::cas({mn, slot}, 0, keys[i], OpPurpose::kDirectory));
    }
    fab_.batch(io, ops);
    std::vector<std::size_t> next;
    for (std::size_t j = 0; j < pending.size(); ++j) {
      std::size_t i = pending[j];
      fabric::Fabric::throw_if_failed(ops[j]);
      if (ops[j].result == 0 || ops[j].result == keys[i]) {
        out[i] = ops[j].addr + 8;
      } else if (++probe[i] < layout_.max_probes) {
        next.push_back(i);
      }
    }
    pending.swap(next);
  }
  return out;
}

std::optional<std::uint64_t> OwnerDirectory::peek(const fabric::PagedMemory& mn_mem,
                                                  std::uint64_t key) const {
  for (std::uint32_t p = 0; p < layout_.max_probes; ++p) {
    std::uint64_t slot = layout_.base + 16 * slot_of(key, p);
    std::uint64_t k = mn_mem.load(slot);
    if (k == key) return mn_mem.load(slot + 8);
    if (k == 0) return std::nullopt;
  }
  return std::nullopt;
}

RemoteAddr OwnerDirectory::ensure_owner_set(fabric::IoContext& io, std::uint64_t key) {
  auto r = ensure_owner_sets(io, {&key, 1});
  if (!r[0]) throw DirectoryFull("owner-set directory full for key");
  return *r[0];
}

void OwnerDirectory::record_owners(fabric::IoContext& io, std::span<const RemoteAddr> sets,
                                   std::uint16_t cn, std::span<const std::uint64_t> hints) {
  const std::uint64_t bit = owner_bit(cn);
  std::vector<std::uint64_t> expected(sets.size(), 0);
  for (std::size_t i = 0; i < hints.size() && i < sets.size(); ++i) expected[i] = hints[i];
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < sets.size(); ++i) pending.push_back(i);
  std::vector<FabricOp> ops;
  while (!pending.empty()) {
    ops.clear();
    for (std::size_t i : pending)
      ops.push_back(FabricOp::cas(sets[i], expected[i], expected[i] | bit, OpPurpose::kOwnerSet));
    fab_.batch(io, ops);
    std::vector<std::size_t> next;
    for (std::size_t j = 0; j < pending.size(); ++j) {
      std::size_t i = pending[j];
      fabric::Fabric::throw_if_failed(ops[j]);
      std::uint64_t seen = ops[j].result;
      if (seen == expected[i] || (seen & bit)) continue;
      expected[i] = seen;
      next.push_back(i);
    }
    pending.swap(next);
  }
}

void OwnerDirectory::record_owner(fabric::IoContext& io, RemoteAddr set, std::uint16_t cn,
                                  std::uint64_t hint) {
  record_owners(io, {&set, 1}, cn, {&hint, 1});
}

std::vector<std::uint64_t> OwnerDirectory::acquire_all(fabric::IoContext& io,
                                                       std::span<const RemoteAddr> sets,
                                                       std::uint16_t writer,
                                                       std::span<const std::uint64_t> hints) {
  const std::uint64_t mine = owner_bit(writer);
  std::vector<std::uint64_t> expected(sets.size(), mine);
  for (std::size_t i = 0; i < hints.size() && i < sets.size(); ++i) expected[i] = hints[i];
  std::vector<std::uint64_t> prior(sets.size(), 0);
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < sets.size(); ++i) pending.push_back(i);
  std::vector<FabricOp> ops;
  while (!pending.empty()) {
    ops.clear();
    for (std::size_t i : pending)
      ops.push_back(FabricOp::cas(sets[i], expected[i], mine, OpPurpose::kOwnerSet));
    fab_.batch(io, ops);
    std::vector<std::size_t> next;
    for (std::size_t j = 0; j < pending.size(); ++j) {
      std::size_t i = pending[j];
      fabric::Fabric::throw_if_failed(ops[j]);
      if (ops[j].result == expected[i]) {
        prior[i] = expected[i];
      } else {
        expected[i] = ops[j].result;
        next.push_back(i);
      }
    }
    pending.swap(next);
  }
  return prior;
}

std::uint64_t OwnerDirectory::acquire(fabric::IoContext& io, RemoteAddr set, std::uint16_t writer,
                                      std::uint64_t hint) {
  std::vector<std::uint64_t> h;
  if (hint) h.push_back(hint);
  return acquire_all(io, {&set, 1}, writer, h)[0];
}

std::vector<std::uint16_t> OwnerDirectory::acquire_and_collect_owners(
    fabric::IoContext& io, RemoteAddr set, std::uint16_t writer,
    std::span<const std::uint16_t> live, std::uint64_t hint) {
  return owners_from_bits(acquire(io, set, writer, hint), writer, live);
}

std::vector<std::uint16_t> OwnerDirectory::owners_for_invalidation(
    fabric::IoContext& io, std::uint64_t key, std::uint16_t writer, TrackingMode mode,
    std::span<const std::uint16_t> live) {
  if (mode == TrackingMode::kBroadcast) {
    std::vector<std::uint16_t> out;
    for (auto cn : live)
      if (cn != writer) out.push_back(cn);
    return out;
  }
  RemoteAddr set = ensure_owner_set(io, key);
  return acquire_and_collect_owners(io, set, writer, live);
}

void OwnerDirectory::clear(fabric::PagedMemory& mn_mem, const DirectoryLayout& layout) {
  mn_mem.zero(layout.base, layout.slots * 16);
}

}  // namespace difache::owner
