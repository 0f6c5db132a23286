#include "difache/index/hopscotch_index.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

#include "difache/common.hpp"

namespace difache::index {

namespace {
constexpr std::uint32_t H = IndexConfig::kNeighborhood;
constexpr std::uint32_t B = IndexConfig::kBucketsPerGroup;

std::uint64_t rd(std::span<const std::byte> s, std::size_t off) {
  std::uint64_t v;
  std::memcpy(&v, s.data() + off, 8);
  return v;
}
}  // namespace

void IndexConfig::validate() const {
  if (num_buckets < kBucketsPerGroup || !std::has_single_bit(num_buckets))
    throw ConfigError("index num_buckets must be a power of two >= 4");
}

std::uint64_t IndexConfig::home_bucket(std::uint64_t key) const {
  return util::mix64(key) & (num_buckets - 1);
}

HopscotchIndex::HopscotchIndex(fabric::PagedMemory& mem, std::uint64_t base, IndexConfig cfg,
                               std::uint64_t lock_id)
    : mem_(mem), base_(base), cfg_(cfg), lock_id_(lock_id) {
  cfg_.validate();
  if (base % IndexConfig::kGroupBytes) throw ConfigError("index base must be 64-byte aligned");
  if (lock_id == 0) throw ConfigError("index lock id must be non-zero");
}

HopscotchIndex::Key HopscotchIndex::bucket_key(std::uint64_t b) const {
  return mem_.load(group_off(b / B) + 8 + 8 * (b % B));
}

HopscotchIndex::Value HopscotchIndex::bucket_value(std::uint64_t b) const {
  std::uint64_t s = b % B;
  std::uint64_t w = mem_.load(group_off(b / B) + 40 + 8 * (s / 2));
  return static_cast<Value>(w >> (32 * (s % 2)));
}

std::uint16_t HopscotchIndex::hop_info(std::uint64_t b) const {
  std::uint64_t w = mem_.load(group_off(b / B) + 56);
  return static_cast<std::uint16_t>(w >> (16 * (b % B)));
}

void HopscotchIndex::set_key(std::uint64_t b, Key k) {
  mem_.store(group_off(b / B) + 8 + 8 * (b % B), k);
  step();
}

void HopscotchIndex::set_value(std::uint64_t b, Value v) {
  std::uint64_t s = b % B;
  std::uint64_t off = group_off(b / B) + 40 + 8 * (s / 2);
  std::uint64_t shift = 32 * (s % 2);
  std::uint64_t w = mem_.load(off);
  w = (w & ~(std::uint64_t{0xffffffff} << shift)) | (std::uint64_t{v} << shift);
  mem_.store(off, w);
  step();
}

void HopscotchIndex::set_hop(std::uint64_t b, std::uint16_t h) {
  std::uint64_t off = group_off(b / B) + 56;
  std::uint64_t shift = 16 * (b % B);
  std::uint64_t w = mem_.load(off);
  w = (w & ~(std::uint64_t{0xffff} << shift)) | (std::uint64_t{h} << shift);
  mem_.store(off, w);
  step();
}

void HopscotchIndex::lock_group(std::uint64_t g) {
  while (mem_.cas(group_off(g), 0, lock_id_) != 0) {
    if (!yield_) throw std::logic_error("index group lock held with no way to wait");
    yield_();
  }
}

void HopscotchIndex::unlock_group(std::uint64_t g) { mem_.store(group_off(g), 0); }

std::optional<HopscotchIndex::Value> HopscotchIndex::lookup(Key k) const {
  if (k == 0) return std::nullopt;
  std::uint64_t h = home_bucket(k);
  std::uint16_t hop = hop_info(h);
  while (hop) {
    int i = std::countr_zero(hop);
    hop &= hop - 1;
    std::uint64_t b = h + i;
    if (bucket_key(b) != k) continue;
    Value v = bucket_value(b);
    if (bucket_key(b) == k) return v;
  }
  return std::nullopt;
}

HopscotchIndex::InsertResult HopscotchIndex::insert(Key k, Value v) {
  if (k == 0) throw std::invalid_argument("key 0 is the empty sentinel");
  const std::uint64_t h = home_bucket(k);
  const std::uint64_t total = cfg_.total_buckets();
  std::uint64_t g_lo = h / B, g_hi = (h + H - 1) / B;
  for (std::uint64_t g = g_lo; g <= g_hi; ++g) lock_group(g);
  auto unlock_all = [&] {
    for (std::uint64_t g = g_lo; g <= g_hi; ++g) unlock_group(g);
  };

  for (std::uint32_t i = 0; i < H; ++i) {
    if (bucket_key(h + i) == k) {
      Value existing = bucket_value(h + i);
      unlock_all();
      return {InsertStatus::kAlreadyPresent, existing};
    }
  }

  // Find the first empty bucket at or after home, extending the locked range.
  std::uint64_t e = h;
  const std::uint64_t limit = std::min<std::uint64_t>(total, h + cfg_.max_probe);
  while (e < limit && bucket_key(e) != 0) {
    ++e;
    if (e < limit && e / B > g_hi) lock_group(++g_hi);
  }
  if (e >= limit) {
    unlock_all();
    return {InsertStatus::kFull, 0};
  }

  // Hop the empty bucket back until it lies inside the neighbourhood.
  while (e - h >= H) {
    bool moved = false;
    for (std::uint64_t c = e - (H - 1); c < e && !moved; ++c) {
      std::uint16_t hop = hop_info(c);
      while (hop) {
        int i = std::countr_zero(hop);
        hop &= hop - 1;
        std::uint64_t from = c + i;
        if (from >= e) break;
        Key mk = bucket_key(from);
        Value mv = bucket_value(from);
        set_value(e, mv);
        set_key(e, mk);
        set_hop(c, static_cast<std::uint16_t>(hop_info(c) | (1u << (e - c))));
        set_key(from, 0);
        set_value(from, 0);
        set_hop(c, static_cast<std::uint16_t>(hop_info(c) & ~(1u << i)));
        e = from;
        moved = true;
        break;
      }
    }
    if (!moved) {
      unlock_all();
      return {InsertStatus::kFull, 0};
    }
  }

  set_value(e, v);
  set_key(e, k);
  set_hop(h, static_cast<std::uint16_t>(hop_info(h) | (1u << (e - h))));
  ++size_;
  unlock_all();
  return {InsertStatus::kInserted, v};
}

std::optional<HopscotchIndex::Victim> HopscotchIndex::evict(Key k, const VictimRank& rank) {
  const std::uint64_t h = home_bucket(k);
  // Victims live in [h, h+H); their homes may start H-1 buckets earlier.
  std::uint64_t g_lo = (h >= H - 1 ? h - (H - 1) : 0) / B;
  std::uint64_t g_hi = (h + H - 1) / B;
  for (std::uint64_t g = g_lo; g <= g_hi; ++g) lock_group(g);

  std::optional<std::uint64_t> best_b;
  std::uint64_t best_rank = 0;
  for (std::uint32_t i = 0; i < H; ++i) {
    std::uint64_t b = h + i;
    Key bk = bucket_key(b);
    if (bk == 0) continue;
    auto r = rank(bk, bucket_value(b));
    if (!r) continue;
    if (!best_b || *r < best_rank) {
      best_b = b;
      best_rank = *r;
    }
  }
  std::optional<Victim> out;
  if (best_b) {
    std::uint64_t b = *best_b;
    Key vk = bucket_key(b);
    Value vv = bucket_value(b);
    std::uint64_t vh = home_bucket(vk);
    set_key(b, 0);
    set_value(b, 0);
    set_hop(vh, static_cast<std::uint16_t>(hop_info(vh) & ~(1u << (b - vh))));
    --size_;
    out = Victim{vk, vv};
  }
  for (std::uint64_t g = g_lo; g <= g_hi; ++g) unlock_group(g);
  return out;
}

bool HopscotchIndex::erase(Key k) {
  auto v = evict(k, [k](Key bk, Value) -> std::optional<std::uint64_t> {
    if (bk == k) return 0;
    return std::nullopt;
  });
  return v.has_value();
}

std::string HopscotchIndex::check_invariants() const {
  const std::uint64_t total = cfg_.total_buckets();
  std::uint64_t count = 0;
  for (std::uint64_t b = 0; b < total; ++b) {
    Key k = bucket_key(b);
    if (k != 0) {
      ++count;
      std::uint64_t hb = home_bucket(k);
      if (b < hb || b - hb >= H)
        return "bucket " + std::to_string(b) + " outside neighbourhood of home " +
               std::to_string(hb);
      if (!(hop_info(hb) >> (b - hb) & 1))
        return "hop_info of " + std::to_string(hb) + " misses bucket " + std::to_string(b);
    }
    if (b < cfg_.num_buckets) {
      std::uint16_t hop = hop_info(b);
      for (std::uint32_t i = 0; i < H; ++i) {
        if (!(hop >> i & 1)) continue;
        Key hk = bucket_key(b + i);
        if (hk == 0 || home_bucket(hk) != b)
          return "hop_info bit " + std::to_string(i) + " of " + std::to_string(b) + " is stale";
      }
    } else if (hop_info(b) != 0) {
      return "overflow bucket " + std::to_string(b) + " has hop_info";
    }
  }
  if (count != size_) return "size mismatch";
  return {};
}

HopscotchIndex::ProbeRange HopscotchIndex::probe_range(const IndexConfig& cfg, std::uint64_t base,
                                                       Key k) {
  std::uint64_t h = cfg.home_bucket(k);
  std::uint64_t g0 = h / B, g1 = (h + H - 1) / B;
  return {base + g0 * IndexConfig::kGroupBytes,
          static_cast<std::uint32_t>((g1 - g0 + 1) * IndexConfig::kGroupBytes), g0};
}

HopscotchIndex::SnapshotResult HopscotchIndex::search_snapshot(const IndexConfig& cfg, Key k,
                                                               std::span<const std::byte> snap,
                                                               std::uint64_t first_group) {
  std::size_t groups = snap.size() / IndexConfig::kGroupBytes;
  for (std::size_t g = 0; g < groups; ++g)
    if (rd(snap, g * IndexConfig::kGroupBytes) != 0) return {SnapshotStatus::kLocked, 0};
  std::uint64_t h = cfg.home_bucket(k);
  for (std::uint32_t i = 0; i < H; ++i) {
    std::uint64_t b = h + i;
    std::size_t g = b / B - first_group;
    std::size_t s = b % B;
    std::size_t goff = g * IndexConfig::kGroupBytes;
    if (rd(snap, goff + 8 + 8 * s) != k) continue;
    std::uint64_t w = rd(snap, goff + 40 + 8 * (s / 2));
    return {SnapshotStatus::kFound, static_cast<Value>(w >> (32 * (s % 2)))};
  }
  return {SnapshotStatus::kNotFound, 0};
}

}  // namespace difache::index
