#pragma once

#include <cstdint>

#include "difache/util/hash.hpp"

namespace difache::core::hdr {

// A header is four words in the CN region, readable by remote CNs:
//   +0  state    flags | inval snapshot (16) | fill seq (16) | key tag (24)
//   +8  counters reads (16) | read hits (16) | total ops (16)
//   +16 policy   threshold (u16 fraction) | interval (u16) | object size (u32)
//   +24 buffer   buffer offset (u32, kNoBuffer if none) | invalidation count (u32)
inline constexpr std::uint32_t kBytes = 32;
inline constexpr std::uint64_t kState = 0, kCounters = 8, kPolicy = 16, kBuffer = 24;

inline constexpr std::uint64_t kValid = 1, kModeOn = 2, kSwitching = 4, kFilling = 8;
inline constexpr std::uint64_t kFlagMask = 0xff;
inline constexpr std::uint32_t kNoBuffer = 0xffffffffu;

inline std::uint32_t tag_of(std::uint64_t key) {
  auto t = static_cast<std::uint32_t>(util::mix64(key ^ 0x7461677461677461ULL) >> 40);
  return t ? t : 1;
}

inline std::uint64_t flags(std::uint64_t s) { return s & kFlagMask; }
inline std::uint16_t inval_snap(std::uint64_t s) { return static_cast<std::uint16_t>(s >> 8); }
inline std::uint16_t seq(std::uint64_t s) { return static_cast<std::uint16_t>(s >> 24); }
inline std::uint32_t tag(std::uint64_t s) { return static_cast<std::uint32_t>(s >> 40); }

inline std::uint64_t make_state(std::uint64_t fl, std::uint16_t inv, std::uint16_t sq,
                                std::uint32_t tg) {
  return (fl & kFlagMask) | (std::uint64_t{inv} << 8) | (std::uint64_t{sq} << 24) |
         (std::uint64_t{tg & 0xffffff} << 40);
}
inline std::uint64_t with_flags(std::uint64_t s, std::uint64_t fl) {
  return (s & ~kFlagMask) | (fl & kFlagMask);
}

// Valid and consistent with the invalidation counter in the buffer word.
inline bool effectively_valid(std::uint64_t state, std::uint64_t buffer_word) {
  return (state & (kValid | kFilling)) == kValid &&
         inval_snap(state) == static_cast<std::uint16_t>(buffer_word >> 32);
}

inline constexpr std::uint64_t kReadLane = 1, kHitLane = std::uint64_t{1} << 16,
                               kTotalLane = std::uint64_t{1} << 32;
inline std::uint32_t reads(std::uint64_t c) { return c & 0xffff; }
inline std::uint32_t hits(std::uint64_t c) { return (c >> 16) & 0xffff; }
inline std::uint32_t total(std::uint64_t c) { return (c >> 32) & 0xffff; }

inline std::uint64_t make_policy(std::uint16_t threshold, std::uint16_t interval,
                                 std::uint32_t size) {
  return threshold | (std::uint64_t{interval} << 16) | (std::uint64_t{size} << 32);
}
inline std::uint16_t threshold(std::uint64_t p) { return static_cast<std::uint16_t>(p); }
inline std::uint16_t interval(std::uint64_t p) { return static_cast<std::uint16_t>(p >> 16); }
inline std::uint32_t size(std::uint64_t p) { return static_cast<std::uint32_t>(p >> 32); }

inline std::uint32_t buffer_offset(std::uint64_t b) { return static_cast<std::uint32_t>(b); }
inline std::uint64_t with_buffer(std::uint64_t b, std::uint32_t off) {
  return (b & ~std::uint64_t{0xffffffff}) | off;
}
inline constexpr std::uint64_t kInvalOne = std::uint64_t{1} << 32;

}  // namespace difache::core::hdr
