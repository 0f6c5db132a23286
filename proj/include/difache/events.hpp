#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace difache {

// The five cache event classes every engine reports.
enum class EventClass : std::uint8_t { kReadHit, kReadMiss, kWriteCached, kReadBypass, kWriteBypass };
inline constexpr std::size_t kEventClasses = 5;

inline const char* to_string(EventClass e) {
  static constexpr std::array<const char*, kEventClasses> names = {
      "read_hit", "read_miss", "write_cached", "read_bypass", "write_bypass"};
  return names[static_cast<std::size_t>(e)];
}

inline bool is_read(EventClass e) {
  return e == EventClass::kReadHit || e == EventClass::kReadMiss || e == EventClass::kReadBypass;
}

}  // namespace difache
