#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>

#include "difache/util/hash.hpp"

namespace difache::bench {

// Object image: [head version | payload | tail version]. The payload is a
// pure function of (object, version) so torn middles are detectable too.
inline std::uint64_t payload_word(std::uint64_t object, std::uint64_t version, std::size_t i) {
  return util::mix64(object * 0x100000001b3ULL ^ version ^ (std::uint64_t{i} << 40));
}

inline void encode_object(std::uint64_t object, std::uint64_t version, std::span<std::byte> img) {
  const std::size_t n = img.size();
  std::memcpy(img.data(), &version, 8);
  std::memcpy(img.data() + n - 8, &version, 8);
  for (std::size_t off = 8, i = 0; off < n - 8; off += 8, ++i) {
    std::uint64_t w = version == 0 ? 0 : payload_word(object, version, i);
    std::memcpy(img.data() + off, &w, std::min<std::size_t>(8, n - 8 - off));
  }
}

// Version of a consistent image, nullopt when torn.
inline std::optional<std::uint64_t> decode_object(std::uint64_t object,
                                                  std::span<const std::byte> img) {
  const std::size_t n = img.size();
  std::uint64_t head, tail;
  std::memcpy(&head, img.data(), 8);
  std::memcpy(&tail, img.data() + n - 8, 8);
  if (head != tail) return std::nullopt;
  for (std::size_t off = 8, i = 0; off < n - 8; off += 8, ++i) {
    std::uint64_t want = head == 0 ? 0 : payload_word(object, head, i);
    std::uint64_t got = 0;
    std::size_t len = std::min<std::size_t>(8, n - 8 - off);
    std::memcpy(&got, img.data() + off, len);
    if (len < 8) want &= (std::uint64_t{1} << (8 * len)) - 1;
    if (got != want) return std::nullopt;
  }
  return head;
}

}  // namespace difache::bench
