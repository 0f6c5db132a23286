#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace difache::bench {

class FileNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class EmptyTrace : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TraceVerb { kRead, kWrite, kIgnored };

TraceVerb classify_verb(std::string_view op);

struct TraceRecord {
  std::uint64_t timestamp = 0;
  std::string key;
  std::uint32_t key_size = 0;
  std::uint32_t value_size = 0;
  std::uint32_t client_id = 0;
  std::string operation;
  std::uint64_t ttl = 0;
};

// One CSV line of the cache-trace format; nullopt when malformed.
std::optional<TraceRecord> parse_trace_line(std::string_view line);

struct TraceOp {
  bool write = false;
  std::uint64_t key_hash = 0;
  std::uint32_t size = 0;  // key + value bytes, clamped to [16, 65536]
  std::uint32_t client_id = 0;
};

struct Trace {
  std::vector<TraceOp> ops;
  std::uint64_t lines = 0;
  std::uint64_t malformed = 0;
  std::uint64_t ignored = 0;  // deletes and unknown verbs
};

Trace parse_trace(const std::string& path);
Trace parse_trace_text(std::string_view text);

std::uint32_t clamp_object_size(std::uint64_t bytes);
std::uint64_t hash_key(std::string_view key);

}  // namespace difache::bench
