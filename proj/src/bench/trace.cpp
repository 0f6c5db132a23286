#include "difache/bench/trace.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "difache/util/hash.hpp"

namespace difache::bench {

namespace {

template <class T>
bool parse_num(std::string_view s, T& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

TraceVerb classify_verb(std::string_view op) {
  if (op == "get" || op == "gets") return TraceVerb::kRead;
  static constexpr std::string_view kMutators[] = {"set",    "add",     "replace", "cas",
                                                   "append", "prepend", "incr",    "decr"};
  if (std::find(std::begin(kMutators), std::end(kMutators), op) != std::end(kMutators))
    return TraceVerb::kWrite;
  return TraceVerb::kIgnored;
}

std::optional<TraceRecord> parse_trace_line(std::string_view line) {
  line = trim(line);
  if (line.empty()) return std::nullopt;
  std::vector<std::string_view> f;
  std::size_t pos = 0;
  for (;;) {
    auto c = line.find(',', pos);
    f.push_back(line.substr(pos, c == std::string_view::npos ? std::string_view::npos : c - pos));
    if (c == std::string_view::npos) break;
    pos = c + 1;
  }
  if (f.size() < 7) return std::nullopt;
  // Keys may themselves contain commas: the five trailing fields are fixed.
  const std::size_t n = f.size();
  TraceRecord r;
  if (!parse_num(f[0], r.timestamp)) return std::nullopt;
  std::string key(f[1]);
  for (std::size_t i = 2; i < n - 5; ++i) {
    key += ',';
    key += f[i];
  }
  r.key = std::move(key);
  if (!parse_num(f[n - 5], r.key_size) || !parse_num(f[n - 4], r.value_size) ||
      !parse_num(f[n - 3], r.client_id) || !parse_num(f[n - 1], r.ttl))
    return std::nullopt;
  r.operation = std::string(trim(f[n - 2]));
  if (r.key.empty() || r.operation.empty()) return std::nullopt;
  return r;
}

std::uint32_t clamp_object_size(std::uint64_t bytes) {
  return static_cast<std::uint32_t>(std::clamp<std::uint64_t>(bytes, 16, 65536));
}

std::uint64_t hash_key(std::string_view key) { return util::fnv1a64(key); }

Trace parse_trace_text(std::string_view text) {
  Trace t;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto e = text.find('\n', pos);
    auto line = text.substr(pos, e == std::string_view::npos ? std::string_view::npos : e - pos);
    pos = e == std::string_view::npos ? text.size() : e + 1;
    if (trim(line).empty()) continue;
    ++t.lines;
    auto r = parse_trace_line(line);
    if (!r) {
      ++t.malformed;
      continue;
    }
    auto verb = classify_verb(r->operation);
    if (verb == TraceVerb::kIgnored) {
      ++t.ignored;
      continue;
    }
    t.ops.push_back({verb == TraceVerb::kWrite, hash_key(r->key),
                     clamp_object_size(std::uint64_t{r->key_size} + r->value_size), r->client_id});
  }
  return t;
}

Trace parse_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFound("trace file not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  Trace t = parse_trace_text(ss.str());
  if (t.ops.empty()) throw EmptyTrace("trace has no usable records: " + path);
  return t;
}

}  // namespace difache::bench
