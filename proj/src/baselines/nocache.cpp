#include "difache/baselines/nocache.hpp"

namespace difache::baselines {

NoCache::NoCache(std::uint16_t cn, fabric::Fabric& fab, FailureReporter* reporter)
    : self_(NodeId::cn(cn)), fab_(fab), reporter_(reporter) {
  if (!fab_.has_node(self_)) fab_.add_node(self_, 4096);
}

template <class F>
auto NoCache::guarded(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const FabricError& e) {
    if (reporter_ && e.status() == FabricStatus::kNodeDead && fab_.alive(self_))
      reporter_->report_timeout(self_, e.node());
    throw;
  }
}

EventClass NoCache::read(Worker& w, RemoteAddr obj, std::span<std::byte> out) {
  guarded([&] { fab_.read(w.io, obj, out, fabric::OpPurpose::kData); });
  return EventClass::kReadBypass;
}

EventClass NoCache::write(Worker& w, RemoteAddr obj, std::span<const std::byte> in) {
  guarded([&] { fab_.write(w.io, obj, in, fabric::OpPurpose::kData); });
  return EventClass::kWriteBypass;
}

std::uint64_t NoCache::atomic_cas(Worker& w, RemoteAddr word, std::uint64_t expected,
                                  std::uint64_t desired) {
  return guarded([&] { return fab_.cas(w.io, word, expected, desired, fabric::OpPurpose::kOther); });
}

std::uint64_t NoCache::atomic_faa(Worker& w, RemoteAddr word, std::uint64_t addend) {
  return guarded([&] { return fab_.faa(w.io, word, addend, fabric::OpPurpose::kOther); });
}

}  // namespace difache::baselines
