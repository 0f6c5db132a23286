#pragma once

#include "difache/engine.hpp"
#include "difache/layout.hpp"

namespace difache::baselines {

// Every access goes straight to the MN.
class NoCache final : public Engine {
 public:
  NoCache(std::uint16_t cn, fabric::Fabric& fab, FailureReporter* reporter = nullptr);

  NodeId node() const override { return self_; }
  EventClass read(Worker& w, RemoteAddr obj, std::span<std::byte> out) override;
  EventClass write(Worker& w, RemoteAddr obj, std::span<const std::byte> in) override;
  std::uint64_t atomic_cas(Worker& w, RemoteAddr word, std::uint64_t expected,
                           std::uint64_t desired) override;
  std::uint64_t atomic_faa(Worker& w, RemoteAddr word, std::uint64_t addend) override;

 private:
  template <class F>
  auto guarded(F&& f) -> decltype(f());

  NodeId self_;
  fabric::Fabric& fab_;
  FailureReporter* reporter_;
};

}  // namespace difache::baselines
