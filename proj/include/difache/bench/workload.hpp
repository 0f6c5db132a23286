#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace difache::bench {

// A slice of the object space with its own read ratio.
struct Population {
  double fraction = 1.0;
  double read_ratio = 0.95;
};

struct WorkloadSpec {
  int cns = 8;
  int clients_per_cn = 16;
  double read_ratio = 0.95;
  double zipf_alpha = 0.99;
  std::uint32_t object_size = 1024;  // bytes including both version words
  std::uint64_t object_count = 1000000;
  std::uint64_t total_ops = 1000000;
  std::uint64_t seed = 1;
  std::vector<Population> populations;  // empty: one population at read_ratio

  void validate() const;
  int clients() const { return cns * clients_per_cn; }
};

// Zipf over ranks [1, n] by rejection inversion; alpha == 0 is uniform.
class Zipf {
 public:
  Zipf(std::uint64_t n, double alpha);
  std::uint64_t operator()(std::mt19937_64& rng) const;  // rank in [1, n]
  // Exact probability of rank k.
  double mass(std::uint64_t k) const;

 private:
  double h_integral(double x) const;
  double h(double x) const;
  double h_integral_inverse(double x) const;

  std::uint64_t n_;
  double alpha_;
  double hx1_ = 0, hn_ = 0, s_ = 0;
  mutable double norm_ = 0;
};

struct Op {
  bool write = false;
  std::uint64_t object = 0;
};

// Which population an object falls in (stable hash of its id).
std::size_t population_of(const WorkloadSpec& spec, std::uint64_t object);
double read_ratio_of(const WorkloadSpec& spec, std::uint64_t object);

// Deterministic per-client op stream.
class SyntheticStream {
 public:
  SyntheticStream(const WorkloadSpec& spec, int client);
  Op next();
  std::uint64_t remaining() const { return remaining_; }

 private:
  const WorkloadSpec* spec_;
  Zipf zipf_;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> coin_{0.0, 1.0};
  std::uint64_t remaining_;
};

// Ops assigned to one client out of `total` spread evenly.
std::uint64_t ops_for_client(std::uint64_t total, int clients, int client);

}  // namespace difache::bench
