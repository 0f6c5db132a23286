#pragma once

#include <cstdint>

namespace difache::adaptive {

// Latency of each cache event, in simulated ns.
struct Latencies {
  double t_rb = 4300;       // read bypass
  double t_rhit = 700;      // read hit
  double t_rmiss = 4800;    // read miss
  double t_wb = 4300;       // write bypass
  double t_wcached = 9000;  // cached write (flush + invalidations)
};

struct ProfitInputs {
  double r_hit = 0;
  double r_miss = 0;
  double r_w = 0;
  Latencies t;

  // Event ratios from a read ratio r and a hit rate h.
  static ProfitInputs from_ratios(double r, double h, const Latencies& t) {
    return {r * h, r * (1 - h), 1 - r, t};
  }
};

// Expected time saved per operation by caching (positive = caching pays).
double profit(const ProfitInputs& p);

// Read ratio at which profit crosses zero, clamped to [0, 1].
double break_even_threshold(double hit_rate, const Latencies& t);

// Thresholds live in the header as 16-bit fractions.
inline constexpr std::uint32_t kFixedOne = 65535;
std::uint16_t to_fixed(double x);
inline double from_fixed(std::uint16_t v) { return static_cast<double>(v) / kFixedOne; }

// Exact fixed-point test of reads/total >= threshold.
inline bool ratio_at_least(std::uint64_t reads, std::uint64_t total, std::uint16_t threshold) {
  return reads * kFixedOne >= std::uint64_t{threshold} * total;
}

}  // namespace difache::adaptive
