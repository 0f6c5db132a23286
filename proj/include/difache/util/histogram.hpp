#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace difache::util {

// Log-linear histogram over non-negative integers (nanoseconds in practice).
// Values below 64 are exact; above that each power of two is split into 32
// sub-buckets, so quantiles carry at most ~3% relative error.
class Histogram {
 public:
  void add(std::uint64_t v);
  void merge(const Histogram& other);

  std::uint64_t count() const { return count_; }
  std::uint64_t sum() const { return sum_; }
  std::uint64_t max() const { return max_; }
  std::uint64_t min() const { return min_; }
  double mean() const { return count_ ? static_cast<double>(sum_) / count_ : 0.0; }

  // Upper edge of the bucket holding the q-quantile; 0 for an empty histogram.
  std::uint64_t quantile(double q) const;

 private:
  static constexpr int kSubBits = 5;
  static std::size_t bucket_of(std::uint64_t v);
  static std::uint64_t bucket_upper(std::size_t b);

  std::vector<std::uint64_t> buckets_;
  std::uint64_t count_ = 0;
  std::uint64_t sum_ = 0;
  std::uint64_t max_ = 0;
  std::uint64_t min_ = 0;
};

}  // namespace difache::util
