#include "difache/util/histogram.hpp"

#include <algorithm>
#include <bit>

namespace difache::util {

std::size_t Histogram::bucket_of(std::uint64_t v) {
  if (v < (1u << (kSubBits + 1))) return static_cast<std::size_t>(v);
  int msb = 63 - std::countl_zero(v);
  int shift = msb - kSubBits;
  std::uint64_t sub = (v >> shift) & ((1u << kSubBits) - 1);
  return (static_cast<std::size_t>(shift + 1) << kSubBits) + sub;
}

std::uint64_t Histogram::bucket_upper(std::size_t b) {
  if (b < (1u << (kSubBits + 1))) return b;
  std::size_t shift = (b >> kSubBits) - 1;
  std::uint64_t sub = b & ((1u << kSubBits) - 1);
  std::uint64_t lo = ((std::uint64_t{1} << kSubBits) | sub) << shift;
  return lo + (std::uint64_t{1} << shift) - 1;
}

void Histogram::add(std::uint64_t v) {
  std::size_t b = bucket_of(v);
  if (b >= buckets_.size()) buckets_.resize(b + 1, 0);
  ++buckets_[b];
  ++count_;
  sum_ += v;
  max_ = std::max(max_, v);
  min_ = count_ == 1 ? v : std::min(min_, v);
}

void Histogram::merge(const Histogram& o) {
  if (o.buckets_.size() > buckets_.size()) buckets_.resize(o.buckets_.size(), 0);
  for (std::size_t i = 0; i < o.buckets_.size(); ++i) buckets_[i] += o.buckets_[i];
  count_ += o.count_;
  sum_ += o.sum_;
  max_ = std::max(max_, o.max_);
  if (o.count_) min_ = count_ == o.count_ ? o.min_ : std::min(min_, o.min_);
}

std::uint64_t Histogram::quantile(double q) const {
  if (count_ == 0) return 0;
  q = std::clamp(q, 0.0, 1.0);
  auto rank = static_cast<std::uint64_t>(q * static_cast<double>(count_ - 1)) + 1;
  std::uint64_t seen = 0;
  for (std::size_t b = 0; b < buckets_.size(); ++b) {
    seen += buckets_[b];
    if (seen >= rank) return std::min(bucket_upper(b), max_);
  }
  return max_;
}

}  // namespace difache::util
