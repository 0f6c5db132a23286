#include "difache/bench/workload.hpp"

#include <cmath>
#include <stdexcept>

#include "difache/util/hash.hpp"

namespace difache::bench {

namespace {

double helper1(double x) {
  return std::abs(x) > 1e-8 ? std::log1p(x) / x : 1 - x * (0.5 - x * (1.0 / 3 - 0.25 * x));
}

double helper2(double x) {
  return std::abs(x) > 1e-8 ? std::expm1(x) / x : 1 + x * 0.5 * (1 + x / 3 * (1 + 0.25 * x));
}

}  // namespace

void WorkloadSpec::validate() const {
  if (cns <= 0 || clients_per_cn <= 0) throw std::invalid_argument("need at least one client");
  if (read_ratio < 0 || read_ratio > 1) throw std::invalid_argument("read ratio outside [0,1]");
  if (zipf_alpha < 0) throw std::invalid_argument("zipf alpha must be >= 0");
  if (object_size < 16 || object_size > 64 * 1024)
    throw std::invalid_argument("object size outside [16, 65536]");
  if (object_count == 0) throw std::invalid_argument("need at least one object");
  double f = 0;
  for (const auto& p : populations) {
    if (p.fraction < 0 || p.read_ratio < 0 || p.read_ratio > 1)
      throw std::invalid_argument("bad population");
    f += p.fraction;
  }
  if (!populations.empty() && std::abs(f - 1.0) > 1e-6)
    throw std::invalid_argument("population fractions must sum to 1");
}

Zipf::Zipf(std::uint64_t n, double alpha) : n_(n), alpha_(alpha) {
  if (n == 0) throw std::invalid_argument("zipf over an empty range");
  if (alpha_ > 0) {
    hx1_ = h_integral(1.5) - 1.0;
    hn_ = h_integral(static_cast<double>(n_) + 0.5);
    s_ = 2.0 - h_integral_inverse(h_integral(2.5) - h(2.0));
  }
}

double Zipf::h_integral(double x) const {
  double lx = std::log(x);
  return helper2((1.0 - alpha_) * lx) * lx;
}

double Zipf::h(double x) const { return std::exp(-alpha_ * std::log(x)); }

double Zipf::h_integral_inverse(double x) const {
  double t = x * (1.0 - alpha_);
  if (t < -1.0) t = -1.0;
  return std::exp(helper1(t) * x);
}

std::uint64_t Zipf::operator()(std::mt19937_64& rng) const {
  if (alpha_ == 0) return std::uniform_int_distribution<std::uint64_t>(1, n_)(rng);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (;;) {
    double u = hn_ + u01(rng) * (hx1_ - hn_);
    double x = h_integral_inverse(u);
    auto k = static_cast<std::uint64_t>(x + 0.5);
    if (k < 1) k = 1;
    if (k > n_) k = n_;
    double kd = static_cast<double>(k);
    if (kd - x <= s_ || u >= h_integral(kd + 0.5) - h(kd)) return k;
  }
}

double Zipf::mass(std::uint64_t k) const {
  if (norm_ == 0) {
    for (std::uint64_t i = n_; i >= 1; --i) norm_ += std::pow(static_cast<double>(i), -alpha_);
  }
  return std::pow(static_cast<double>(k), -alpha_) / norm_;
}

std::size_t population_of(const WorkloadSpec& spec, std::uint64_t object) {
  if (spec.populations.size() <= 1) return 0;
  double u = static_cast<double>(util::mix64(object ^ 0x706f70756c617469ULL) >> 11) * 0x1.0p-53;
  double acc = 0;
  for (std::size_t i = 0; i < spec.populations.size(); ++i) {
    acc += spec.populations[i].fraction;
    if (u < acc) return i;
  }
  return spec.populations.size() - 1;
}

double read_ratio_of(const WorkloadSpec& spec, std::uint64_t object) {
  if (spec.populations.empty()) return spec.read_ratio;
  return spec.populations[population_of(spec, object)].read_ratio;
}

std::uint64_t ops_for_client(std::uint64_t total, int clients, int client) {
  auto c = static_cast<std::uint64_t>(clients);
  auto i = static_cast<std::uint64_t>(client);
  return total / c + (i < total % c ? 1 : 0);
}

SyntheticStream::SyntheticStream(const WorkloadSpec& spec, int client)
    : spec_(&spec),
      zipf_(spec.object_count, spec.zipf_alpha),
      rng_(util::mix64(spec.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(client))),
      remaining_(ops_for_client(spec.total_ops, spec.clients(), client)) {}

Op SyntheticStream::next() {
  Op op;
  op.object = zipf_(rng_) - 1;
  op.write = coin_(rng_) >= read_ratio_of(*spec_, op.object);
  if (remaining_) --remaining_;
  return op;
}

}  // namespace difache::bench
