#include "difache/adaptive/profit.hpp"

#include <algorithm>
#include <cmath>

namespace difache::adaptive {

double profit(const ProfitInputs& p) {
  const Latencies& t = p.t;
  return p.r_hit * (t.t_rb - t.t_rhit) + p.r_miss * (t.t_rb - t.t_rmiss) +
         p.r_w * (t.t_wb - t.t_wcached);
}

double break_even_threshold(double h, const Latencies& t) {
  h = std::clamp(h, 0.0, 1.0);
  double dw = t.t_wcached - t.t_wb;
  double drh = t.t_rb - t.t_rhit;
  double drm = t.t_rb - t.t_rmiss;
  double denom = dw + h * drh + (1 - h) * drm;
  // Profit is r * denom - dw. A flat or falling line has no upward crossing:
  // cache everywhere only if caching still pays at r = 1.
  if (denom <= 0) return denom - dw >= 0 ? 0.0 : 1.0;
  return std::clamp(dw / denom, 0.0, 1.0);
}

std::uint16_t to_fixed(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(x * kFixedOne));
}

}  // namespace difache::adaptive
