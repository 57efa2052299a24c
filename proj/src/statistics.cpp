#include "beamlink/statistics.hpp"

#include <algorithm>
#include <cmath>

namespace beamlink {

double quantile_sorted(std::span<const double> sorted, double p) {
  const std::size_t n = sorted.size();
  const double h = static_cast<double>(n - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

Descriptor describe(std::vector<double> values) {
  Descriptor d;
  d.count = values.size();
  if (values.empty()) return d;
  std::sort(values.begin(), values.end());

  // Summing in sorted order keeps the mean independent of input order.
  double sum = 0.0;
  for (double v : values) sum += v;
  d.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - d.mean) * (v - d.mean);
    d.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  d.q1 = quantile_sorted(values, 0.25);
  d.median = quantile_sorted(values, 0.5);
  d.q3 = quantile_sorted(values, 0.75);
  return d;
}

}  // namespace beamlink
