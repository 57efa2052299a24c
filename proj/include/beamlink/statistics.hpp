#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace beamlink {

/// Quantile of ascending `sorted` data by linear interpolation between the
/// closest ranks: position h = (n − 1)·p, value x[⌊h⌋] + (h − ⌊h⌋)(x[⌊h⌋+1] − x[⌊h⌋]).
/// `sorted` must be non-empty.
double quantile_sorted(std::span<const double> sorted, double p);

/// Summary of one sample. Statistics are meaningless when count == 0.
struct Descriptor {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n − 1); 0 for a single value
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

/// Describes `values` (any order). The result does not depend on input order.
Descriptor describe(std::vector<double> values);

}  // namespace beamlink
