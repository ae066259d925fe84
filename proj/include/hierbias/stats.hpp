#pragma once

#include <vector>

namespace hierbias {

/// 1-based ranks; ties share the average of the ranks they span.
std::vector<double> average_ranks(const std::vector<double>& xs);

/// Pearson correlation. Throws DataError on length mismatch, fewer than two
/// points or a constant input.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

struct SpearmanResult {
  double rho = 0.0;
  /// Two-sided. Exact over all n! rank permutations for n <= 8, normal
  /// approximation z = rho * sqrt(n - 1) above that.
  double p = 1.0;
};

/// Needs n >= 3 and non-constant inputs (DataError otherwise).
SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys);

/// Least-squares slope of ys on xs. Throws DataError on fewer than two
/// points or constant xs.
double regression_slope(const std::vector<double>& xs, const std::vector<double>& ys);

/// Min-max maps xs onto [lo, hi]. A constant input maps to the midpoint.
std::vector<double> normalize_to_range(const std::vector<double>& xs, double lo, double hi);

/// Slope of accuracy on parameter counts normalized onto
/// [min(accuracy), max(accuracy)].
double normalized_slope(const std::vector<double>& params, const std::vector<double>& accuracy);

}  // namespace hierbias
