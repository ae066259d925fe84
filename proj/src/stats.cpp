#include "hierbias/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hierbias/errors.hpp"

namespace hierbias {

std::vector<double> average_ranks(const std::vector<double>& xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw DataError("correlation inputs differ in length");
  if (xs.size() < 2) throw DataError("correlation needs at least two points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0 || syy == 0) throw DataError("correlation is undefined for a constant input");
  return sxy / std::sqrt(sxx * syy);
}

SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw DataError("spearman inputs differ in length");
  if (xs.size() < 3) throw DataError("spearman needs at least three points");
  const auto rx = average_ranks(xs);
  auto ry = average_ranks(ys);
  SpearmanResult out;
  out.rho = pearson(rx, ry);
  const std::size_t n = xs.size();
  if (n <= 8) {
    std::sort(ry.begin(), ry.end());
    long long extreme = 0, total = 0;
    do {
      ++total;
      if (std::abs(pearson(rx, ry)) >= std::abs(out.rho) - 1e-12) ++extreme;
    } while (std::next_permutation(ry.begin(), ry.end()));
    // next_permutation skips duplicate orderings of tied ranks; every
    // distinct ordering stands for the same number of raw permutations.
    out.p = static_cast<double>(extreme) / static_cast<double>(total);
  } else {
    const double z = std::abs(out.rho) * std::sqrt(static_cast<double>(n) - 1.0);
    out.p = std::erfc(z / std::sqrt(2.0));
  }
  return out;
}

double regression_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw DataError("regression inputs differ in length");
  if (xs.size() < 2) throw DataError("regression needs at least two points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0) throw DataError("regression is undefined for constant x");
  return sxy / sxx;
}

std::vector<double> normalize_to_range(const std::vector<double>& xs, double lo, double hi) {
  if (xs.empty()) return {};
  const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out[i] = *mx == *mn ? (lo + hi) / 2.0 : lo + (xs[i] - *mn) / (*mx - *mn) * (hi - lo);
  }
  return out;
}

double normalized_slope(const std::vector<double>& params, const std::vector<double>& accuracy) {
  if (accuracy.empty()) throw DataError("regression needs at least two points");
  const auto [lo, hi] = std::minmax_element(accuracy.begin(), accuracy.end());
  if (*lo == *hi) {
    regression_slope(params, accuracy);  // still rejects constant params
    return 0.0;
  }
  return regression_slope(normalize_to_range(params, *lo, *hi), accuracy);
}

}  // namespace hierbias
