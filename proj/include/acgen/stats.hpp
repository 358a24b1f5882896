#pragma once

#include <span>
#include <vector>

namespace acgen::stats {

double mean(std::span<const double> x);
// Sample variance / stddev (n - 1 denominator); 0 for fewer than 2 values.
double variance(std::span<const double> x);
double stddev(std::span<const double> x);
// Pearson correlation; NaN when either column has zero variance.
double correlation(std::span<const double> x, std::span<const double> y);
// 1-based ranks; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> x);
// Spearman correlation: Pearson on average ranks (ties share a rank).
double rank_correlation(std::span<const double> x, std::span<const double> y);
// Linear-interpolation quantile (R type 7) of an unsorted sample, q in [0, 1].
double quantile(std::span<const double> x, double q);

}  // namespace acgen::stats
