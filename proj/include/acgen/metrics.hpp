#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "acgen/graph.hpp"
#include "acgen/mech.hpp"
#include "acgen/synth.hpp"

namespace acgen {

struct DatasetBundle;

struct VarsortabilityReport {
  double value = 0.5;
  std::size_t pair_count = 0;
  std::size_t ties = 0;
  friend bool operator==(const VarsortabilityReport&, const VarsortabilityReport&) = default;
};

// Fraction of ordered pairs (i, j) of observed columns with a directed path
// i -> ... -> j whose empirical variance increases along the path; ties count
// one half. Throws std::invalid_argument("no path pairs") without such pairs.
VarsortabilityReport varsortability(const SampleMatrix& matrix, const Dag& dag);

// Pearson correlation. Throws std::invalid_argument for fewer than 3 rows or
// a zero-variance column.
double pair_correlation(const SampleMatrix& matrix, NodeId x, NodeId y);

// Correlation of x and y after regressing both on z.
double partial_correlation(std::span<const double> x, std::span<const double> y,
                           std::span<const double> z);

struct OlsFit {
  std::vector<double> coefficients;  // intercept first
  std::vector<double> standard_errors;
  double residual_variance = 0.0;
};

// Least squares of y on an intercept plus the given regressors.
OlsFit ols(std::span<const double> y, const std::vector<std::span<const double>>& regressors);

// Marginal |corr(a, c)| ceiling for a planned near-cancellation at n = 2500.
// Frozen from the brute-force triangle simulation in tests/test_oracles.cpp:
// the 99.99% quantile of |corr(a, c)| under the generator's parameter ranges
// stays below it.
inline constexpr double kWeakThreshold = 0.1;
inline constexpr double kRecoverySigmas = 3.0;

struct CancellationReport {
  UnfaithfulTriple triple;
  double marginal_correlation = 0.0;
  double partial_correlation = 0.0;  // (a, c) given b
  double direct_estimate = 0.0;      // OLS coefficient of a in c ~ a + b
  double direct_se = 0.0;
  double direct_manifest = 0.0;      // effective a->c weight
  double mediator_estimate = 0.0;    // OLS coefficient of b
  double mediator_se = 0.0;
  double mediator_manifest = 0.0;    // effective b->c weight
  double epsilon_relative = 0.0;     // recomputed from the manifest weights
  bool pass = false;
  std::string reason;                // empty on pass
};

// One report per planned triple, using the observed data.
std::vector<CancellationReport> cancellation_audit(const Dag& dag,
                                                   const MechanismAssignment& assignment,
                                                   const GenerationTrace& trace,
                                                   const IssuePlan& plan,
                                                   const SampleMatrix& data);
std::vector<CancellationReport> cancellation_audit(const DatasetBundle& bundle);

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::span<const double> x, std::span<const double> y);
// Asymptotic critical value of the two-sample statistic at level alpha.
double ks_critical(std::size_t n, std::size_t m, double alpha = 0.01);

// Fisher z test of zero correlation, two-sided.
bool correlation_significant(double r, std::size_t n, double alpha = 0.01);

struct ShiftStatistic {
  std::string variable;
  double ks = 0.0;
  double critical = 0.0;
  bool exceeds = false;           // ks > critical
  bool selection_parent = false;  // parent of a selection node
  bool related = false;           // shares an ancestor with a selection parent
  bool flagged = false;           // selection parent whose ks exceeds the null quantile
};

// Compares every observed variable across a bundle generated with selection
// and the same configuration generated without it. Throws
// std::invalid_argument when the observed variable sets differ.
std::vector<ShiftStatistic> selection_shift(const DatasetBundle& with_selection,
                                            const DatasetBundle& without_selection,
                                            double alpha = 0.01);

}  // namespace acgen
