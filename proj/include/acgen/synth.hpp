#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "acgen/graph.hpp"
#include "acgen/mech.hpp"

namespace acgen {

class Rng;

// Column-per-node numeric table.
struct SampleMatrix {
  std::vector<NodeId> nodes;                 // column order
  std::vector<std::vector<double>> columns;  // columns[i] belongs to nodes[i]

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  bool has(NodeId v) const;
  std::span<const double> column(NodeId v) const;
  // Throws std::invalid_argument on ragged or non-finite columns.
  void validate() const;

  friend bool operator==(const SampleMatrix&, const SampleMatrix&) = default;
};

struct CancellationTrace {
  UnfaithfulTriple triple;
  // Raw total effect of a on c through the triangle, before c is rescaled:
  // w_ac + w_ab(effective) * w_bc.
  double epsilon = 0.0;
  // epsilon / |w_ab(effective) * w_bc|; |.| lies in [kEpsLo, kEpsHi].
  double epsilon_relative = 0.0;
  friend bool operator==(const CancellationTrace&, const CancellationTrace&) = default;
};

struct GenerationTrace {
  std::map<NodeId, double> scale_factor;
  std::map<Edge, double> effective_weight;  // linear edges only
  std::vector<CancellationTrace> cancellation;
  std::map<NodeId, double> selection_threshold;
  // Drawn share of the child's raw variance for each confounder edge.
  std::map<Edge, double> confounder_share;
  double retained_fraction = 1.0;  // kept / generated rows (selection)
  std::size_t calibration_rows = 0;
  std::size_t raw_rows = 0;

  friend bool operator==(const GenerationTrace&, const GenerationTrace&) = default;
};

struct Synthesis {
  SampleMatrix observed;
  SampleMatrix full;
  GenerationTrace trace;
  // Input assignment with the solved a->c weights of unfaithful triples.
  MechanismAssignment assignment;
};

inline constexpr double kEpsLo = 0.01;
inline constexpr double kEpsHi = 0.05;
inline constexpr std::size_t kSelectionCalibrationRows = 10000;
inline constexpr std::size_t kOversamplingFactor = 20;
// Minimum |rank correlation| between a selection node and each of its
// parents over the calibration batch; below it the draw is degenerate.
inline constexpr double kMinSelectionCorrelation = 0.1;
// Bisection range and steps for the log magnitude ratio of two selection
// input weights.
inline constexpr double kSelectionLogRatioBound = 8.0;
inline constexpr int kSelectionBisectionSteps = 20;
// Interquartile range of the standard normal.
inline constexpr double kNormalIqr = 1.3489795003921634;
inline constexpr double kConfounderShareLo = 0.3;
inline constexpr double kConfounderShareHi = 0.6;

// Generates every column in topological order, rescaling each node to its
// target stddev, solving the a->c weight of each unfaithful triple once b is
// known, then applies selection and drops latent columns.
//
// Each confounder edge weight is multiplied by confounder_gain() with a share
// drawn from U[kConfounderShareLo, kConfounderShareHi]. Selection input
// weights become +-1/robust_spread(parent) over the calibration batch, with
// signs aligned so the inputs do not cancel inside the selection node; two
// inputs are then rebalanced to equal rank correlation with the node.
//
// The calibration batch holds n_target rows without selection nodes and
// max(kSelectionCalibrationRows, n_target) rows with them. Scale factors and
// confounder gains use its first n_target rows, which are the same rows with
// or without selection; selection thresholds use all of it. Further batches
// (selection only) reuse the frozen values. A column that overflows to a
// non-finite value throws DegenerateDrawError.
Synthesis synthesize(const Dag& dag, MechanismAssignment assignment, const IssuePlan& plan,
                     std::size_t n_target, std::uint64_t seed);

// Regenerates the post-selection full matrix from a finished manifest (solved
// assignment plus trace) without re-deriving any parameter.
SampleMatrix replay_full(const Dag& dag, const MechanismAssignment& assignment,
                         const IssuePlan& plan, const GenerationTrace& trace,
                         std::size_t n_target, std::uint64_t seed);

struct Rescaled {
  std::vector<double> column;
  double scale_factor = 1.0;
};

// column * (target_scale / stddev(column)). Throws DegenerateDrawError when
// the column has (numerically) zero spread.
Rescaled rescale_node(std::span<const double> raw, double target_scale);

// Interquartile range / kNormalIqr: the stddev for Gaussian data, but
// insensitive to heavy tails. Throws DegenerateDrawError when it is zero.
double robust_spread(std::span<const double> x);

// Gain k such that k*h takes `share` of var(k*h + rest), treating h and rest
// as uncorrelated. Throws DegenerateDrawError when either has zero variance.
double confounder_gain(std::span<const double> h, std::span<const double> rest, double share);

struct NearCancellation {
  double w_ac = 0.0;
  double epsilon = 0.0;
  double epsilon_relative = 0.0;
};

// w_ac = -w_ab*w_bc + epsilon_relative*|w_ab*w_bc|. Rejects epsilon_relative
// == 0 (exact cancellation) with std::invalid_argument and a zero product
// with DegenerateDrawError.
NearCancellation solve_near_cancellation(double w_ab, double w_bc, double epsilon_relative);
// Same, with epsilon_relative drawn from +-U[kEpsLo, kEpsHi].
NearCancellation solve_near_cancellation(double w_ab, double w_bc, Rng& rng);

struct SelectionGate {
  NodeId node;
  double threshold = 0.0;
};

// The (1 - keep_fraction) quantile of s: rows with s above it are kept.
double selection_threshold(std::span<const double> s, double keep_fraction);

struct SelectionOutcome {
  SampleMatrix retained;
  std::size_t raw_rows = 0;   // rows generated, calibration batch included
  std::size_t kept_rows = 0;  // rows passing every gate, before truncation
};

// Keeps rows whose every gate column exceeds its threshold. While fewer than
// n_target rows are kept, pulls further batches of `batch_rows` rows from
// `next_batch`; the result is truncated to exactly n_target rows. Throws
// OversamplingError once max(kOversamplingFactor * n_target, batch rows of
// the calibration batch) rows were generated without reaching n_target.
// Without gates the calibration batch is returned untouched.
SelectionOutcome apply_selection(SampleMatrix calibration, std::span<const SelectionGate> gates,
                                 std::size_t n_target,
                                 const std::function<SampleMatrix(std::size_t)>& next_batch,
                                 std::size_t batch_rows);

// Projection onto the observed columns; rows unchanged.
SampleMatrix drop_latents(const SampleMatrix& full, const Dag& dag);

}  // namespace acgen
