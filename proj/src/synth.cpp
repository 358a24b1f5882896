#include "acgen/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "acgen/error.hpp"
#include "acgen/rng.hpp"
#include "acgen/stats.hpp"

namespace acgen {

// ---------------------------------------------------------------------------
// SampleMatrix

bool SampleMatrix::has(NodeId v) const {
  return std::find(nodes.begin(), nodes.end(), v) != nodes.end();
}

std::span<const double> SampleMatrix::column(NodeId v) const {
  const auto it = std::find(nodes.begin(), nodes.end(), v);
  if (it == nodes.end()) throw std::out_of_range("SampleMatrix: no column for node");
  return columns[static_cast<std::size_t>(it - nodes.begin())];
}

void SampleMatrix::validate() const {
  if (nodes.size() != columns.size()) throw std::invalid_argument("SampleMatrix: header/column mismatch");
  for (const auto& c : columns) {
    if (c.size() != rows()) throw std::invalid_argument("SampleMatrix: ragged columns");
    for (double x : c) {
      if (!std::isfinite(x)) throw std::invalid_argument("SampleMatrix: non-finite value");
    }
  }
}

namespace {

// Per-node data streams plus the mechanisms; stream state persists across
// batches, so batch k continues where batch k-1 stopped.
class ColumnGenerator {
 public:
  ColumnGenerator(const Dag& dag, const MechanismAssignment& assignment, std::uint64_t seed)
      : dag_(dag), assignment_(assignment) {
    streams_.reserve(dag.size());
    for (NodeId v : dag.nodes()) streams_.push_back(Rng::stream(seed, Stream::kData, v.value));
  }

  // Root sample or noise column; advances v's stream by `rows` rows.
  std::vector<double> draw(NodeId v, std::size_t rows) {
    Rng& rng = streams_[v.value];
    if (dag_.parents(v).empty()) return sample_root(assignment_.roots.at(v), rows, rng);
    const double sd = assignment_.noise.at(v).stddev;
    std::vector<double> noise(rows);
    for (auto& e : noise) e = rng.normal(0.0, sd);
    return noise;
  }

  std::vector<double> structural(NodeId v, std::span<const double> drawn,
                                 const std::vector<std::vector<double>>& columns) const {
    if (dag_.parents(v).empty()) return {drawn.begin(), drawn.end()};
    std::map<NodeId, std::span<const double>> parent_columns;
    for (NodeId p : dag_.parents(v)) parent_columns.emplace(p, columns[p.value]);
    auto out = child_structural_value(assignment_, dag_, v, parent_columns, drawn);
    for (double x : out) {
      if (!std::isfinite(x)) throw DegenerateDrawError("node " + dag_.name(v) + " overflowed");
    }
    return out;
  }

  std::vector<double> raw(NodeId v, std::size_t rows,
                          const std::vector<std::vector<double>>& columns) {
    return structural(v, draw(v, rows), columns);
  }

  // One batch with frozen scale factors.
  SampleMatrix batch(std::size_t rows, const std::map<NodeId, double>& scale) {
    std::vector<std::vector<double>> columns(dag_.size());
    for (NodeId v : dag_.topo_order()) {
      auto col = raw(v, rows, columns);
      const double s = scale.at(v);
      for (auto& x : col) x *= s;
      columns[v.value] = std::move(col);
    }
    return SampleMatrix{dag_.nodes(), std::move(columns)};
  }

 private:
  const Dag& dag_;
  const MechanismAssignment& assignment_;
  std::vector<Rng> streams_;
};

void check_plan(const Dag& dag, const MechanismAssignment& assignment, const IssuePlan& plan) {
  const auto problems = assignment.check(dag);
  if (!problems.empty()) throw std::invalid_argument("inconsistent assignment: " + problems.front());
  for (const auto& t : plan.triples) {
    for (const Edge e : {Edge{t.source, t.mediator}, Edge{t.mediator, t.sink}, Edge{t.source, t.sink}}) {
      if (!dag.has_edge(e.parent, e.child)) {
        throw std::invalid_argument("unfaithful triple edge " + dag.name(e.parent) + "->" +
                                    dag.name(e.child) + " missing from the graph");
      }
      if (kind_of(assignment.function(e)) != MechanismKind::kLinear) {
        throw std::invalid_argument("unfaithful triple edge " + dag.name(e.parent) + "->" +
                                    dag.name(e.child) + " is not linear");
      }
    }
  }
  for (const auto& s : plan.selection) {
    if (s.latent.value >= dag.size() || dag.kind(s.latent) != NodeKind::kSelection) {
      throw std::invalid_argument("selection plan refers to a non-selection node");
    }
    if (!(s.keep_fraction > 0.0 && s.keep_fraction < 1.0)) {
      throw std::invalid_argument("selection keep_fraction must be in (0, 1)");
    }
  }
}

std::size_t calibration_rows(const IssuePlan& plan, std::size_t n_target) {
  return plan.selection.empty() ? n_target : std::max(kSelectionCalibrationRows, n_target);
}

std::vector<SelectionGate> gates_from(const IssuePlan& plan, const GenerationTrace& trace) {
  std::vector<SelectionGate> gates;
  for (const auto& s : plan.selection) gates.push_back({s.latent, trace.selection_threshold.at(s.latent)});
  return gates;
}

std::span<const double> head(const std::vector<double>& column, std::size_t n) {
  return std::span<const double>(column).first(std::min(n, column.size()));
}

// Sets each selection input weight to +-1 / robust_spread(parent), then flips
// signs in parent order so that no input covaries negatively (by rank) with
// the sum of the inputs before it. With two parents the magnitude ratio is
// then bisected, product fixed, until both parents have the same rank
// correlation with the selection column.
void solve_selection_weights(MechanismAssignment& assignment, const Dag& dag, NodeId s,
                             std::span<const double> noise,
                             const std::vector<std::vector<double>>& columns) {
  const auto& parents = dag.parents(s);
  std::vector<double*> weights;
  std::vector<double> acc;
  for (NodeId p : parents) {
    auto& lin = std::get<Linear>(assignment.edge_functions.at(Edge{p, s}));
    const auto& col = columns[p.value];
    lin.weight = std::copysign(1.0 / robust_spread(col), lin.weight);
    if (acc.empty()) {
      acc.assign(col.size(), 0.0);
    } else if (stats::rank_correlation(acc, col) * lin.weight < 0.0) {
      lin.weight = -lin.weight;
    }
    for (std::size_t i = 0; i < col.size(); ++i) acc[i] += lin.weight * col[i];
    weights.push_back(&lin.weight);
  }
  if (parents.size() != 2) return;

  const auto& x = columns[parents[0].value];
  const auto& y = columns[parents[1].value];
  const double w0 = *weights[0];
  const double w1 = *weights[1];
  const auto rx = stats::average_ranks(x);
  const auto ry = stats::average_ranks(y);
  std::vector<double> col(noise.size());
  // Positive when parent 0 dominates at log-ratio t.
  const auto imbalance = [&](double t) {
    const double a = w0 * std::exp(0.5 * t);
    const double b = w1 * std::exp(-0.5 * t);
    for (std::size_t i = 0; i < col.size(); ++i) col[i] = a * x[i] + b * y[i] + noise[i];
    const auto rc = stats::average_ranks(col);
    return std::abs(stats::correlation(rc, rx)) - std::abs(stats::correlation(rc, ry));
  };
  double lo = -kSelectionLogRatioBound;
  double hi = kSelectionLogRatioBound;
  if (imbalance(lo) > 0.0 || imbalance(hi) < 0.0) return;
  for (int it = 0; it < kSelectionBisectionSteps; ++it) {
    const double mid = 0.5 * (lo + hi);
    (imbalance(mid) < 0.0 ? lo : hi) = mid;
  }
  const double t = 0.5 * (lo + hi);
  *weights[0] = w0 * std::exp(0.5 * t);
  *weights[1] = w1 * std::exp(-0.5 * t);
}

}  // namespace

// ---------------------------------------------------------------------------

double robust_spread(std::span<const double> x) {
  const double spread = (stats::quantile(x, 0.75) - stats::quantile(x, 0.25)) / kNormalIqr;
  if (!(spread > 0.0) || !std::isfinite(spread)) {
    throw DegenerateDrawError("robust_spread: interquartile range is zero");
  }
  return spread;
}

double confounder_gain(std::span<const double> h, std::span<const double> rest, double share) {
  if (!(share > 0.0 && share < 1.0)) throw std::invalid_argument("confounder_gain: share must be in (0, 1)");
  if (h.size() != rest.size() || h.size() < 2) {
    throw std::invalid_argument("confounder_gain: columns must match and hold >= 2 rows");
  }
  const double var_h = stats::variance(h);
  const double var_rest = stats::variance(rest);
  if (!(var_h > 0.0) || !(var_rest > 0.0) || !std::isfinite(var_h) || !std::isfinite(var_rest)) {
    throw DegenerateDrawError("confounder_gain: zero-variance contribution");
  }
  return std::sqrt(share / (1.0 - share) * var_rest / var_h);
}

Rescaled rescale_node(std::span<const double> raw, double target_scale) {
  if (!(target_scale > 0.0)) throw std::invalid_argument("rescale_node: target_scale must be > 0");
  const double sd = stats::stddev(raw);
  double magnitude = 1.0;
  for (double x : raw) magnitude = std::max(magnitude, std::abs(x));
  if (!std::isfinite(sd) || !(sd > 1e-12 * magnitude)) {
    throw DegenerateDrawError("rescale_node: column has zero variance");
  }
  Rescaled out;
  out.scale_factor = target_scale / sd;
  out.column.assign(raw.begin(), raw.end());
  for (auto& x : out.column) x *= out.scale_factor;
  return out;
}

NearCancellation solve_near_cancellation(double w_ab, double w_bc, double epsilon_relative) {
  if (epsilon_relative == 0.0 || !std::isfinite(epsilon_relative)) {
    throw std::invalid_argument("near-cancellation requires a nonzero finite epsilon");
  }
  const double path = w_ab * w_bc;
  if (path == 0.0 || !std::isfinite(path)) {
    throw DegenerateDrawError("near-cancellation: w_ab * w_bc is zero");
  }
  const double epsilon = epsilon_relative * std::abs(path);
  return {-path + epsilon, epsilon, epsilon_relative};
}

NearCancellation solve_near_cancellation(double w_ab, double w_bc, Rng& rng) {
  return solve_near_cancellation(w_ab, w_bc, rng.signed_uniform(kEpsLo, kEpsHi));
}

double selection_threshold(std::span<const double> s, double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction < 1.0)) {
    throw std::invalid_argument("selection_threshold: keep_fraction must be in (0, 1)");
  }
  return stats::quantile(s, 1.0 - keep_fraction);
}

SelectionOutcome apply_selection(SampleMatrix calibration, std::span<const SelectionGate> gates,
                                 std::size_t n_target,
                                 const std::function<SampleMatrix(std::size_t)>& next_batch,
                                 std::size_t batch_rows) {
  SelectionOutcome out;
  out.raw_rows = calibration.rows();
  if (gates.empty()) {
    out.kept_rows = calibration.rows();
    out.retained = std::move(calibration);
    return out;
  }
  if (n_target == 0 || batch_rows == 0) throw std::invalid_argument("apply_selection: empty target");
  const std::size_t cap = std::max(kOversamplingFactor * n_target, calibration.rows());

  out.retained.nodes = calibration.nodes;
  out.retained.columns.resize(calibration.nodes.size());
  SampleMatrix batch = std::move(calibration);
  for (;;) {
    std::vector<std::span<const double>> gate_columns;
    for (const auto& g : gates) gate_columns.push_back(batch.column(g.node));
    for (std::size_t r = 0; r < batch.rows(); ++r) {
      bool keep = true;
      for (std::size_t k = 0; k < gates.size() && keep; ++k) keep = gate_columns[k][r] > gates[k].threshold;
      if (!keep) continue;
      ++out.kept_rows;
      if (out.retained.rows() < n_target) {
        for (std::size_t c = 0; c < batch.columns.size(); ++c) {
          out.retained.columns[c].push_back(batch.columns[c][r]);
        }
      }
    }
    if (out.retained.rows() >= n_target) break;
    if (out.raw_rows >= cap) {
      throw OversamplingError("selection kept " + std::to_string(out.retained.rows()) + " of " +
                              std::to_string(n_target) + " rows after " +
                              std::to_string(out.raw_rows) + " generated rows");
    }
    batch = next_batch(batch_rows);
    if (batch.nodes != out.retained.nodes) throw std::logic_error("apply_selection: batch layout changed");
    out.raw_rows += batch.rows();
  }
  return out;
}

SampleMatrix drop_latents(const SampleMatrix& full, const Dag& dag) {
  SampleMatrix out;
  for (std::size_t i = 0; i < full.nodes.size(); ++i) {
    if (dag.is_observed(full.nodes[i])) {
      out.nodes.push_back(full.nodes[i]);
      out.columns.push_back(full.columns[i]);
    }
  }
  return out;
}

Synthesis synthesize(const Dag& dag, MechanismAssignment assignment, const IssuePlan& plan,
                     std::size_t n_target, std::uint64_t seed) {
  if (n_target == 0) throw std::invalid_argument("synthesize: n_target must be >= 1");
  check_plan(dag, assignment, plan);

  Synthesis out;
  GenerationTrace& trace = out.trace;
  const std::size_t n_cal = calibration_rows(plan, n_target);
  trace.calibration_rows = n_cal;

  std::map<NodeId, std::size_t> triple_of_sink;
  for (std::size_t i = 0; i < plan.triples.size(); ++i) triple_of_sink[plan.triples[i].sink] = i;
  trace.cancellation.resize(plan.triples.size());

  ColumnGenerator generator(dag, assignment, seed);
  std::vector<std::vector<double>> columns(dag.size());
  for (NodeId v : dag.topo_order()) {
    if (const auto it = triple_of_sink.find(v); it != triple_of_sink.end()) {
      const auto& t = plan.triples[it->second];
      const double w_ab = trace.scale_factor.at(t.mediator) *
                          std::get<Linear>(assignment.function({t.source, t.mediator})).weight;
      const double w_bc = std::get<Linear>(assignment.function({t.mediator, t.sink})).weight;
      Rng rng = Rng::stream(seed, Stream::kSolver, it->second);
      const auto solved = solve_near_cancellation(w_ab, w_bc, rng);
      assignment.edge_functions[{t.source, t.sink}] = Linear{solved.w_ac};
      trace.cancellation[it->second] = {t, solved.epsilon, solved.epsilon_relative};
    }
    const auto drawn = generator.draw(v, n_cal);
    if (dag.kind(v) == NodeKind::kSelection) solve_selection_weights(assignment, dag, v, drawn, columns);
    Rng gain_rng = Rng::stream(seed, Stream::kConfounderGain, v.value);
    for (NodeId p : dag.parents(v)) {
      if (dag.kind(p) != NodeKind::kConfounder) continue;
      const Edge e{p, v};
      auto& lin = std::get<Linear>(assignment.edge_functions.at(e));
      const auto total = generator.structural(v, drawn, columns);
      std::vector<double> h(n_target), rest(n_target);
      for (std::size_t i = 0; i < n_target; ++i) {
        h[i] = lin.weight * columns[p.value][i];
        rest[i] = total[i] - h[i];
      }
      const double share = gain_rng.uniform(kConfounderShareLo, kConfounderShareHi);
      lin.weight *= confounder_gain(h, rest, share);
      trace.confounder_share[e] = share;
    }
    auto raw = generator.structural(v, drawn, columns);
    const double factor = rescale_node(head(raw, n_target), assignment.target_scale.at(v)).scale_factor;
    for (auto& x : raw) x *= factor;
    trace.scale_factor[v] = factor;
    columns[v.value] = std::move(raw);
  }

  for (const auto& [edge, fn] : assignment.edge_functions) {
    if (const auto* lin = std::get_if<Linear>(&fn)) {
      trace.effective_weight[edge] = trace.scale_factor.at(edge.child) * lin->weight;
    }
  }

  for (const auto& s : plan.selection) {
    const auto& col = columns[s.latent.value];
    trace.selection_threshold[s.latent] = selection_threshold(col, s.keep_fraction);
    for (NodeId p : s.parents) {
      const double r = stats::rank_correlation(col, columns[p.value]);
      if (!(std::abs(r) >= kMinSelectionCorrelation)) {
        throw DegenerateDrawError("selection node " + dag.name(s.latent) +
                                  " barely depends on parent " + dag.name(p));
      }
    }
  }

  const auto gates = gates_from(plan, trace);
  auto outcome = apply_selection(
      SampleMatrix{dag.nodes(), std::move(columns)}, gates, n_target,
      [&](std::size_t rows) { return generator.batch(rows, trace.scale_factor); }, n_cal);
  trace.raw_rows = outcome.raw_rows;
  trace.retained_fraction =
      static_cast<double>(outcome.kept_rows) / static_cast<double>(outcome.raw_rows);

  out.full = std::move(outcome.retained);
  out.full.validate();
  out.observed = drop_latents(out.full, dag);
  out.assignment = std::move(assignment);
  return out;
}

SampleMatrix replay_full(const Dag& dag, const MechanismAssignment& assignment,
                         const IssuePlan& plan, const GenerationTrace& trace,
                         std::size_t n_target, std::uint64_t seed) {
  check_plan(dag, assignment, plan);
  if (trace.calibration_rows != calibration_rows(plan, n_target)) {
    throw std::invalid_argument("replay: calibration row count does not match the plan");
  }
  ColumnGenerator generator(dag, assignment, seed);
  auto calibration = generator.batch(trace.calibration_rows, trace.scale_factor);
  const auto gates = gates_from(plan, trace);
  auto outcome = apply_selection(
      std::move(calibration), gates, n_target,
      [&](std::size_t rows) { return generator.batch(rows, trace.scale_factor); },
      trace.calibration_rows);
  return std::move(outcome.retained);
}

}  // namespace acgen
