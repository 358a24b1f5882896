#include "acgen/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "acgen/stats.hpp"
#include "acgen/suite.hpp"

namespace acgen {

VarsortabilityReport varsortability(const SampleMatrix& matrix, const Dag& dag) {
  const auto reach = dag.reachability();
  std::vector<NodeId> nodes;
  std::vector<double> var;
  for (std::size_t i = 0; i < matrix.nodes.size(); ++i) {
    if (!dag.is_observed(matrix.nodes[i])) continue;
    nodes.push_back(matrix.nodes[i]);
    var.push_back(stats::variance(matrix.columns[i]));
  }
  VarsortabilityReport report;
  double score = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      if (i == j || !reach[nodes[i].value][nodes[j].value]) continue;
      ++report.pair_count;
      if (var[i] < var[j]) {
        score += 1.0;
      } else if (var[i] == var[j]) {
        score += 0.5;
        ++report.ties;
      }
    }
  }
  if (report.pair_count == 0) throw std::invalid_argument("no path pairs");
  report.value = score / static_cast<double>(report.pair_count);
  return report;
}

double pair_correlation(const SampleMatrix& matrix, NodeId x, NodeId y) {
  const auto cx = matrix.column(x);
  const auto cy = matrix.column(y);
  if (cx.size() < 3) throw std::invalid_argument("pair_correlation: need at least 3 rows");
  const double r = stats::correlation(cx, cy);
  if (std::isnan(r)) throw std::invalid_argument("pair_correlation: zero-variance column");
  return r;
}

OlsFit ols(std::span<const double> y, const std::vector<std::span<const double>>& regressors) {
  const auto n = static_cast<Eigen::Index>(y.size());
  const auto p = static_cast<Eigen::Index>(regressors.size() + 1);
  if (n <= p) throw std::invalid_argument("ols: not enough rows");
  Eigen::MatrixXd x(n, p);
  x.col(0).setOnes();
  for (Eigen::Index j = 1; j < p; ++j) {
    const auto& r = regressors[static_cast<std::size_t>(j - 1)];
    if (static_cast<Eigen::Index>(r.size()) != n) throw std::invalid_argument("ols: length mismatch");
    x.col(j) = Eigen::Map<const Eigen::VectorXd>(r.data(), n);
  }
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  const Eigen::MatrixXd xtx = x.transpose() * x;
  const Eigen::LDLT<Eigen::MatrixXd> solver(xtx);
  if (solver.info() != Eigen::Success || !solver.isPositive()) {
    throw std::invalid_argument("ols: singular design");
  }
  const Eigen::VectorXd beta = solver.solve(x.transpose() * yv);
  const Eigen::VectorXd resid = yv - x * beta;
  OlsFit fit;
  fit.residual_variance = resid.squaredNorm() / static_cast<double>(n - p);
  const Eigen::MatrixXd cov = solver.solve(Eigen::MatrixXd::Identity(p, p)) * fit.residual_variance;
  for (Eigen::Index j = 0; j < p; ++j) {
    fit.coefficients.push_back(beta(j));
    fit.standard_errors.push_back(std::sqrt(cov(j, j)));
  }
  return fit;
}

double partial_correlation(std::span<const double> x, std::span<const double> y,
                           std::span<const double> z) {
  const double rxy = stats::correlation(x, y);
  const double rxz = stats::correlation(x, z);
  const double ryz = stats::correlation(y, z);
  return (rxy - rxz * ryz) / std::sqrt((1.0 - rxz * rxz) * (1.0 - ryz * ryz));
}

std::vector<CancellationReport> cancellation_audit(const Dag& dag,
                                                   const MechanismAssignment& assignment,
                                                   const GenerationTrace& trace,
                                                   const IssuePlan& plan,
                                                   const SampleMatrix& data) {
  std::vector<CancellationReport> out;
  for (const auto& t : plan.triples) {
    CancellationReport r;
    r.triple = t;
    const auto label = dag.name(t.source) + "," + dag.name(t.mediator) + "," + dag.name(t.sink);
    const auto weight = [&](NodeId p, NodeId c) -> std::optional<double> {
      const auto it = assignment.edge_functions.find({p, c});
      if (it == assignment.edge_functions.end()) return std::nullopt;
      const auto* lin = std::get_if<Linear>(&it->second);
      if (!lin) return std::nullopt;
      return lin->weight;
    };
    const auto w_ab = weight(t.source, t.mediator);
    const auto w_bc = weight(t.mediator, t.sink);
    const auto w_ac = weight(t.source, t.sink);
    if (!w_ab || !w_bc || !w_ac || !trace.scale_factor.contains(t.mediator) ||
        !trace.scale_factor.contains(t.sink)) {
      r.reason = "triple " + label + " lacks linear manifest entries";
      out.push_back(r);
      continue;
    }
    const double path = trace.scale_factor.at(t.mediator) * *w_ab * *w_bc;
    r.epsilon_relative = (*w_ac + path) / std::abs(path);
    const double scale_c = trace.scale_factor.at(t.sink);
    r.direct_manifest = scale_c * *w_ac;
    r.mediator_manifest = scale_c * *w_bc;

    const auto a = data.column(t.source);
    const auto b = data.column(t.mediator);
    const auto c = data.column(t.sink);
    r.marginal_correlation = stats::correlation(a, c);
    r.partial_correlation = partial_correlation(a, c, b);
    const auto fit = ols(c, {a, b});
    r.direct_estimate = fit.coefficients[1];
    r.direct_se = fit.standard_errors[1];
    r.mediator_estimate = fit.coefficients[2];
    r.mediator_se = fit.standard_errors[2];

    const double magnitude = std::abs(r.epsilon_relative);
    if (r.epsilon_relative == 0.0 || !(magnitude >= kEpsLo * (1 - 1e-6))) {
      r.reason = "exact or too-strong cancellation (epsilon_relative " +
                 std::to_string(r.epsilon_relative) + ")";
    } else if (magnitude > kEpsHi * (1 + 1e-6)) {
      r.reason = "epsilon_relative " + std::to_string(r.epsilon_relative) + " outside the band";
    } else if (r.direct_manifest == 0.0) {
      r.reason = "direct a->c weight is zero";
    } else if (!(std::abs(r.marginal_correlation) < kWeakThreshold)) {
      r.reason = "marginal |corr(a,c)| " + std::to_string(r.marginal_correlation) +
                 " not below the weak threshold";
    } else if (!(std::abs(r.direct_estimate - r.direct_manifest) <= kRecoverySigmas * r.direct_se)) {
      r.reason = "direct effect not recovered within 3 standard errors";
    } else if (!(std::abs(r.mediator_estimate - r.mediator_manifest) <=
                 kRecoverySigmas * r.mediator_se)) {
      r.reason = "mediator effect not recovered within 3 standard errors";
    } else {
      r.pass = true;
    }
    out.push_back(r);
  }
  return out;
}

std::vector<CancellationReport> cancellation_audit(const DatasetBundle& bundle) {
  return cancellation_audit(bundle.full_graph, bundle.assignment, bundle.trace, bundle.plan,
                            bundle.observed_data);
}

double ks_statistic(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::vector<double> a(x.begin(), x.end());
  std::vector<double> b(y.begin(), y.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double ks_critical(std::size_t n, std::size_t m, double alpha) {
  if (n == 0 || m == 0) throw std::invalid_argument("ks_critical: empty sample");
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  return c * std::sqrt((nd + md) / (nd * md));
}

bool correlation_significant(double r, std::size_t n, double alpha) {
  if (n < 4) return false;
  // Two-sided normal quantile by bisection on erfc; alpha is a small constant.
  double lo = 0.0, hi = 10.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (std::erfc(mid / std::sqrt(2.0)) > alpha ? lo : hi) = mid;
  }
  const double z = std::atanh(std::clamp(r, -1.0 + 1e-15, 1.0 - 1e-15)) *
                   std::sqrt(static_cast<double>(n) - 3.0);
  return std::abs(z) > hi;
}

std::vector<ShiftStatistic> selection_shift(const DatasetBundle& with_selection,
                                            const DatasetBundle& without_selection,
                                            double alpha) {
  const Dag& g = with_selection.full_graph;
  const auto names_of = [](const DatasetBundle& b) {
    std::vector<std::string> names;
    for (NodeId v : b.observed_data.nodes) names.push_back(b.full_graph.name(v));
    return names;
  };
  if (names_of(with_selection) != names_of(without_selection)) {
    throw std::invalid_argument("selection_shift: observed variable sets differ");
  }

  std::vector<char> parent(g.size(), 0);
  std::vector<char> parent_ancestry(g.size(), 0);
  for (const auto& s : with_selection.plan.selection) {
    for (NodeId p : s.parents) {
      parent[p.value] = 1;
      for (NodeId a : g.ancestors(p)) parent_ancestry[a.value] = 1;
    }
  }

  std::vector<ShiftStatistic> out;
  for (std::size_t i = 0; i < with_selection.observed_data.nodes.size(); ++i) {
    const NodeId v = with_selection.observed_data.nodes[i];
    ShiftStatistic s;
    s.variable = g.name(v);
    const auto& x = with_selection.observed_data.columns[i];
    const auto& y = without_selection.observed_data.columns[i];
    s.ks = ks_statistic(x, y);
    s.critical = ks_critical(x.size(), y.size(), alpha);
    s.exceeds = s.ks > s.critical;
    s.selection_parent = parent[v.value];
    const auto anc = g.ancestors(v);
    s.related = std::any_of(anc.begin(), anc.end(), [&](NodeId a) { return parent_ancestry[a.value]; });
    s.flagged = s.selection_parent && s.exceeds;
    out.push_back(s);
  }
  return out;
}

}  // namespace acgen
