#include "acgen/mech.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "acgen/rng.hpp"

namespace acgen {
namespace {

constexpr double kLinearLo = 0.5;
constexpr double kLinearHi = 2.0;
constexpr double kMediatorRatioLo = 0.25;
constexpr double kMediatorRatioHi = 0.5;

double logistic(double z) {
  // Split by sign so exp never overflows.
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

EdgeFunction random_function(MechanismKind kind, Rng& rng) {
  switch (kind) {
    case MechanismKind::kLinear:
      return Linear{rng.signed_uniform(kLinearLo, kLinearHi)};
    case MechanismKind::kPolynomial: {
      const double c1 = rng.signed_uniform(0.5, 2.0);
      const double c2 = rng.uniform(-0.5, 0.5);
      const double c3 = std::copysign(rng.uniform(0.0, 0.3), c1);
      return Polynomial{c1, c2, c3};
    }
    case MechanismKind::kSigmoid: {
      const double a = rng.signed_uniform(1.0, 3.0);
      const double b = rng.signed_uniform(0.5, 2.0);
      const double c = rng.uniform(-1.0, 1.0);
      return Sigmoid{a, b, c};
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace

// ---------------------------------------------------------------------------
// GMM

void GmmSpec::validate() const {
  if (components.empty() || components.size() > 5) {
    throw std::invalid_argument("GMM must have 1..5 components");
  }
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight >= 0.0)) throw std::invalid_argument("GMM weight must be >= 0");
    if (!(c.stddev > 0.0)) throw std::invalid_argument("GMM stddev must be > 0");
    if (!std::isfinite(c.mean)) throw std::invalid_argument("GMM mean must be finite");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("GMM weights must sum to 1");
}

double GmmSpec::mean() const {
  double m = 0.0;
  for (const auto& c : components) m += c.weight * c.mean;
  return m;
}

double GmmSpec::variance() const {
  const double m = mean();
  double v = 0.0;
  for (const auto& c : components) {
    v += c.weight * (c.stddev * c.stddev + (c.mean - m) * (c.mean - m));
  }
  return v;
}

GmmSpec random_gmm_spec(Rng& rng) {
  const std::size_t k = 2 + rng.index(4);
  GmmSpec spec;
  std::vector<double> raw(k);
  for (auto& w : raw) w = -std::log(1.0 - rng.uniform());  // Exp(1) -> flat Dirichlet
  const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    spec.components.push_back({raw[i] / total, rng.uniform(-4.0, 4.0), rng.uniform(0.3, 1.0)});
  }
  return spec;
}

std::vector<double> sample_root(const GmmSpec& spec, std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("sample_root: n must be >= 1");
  spec.validate();
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& c : spec.components) cumulative.push_back(acc += c.weight);
  std::vector<double> out(n);
  for (auto& x : out) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    const auto& c = spec.components[static_cast<std::size_t>(it - cumulative.begin())];
    x = rng.normal(c.mean, c.stddev);
  }
  return out;
}

std::vector<double> sample_root(const GmmSpec& spec, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return sample_root(spec, n, rng);
}

// ---------------------------------------------------------------------------
// Edge functions

MechanismKind kind_of(const EdgeFunction& f) {
  return static_cast<MechanismKind>(f.index());
}

std::string_view to_string(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::kLinear:
      return "linear";
    case MechanismKind::kPolynomial:
      return "polynomial";
    case MechanismKind::kSigmoid:
      return "sigmoid";
  }
  return "?";
}

std::optional<MechanismKind> parse_mechanism_kind(std::string_view text) {
  if (text == "linear") return MechanismKind::kLinear;
  if (text == "polynomial") return MechanismKind::kPolynomial;
  if (text == "sigmoid") return MechanismKind::kSigmoid;
  return std::nullopt;
}

std::vector<double> parameters(const EdgeFunction& f) {
  return std::visit(
      [](const auto& g) -> std::vector<double> {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Linear>) {
          return {g.weight};
        } else if constexpr (std::is_same_v<T, Polynomial>) {
          return {g.c1, g.c2, g.c3};
        } else {
          return {g.amplitude, g.slope, g.offset};
        }
      },
      f);
}

EdgeFunction make_edge_function(MechanismKind kind, std::span<const double> p) {
  const std::size_t arity = kind == MechanismKind::kLinear ? 1 : 3;
  if (p.size() != arity) throw std::invalid_argument("edge function: wrong parameter count");
  for (double v : p) {
    if (!std::isfinite(v)) throw std::invalid_argument("edge function: non-finite parameter");
  }
  switch (kind) {
    case MechanismKind::kLinear:
      return Linear{p[0]};
    case MechanismKind::kPolynomial:
      if (p[0] == 0.0 && p[1] == 0.0 && p[2] == 0.0) {
        throw std::invalid_argument("polynomial: all coefficients zero");
      }
      return Polynomial{p[0], p[1], p[2]};
    case MechanismKind::kSigmoid:
      if (p[0] == 0.0 || p[1] == 0.0) {
        throw std::invalid_argument("sigmoid: amplitude and slope must be nonzero");
      }
      return Sigmoid{p[0], p[1], p[2]};
  }
  throw std::logic_error("unreachable");
}

double evaluate(const EdgeFunction& f, double x) {
  return std::visit(
      [x](const auto& g) -> double {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Linear>) {
          return g.weight * x;
        } else if constexpr (std::is_same_v<T, Polynomial>) {
          return x * (g.c1 + x * (g.c2 + x * g.c3));
        } else {
          return g.amplitude * logistic(g.slope * x + g.offset);
        }
      },
      f);
}

std::vector<double> eval_edge_function(const EdgeFunction& f, std::span<const double> x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw std::domain_error("edge function: non-finite input");
    out[i] = evaluate(f, x[i]);
  }
  return out;
}

std::string_view to_string(MechanismMode mode) {
  return mode == MechanismMode::kLinearOnly ? "linear" : "mixed";
}

std::optional<MechanismMode> parse_mechanism_mode(std::string_view text) {
  if (text == "linear") return MechanismMode::kLinearOnly;
  if (text == "mixed") return MechanismMode::kMixed;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Assignment

const EdgeFunction& MechanismAssignment::function(Edge e) const {
  const auto it = edge_functions.find(e);
  if (it == edge_functions.end()) throw std::out_of_range("no edge function for edge");
  return it->second;
}

std::vector<std::string> MechanismAssignment::check(const Dag& dag) const {
  std::vector<std::string> problems;
  const auto label = [&](Edge e) { return dag.name(e.parent) + "->" + dag.name(e.child); };
  const auto edges = dag.edges();
  if (edge_functions.size() != edges.size()) {
    problems.push_back("edge function count does not match edge count");
  }
  for (const Edge& e : edges) {
    const auto it = edge_functions.find(e);
    if (it == edge_functions.end()) {
      problems.push_back("missing edge function for " + label(e));
      continue;
    }
    const bool linear = kind_of(it->second) == MechanismKind::kLinear;
    if (!linear && (mode == MechanismMode::kLinearOnly || dag.is_force_linear(e) ||
                    dag.kind(e.child) == NodeKind::kSelection ||
                    dag.kind(e.parent) == NodeKind::kConfounder)) {
      problems.push_back("edge " + label(e) + " must be linear");
    }
  }
  for (NodeId v : dag.nodes()) {
    const auto ts = target_scale.find(v);
    if (ts == target_scale.end() || !(ts->second > 0.0)) {
      problems.push_back("missing or non-positive target scale for " + dag.name(v));
    }
    if (dag.parents(v).empty()) {
      const auto r = roots.find(v);
      if (r == roots.end()) {
        problems.push_back("missing root distribution for " + dag.name(v));
      } else {
        try {
          r->second.validate();
        } catch (const std::invalid_argument& e) {
          problems.push_back("invalid root distribution for " + dag.name(v) + ": " + e.what());
        }
      }
    } else {
      const auto n = noise.find(v);
      if (n == noise.end() || !(n->second.stddev > 0.0)) {
        problems.push_back("missing or non-positive noise for " + dag.name(v));
      }
    }
  }
  return problems;
}

MechanismAssignment assign_mechanisms(const Dag& dag, MechanismMode mode, const IssuePlan& plan,
                                      std::uint64_t seed) {
  MechanismAssignment out;
  out.mode = mode;

  std::vector<Rng> streams;
  streams.reserve(dag.size());
  for (NodeId v : dag.nodes()) {
    streams.push_back(Rng::stream(seed, Stream::kMechanisms, v.value));
    out.target_scale[v] = streams.back().uniform(0.5, 2.0);
  }

  std::map<NodeId, NodeId> mediator_source;
  for (const auto& t : plan.triples) mediator_source[t.mediator] = t.source;

  for (NodeId v : dag.nodes()) {
    Rng& rng = streams[v.value];
    if (dag.parents(v).empty()) {
      out.roots[v] = random_gmm_spec(rng);
      continue;
    }
    out.noise[v] = NoiseSpec{rng.uniform(0.3, 1.0)};
    const bool selection = dag.kind(v) == NodeKind::kSelection;
    for (NodeId p : dag.parents(v)) {
      const Edge e{p, v};
      if (selection) {
        const double w = 1.0 / out.target_scale.at(p);
        out.edge_functions[e] = Linear{rng.coin() ? -w : w};
        continue;
      }
      MechanismKind kind = MechanismKind::kLinear;
      if (mode == MechanismMode::kMixed && !dag.is_force_linear(e) &&
          dag.kind(p) != NodeKind::kConfounder) {
        kind = static_cast<MechanismKind>(rng.index(3));
      }
      out.edge_functions[e] = random_function(kind, rng);
    }
    if (const auto it = mediator_source.find(v); it != mediator_source.end()) {
      const auto& fn = out.edge_functions.at(Edge{it->second, v});
      const double w = std::get<Linear>(fn).weight;
      const double ratio = rng.uniform(kMediatorRatioLo, kMediatorRatioHi);
      out.noise[v] = NoiseSpec{std::abs(w) * out.target_scale.at(it->second) / ratio};
    }
  }
  return out;
}

std::vector<double> child_structural_value(
    const MechanismAssignment& assignment, const Dag& dag, NodeId child,
    const std::map<NodeId, std::span<const double>>& parent_columns,
    std::span<const double> noise) {
  std::vector<double> out(noise.begin(), noise.end());
  for (NodeId p : dag.parents(child)) {
    const auto it = parent_columns.find(p);
    if (it == parent_columns.end()) {
      throw std::invalid_argument("child_structural_value: missing column for parent " +
                                  dag.name(p));
    }
    if (it->second.size() != out.size()) {
      throw std::invalid_argument("child_structural_value: column length mismatch for " +
                                  dag.name(p));
    }
    const EdgeFunction& f = assignment.function(Edge{p, child});
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double x = it->second[i];
      if (!std::isfinite(x)) throw std::domain_error("edge function: non-finite input");
      out[i] += evaluate(f, x);
    }
  }
  return out;
}

}  // namespace acgen
