#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "acgen/graph.hpp"

namespace acgen {

class Rng;

struct GmmComponent {
  double weight = 1.0;
  double mean = 0.0;
  double stddev = 1.0;
  friend bool operator==(const GmmComponent&, const GmmComponent&) = default;
};

// Univariate Gaussian mixture with one scalar stddev per component.
struct GmmSpec {
  std::vector<GmmComponent> components;

  // Throws std::invalid_argument unless weights sum to 1 (+-1e-9), every
  // stddev is positive and there are 1..5 components. (Generated specs always
  // have 2..5; a single component is accepted for hand-built specs.)
  void validate() const;
  double mean() const;
  double variance() const;
  friend bool operator==(const GmmSpec&, const GmmSpec&) = default;
};

// 2..5 components, means U[-4, 4], stddevs U[0.3, 1.0], flat-simplex weights.
GmmSpec random_gmm_spec(Rng& rng);

// n i.i.d. draws: component by weight, then Normal(mean, stddev).
std::vector<double> sample_root(const GmmSpec& spec, std::size_t n, Rng& rng);
std::vector<double> sample_root(const GmmSpec& spec, std::size_t n, std::uint64_t seed);

struct Linear {
  double weight = 1.0;
  friend bool operator==(const Linear&, const Linear&) = default;
};

// c1*x + c2*x^2 + c3*x^3; no constant term.
struct Polynomial {
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  friend bool operator==(const Polynomial&, const Polynomial&) = default;
};

// amplitude * logistic(slope * x + offset)
struct Sigmoid {
  double amplitude = 1.0;
  double slope = 1.0;
  double offset = 0.0;
  friend bool operator==(const Sigmoid&, const Sigmoid&) = default;
};

using EdgeFunction = std::variant<Linear, Polynomial, Sigmoid>;

enum class MechanismKind { kLinear, kPolynomial, kSigmoid };

MechanismKind kind_of(const EdgeFunction& f);
std::string_view to_string(MechanismKind kind);
std::optional<MechanismKind> parse_mechanism_kind(std::string_view text);

// Flat parameter list in declaration order, as written to the manifest.
std::vector<double> parameters(const EdgeFunction& f);
// Inverse of parameters(); throws std::invalid_argument on a wrong arity or
// a parameter set that violates the kind's invariants.
EdgeFunction make_edge_function(MechanismKind kind, std::span<const double> params);

double evaluate(const EdgeFunction& f, double x);
// Elementwise evaluate(); throws std::domain_error on non-finite input.
std::vector<double> eval_edge_function(const EdgeFunction& f, std::span<const double> x);

enum class MechanismMode { kLinearOnly, kMixed };

std::string_view to_string(MechanismMode mode);
std::optional<MechanismMode> parse_mechanism_mode(std::string_view text);

struct NoiseSpec {
  double stddev = 1.0;
  friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

// Ground truth behind the mechanism manifest.
struct MechanismAssignment {
  MechanismMode mode = MechanismMode::kLinearOnly;
  std::map<Edge, EdgeFunction> edge_functions;
  std::map<NodeId, GmmSpec> roots;         // nodes without parents
  std::map<NodeId, NoiseSpec> noise;       // nodes with parents
  std::map<NodeId, double> target_scale;   // every node: marginal stddev

  const EdgeFunction& function(Edge e) const;
  // Violated invariants against `dag`, one message each.
  std::vector<std::string> check(const Dag& dag) const;

  friend bool operator==(const MechanismAssignment&, const MechanismAssignment&) = default;
};

// Every node draws from its own stream (seed, node index):
//   target scale U[0.5, 2]; roots get a random GMM, other nodes Gaussian
//   noise with stddev U[0.3, 1]; then one function per incoming edge in
//   parent order. Mixed mode picks the kind uniformly from the three;
//   force-linear edges, confounder outputs and selection inputs stay linear.
// Selection inputs get weight +-1/target_scale(parent), so each parent
// contributes unit variance; synthesize() later re-solves the magnitude. An unfaithful mediator's noise is set so its
// source explains a bounded share of it: stddev = |w_ab| * scale(a) / r with
// r ~ U[0.25, 0.5].
MechanismAssignment assign_mechanisms(const Dag& dag, MechanismMode mode,
                                      const IssuePlan& plan, std::uint64_t seed);

// Sum over parents of f_{p->child}(column_p) plus the noise column; this is
// the child's raw value before rescaling.
std::vector<double> child_structural_value(
    const MechanismAssignment& assignment, const Dag& dag, NodeId child,
    const std::map<NodeId, std::span<const double>>& parent_columns,
    std::span<const double> noise);

}  // namespace acgen
