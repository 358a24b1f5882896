#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace acgen {

struct NodeId {
  std::uint32_t value = 0;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

enum class NodeKind { kObserved, kConfounder, kSelection };

enum class NodeRole {
  kObservedRoot,
  kObservedChild,
  kLatentConfounder,
  kLatentSelection,
};

struct Edge {
  NodeId parent;
  NodeId child;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

enum class Density { kSparse, kDense };

struct DensityLevel {
  Density label = Density::kSparse;
  double expected_parents = 2.0;

  static DensityLevel sparse() { return {Density::kSparse, 2.0}; }
  static DensityLevel dense() { return {Density::kDense, 4.0}; }
  static DensityLevel of(Density label) {
    return label == Density::kSparse ? sparse() : dense();
  }
};

std::string_view to_string(Density d);
std::optional<Density> parse_density(std::string_view text);

// Directed acyclic graph with observed and latent nodes.
//
// Node names follow the on-disk convention: X1..Xn observed, H1.. hidden
// confounders, S1.. selection nodes. A valid topological order is maintained
// on every mutation; add_edge rejects edges that would close a cycle.
class Dag {
 public:
  Dag() = default;

  // Appends a node. An empty name picks the next X/H/S label for the kind.
  NodeId add_node(NodeKind kind, std::string name = {});
  void add_edge(NodeId parent, NodeId child);
  bool remove_edge(NodeId parent, NodeId child);
  bool has_edge(NodeId parent, NodeId child) const;

  std::size_t size() const { return kinds_.size(); }
  std::size_t edge_count() const { return edge_count_; }
  std::size_t observed_count() const;
  std::size_t latent_count() const { return size() - observed_count(); }

  NodeKind kind(NodeId v) const { return kinds_.at(v.value); }
  NodeRole role(NodeId v) const;
  bool is_observed(NodeId v) const { return kind(v) == NodeKind::kObserved; }
  const std::string& name(NodeId v) const { return names_.at(v.value); }
  std::optional<NodeId> find(std::string_view name) const;

  // Sorted by node index.
  const std::vector<NodeId>& parents(NodeId v) const { return parents_.at(v.value); }
  const std::vector<NodeId>& children(NodeId v) const { return children_.at(v.value); }

  std::vector<NodeId> nodes() const;
  std::vector<NodeId> observed_nodes() const;
  // Sorted by (parent, child) index.
  std::vector<Edge> edges() const;

  const std::vector<NodeId>& topo_order() const { return order_; }
  std::size_t position(NodeId v) const { return position_.at(v.value); }
  // Replaces the order; throws std::invalid_argument if it is not a
  // permutation of the nodes or some edge points backwards.
  void set_topo_order(std::vector<NodeId> order);

  void mark_force_linear(Edge e);
  bool is_force_linear(Edge e) const { return force_linear_.contains(e); }
  const std::set<Edge>& force_linear_edges() const { return force_linear_; }

  // reach[i][j] != 0 iff a directed path i -> ... -> j of length >= 1 exists.
  std::vector<std::vector<char>> reachability() const;
  // v and everything reachable from v.
  std::vector<NodeId> descendants(NodeId v) const;
  // v and everything that reaches v.
  std::vector<NodeId> ancestors(NodeId v) const;

  // Graph on the observed nodes only (latents and incident edges dropped).
  Dag observed_subgraph() const;

  // Violated structural invariants, one message each; empty when valid.
  std::vector<std::string> check_invariants() const;

  // Equality over names, kinds, edges and force-linear tags. The stored
  // topological order is not part of a graph's identity.
  friend bool operator==(const Dag& a, const Dag& b);

 private:
  bool reaches(NodeId from, NodeId to) const;
  void reorder();

  std::vector<NodeKind> kinds_;
  std::vector<std::string> names_;
  std::vector<std::vector<NodeId>> parents_;
  std::vector<std::vector<NodeId>> children_;
  std::vector<NodeId> order_;
  std::vector<std::size_t> position_;
  std::set<Edge> force_linear_;
  std::size_t edge_count_ = 0;
  std::size_t observed_ = 0;
  std::size_t confounders_ = 0;
  std::size_t selections_ = 0;
};

struct UnfaithfulTriple {
  NodeId source;    // a
  NodeId mediator;  // b
  NodeId sink;      // c
  friend bool operator==(const UnfaithfulTriple&, const UnfaithfulTriple&) = default;
};

struct Confounder {
  NodeId latent;
  std::vector<NodeId> children;
  friend bool operator==(const Confounder&, const Confounder&) = default;
};

struct SelectionNode {
  NodeId latent;
  std::vector<NodeId> parents;
  double keep_fraction = 0.7;
  friend bool operator==(const SelectionNode&, const SelectionNode&) = default;
};

struct IssuePlan {
  std::vector<UnfaithfulTriple> triples;
  std::vector<Confounder> confounders;
  std::vector<SelectionNode> selection;

  bool empty() const {
    return triples.empty() && confounders.empty() && selection.empty();
  }
  friend bool operator==(const IssuePlan&, const IssuePlan&) = default;
};

// Ordered Erdos-Renyi style sampler: nodes are placed in a random order and
// each forward pair (i -> j) is included with probability
// min(1, expected_parents / j), j being the 0-based position of the child.
// The labels X1..Xn are a random permutation of that order.
Dag generate_dag(std::size_t n, DensityLevel density, std::uint64_t seed);

// ceil(n_observed / 10): issue instances per active issue kind.
std::size_t issue_count(std::size_t n_observed);

// Adds `count` latent roots, each with exactly two observed children.
IssuePlan insert_confounders(Dag& dag, std::size_t count, std::uint64_t seed);

// Picks `count` node-disjoint triangles a->b, b->c, a->c over observed nodes
// and rewires the graph so each triangle is isolated at b and c: missing
// triangle edges are added, and every other in-edge of b and of c is removed.
// The three triangle edges are tagged force-linear. `reserve` observed nodes
// are kept outside the descendants of every mediator (selection parents are
// drawn from them).
IssuePlan select_unfaithful_triples(Dag& dag, std::size_t count,
                                    std::uint64_t seed, std::size_t reserve = 0);

// Observed nodes that no mediator of `triples` reaches (mediators included).
std::vector<NodeId> selection_candidates(const Dag& dag,
                                         std::span<const UnfaithfulTriple> triples);

// Adds `count` latent sinks, each with two observed parents drawn from
// selection_candidates(dag, triples).
IssuePlan attach_selection_nodes(Dag& dag, std::size_t count, double keep_fraction,
                                 std::uint64_t seed,
                                 std::span<const UnfaithfulTriple> triples = {});

// Edge list text: one "parent,child" line per edge, sorted by node index.
std::string to_edge_list(const Dag& dag);
// Parses edge-list text into name pairs; throws std::invalid_argument with
// the offending line number on malformed input.
std::vector<std::pair<std::string, std::string>> parse_edge_list(std::string_view text);

// Kind implied by a node label prefix (H -> confounder, S -> selection,
// anything else observed).
NodeKind kind_from_name(std::string_view name);

}  // namespace acgen
