#include "acgen/graph.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "acgen/error.hpp"
#include "acgen/rng.hpp"

namespace acgen {

std::string_view to_string(Density d) {
  return d == Density::kSparse ? "sparse" : "dense";
}

std::optional<Density> parse_density(std::string_view text) {
  if (text == "sparse") return Density::kSparse;
  if (text == "dense") return Density::kDense;
  return std::nullopt;
}

NodeKind kind_from_name(std::string_view name) {
  if (!name.empty() && name.front() == 'H') return NodeKind::kConfounder;
  if (!name.empty() && name.front() == 'S') return NodeKind::kSelection;
  return NodeKind::kObserved;
}

// ---------------------------------------------------------------------------
// Dag

NodeId Dag::add_node(NodeKind kind, std::string name) {
  const NodeId id{static_cast<std::uint32_t>(kinds_.size())};
  std::size_t* counter = kind == NodeKind::kObserved     ? &observed_
                         : kind == NodeKind::kConfounder ? &confounders_
                                                         : &selections_;
  ++*counter;
  if (name.empty()) {
    const char prefix = kind == NodeKind::kObserved     ? 'X'
                        : kind == NodeKind::kConfounder ? 'H'
                                                        : 'S';
    name = prefix + std::to_string(*counter);
  }
  if (find(name)) throw std::invalid_argument("duplicate node name " + name);
  kinds_.push_back(kind);
  names_.push_back(std::move(name));
  parents_.emplace_back();
  children_.emplace_back();
  position_.push_back(order_.size());
  order_.push_back(id);
  return id;
}

std::size_t Dag::observed_count() const { return observed_; }

std::optional<NodeId> Dag::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return NodeId{static_cast<std::uint32_t>(i)};
  }
  return std::nullopt;
}

NodeRole Dag::role(NodeId v) const {
  switch (kind(v)) {
    case NodeKind::kConfounder:
      return NodeRole::kLatentConfounder;
    case NodeKind::kSelection:
      return NodeRole::kLatentSelection;
    case NodeKind::kObserved:
      break;
  }
  return parents(v).empty() ? NodeRole::kObservedRoot : NodeRole::kObservedChild;
}

bool Dag::has_edge(NodeId parent, NodeId child) const {
  const auto& ps = parents_.at(child.value);
  return std::binary_search(ps.begin(), ps.end(), parent);
}

bool Dag::reaches(NodeId from, NodeId to) const {
  if (from == to) return true;
  std::vector<char> seen(size(), 0);
  std::vector<NodeId> stack{from};
  seen[from.value] = 1;
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    for (NodeId c : children_[v.value]) {
      if (c == to) return true;
      if (!seen[c.value]) {
        seen[c.value] = 1;
        stack.push_back(c);
      }
    }
  }
  return false;
}

void Dag::add_edge(NodeId parent, NodeId child) {
  if (parent.value >= size() || child.value >= size()) {
    throw std::out_of_range("add_edge: unknown node");
  }
  if (has_edge(parent, child)) return;
  if (reaches(child, parent)) {
    throw CycleError("edge " + name(parent) + "->" + name(child) + " closes a cycle");
  }
  auto& ps = parents_[child.value];
  ps.insert(std::upper_bound(ps.begin(), ps.end(), parent), parent);
  auto& cs = children_[parent.value];
  cs.insert(std::upper_bound(cs.begin(), cs.end(), child), child);
  ++edge_count_;
  if (position_[parent.value] > position_[child.value]) reorder();
}

bool Dag::remove_edge(NodeId parent, NodeId child) {
  if (!has_edge(parent, child)) return false;
  auto& ps = parents_[child.value];
  ps.erase(std::lower_bound(ps.begin(), ps.end(), parent));
  auto& cs = children_[parent.value];
  cs.erase(std::lower_bound(cs.begin(), cs.end(), child));
  force_linear_.erase(Edge{parent, child});
  --edge_count_;
  return true;
}

// Kahn's algorithm, always emitting the ready node with the smallest previous
// position, so an order only changes where an edge forces it to.
void Dag::reorder() {
  std::vector<std::size_t> indegree(size());
  for (std::size_t i = 0; i < size(); ++i) indegree[i] = parents_[i].size();
  using Item = std::pair<std::size_t, std::uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> ready;
  for (std::size_t i = 0; i < size(); ++i) {
    if (indegree[i] == 0) ready.emplace(position_[i], static_cast<std::uint32_t>(i));
  }
  std::vector<NodeId> order;
  order.reserve(size());
  while (!ready.empty()) {
    const NodeId v{ready.top().second};
    ready.pop();
    order.push_back(v);
    for (NodeId c : children_[v.value]) {
      if (--indegree[c.value] == 0) ready.emplace(position_[c.value], c.value);
    }
  }
  if (order.size() != size()) throw CycleError("graph contains a cycle");
  order_ = std::move(order);
  for (std::size_t i = 0; i < order_.size(); ++i) position_[order_[i].value] = i;
}

void Dag::set_topo_order(std::vector<NodeId> order) {
  if (order.size() != size()) throw std::invalid_argument("topo order: wrong length");
  std::vector<std::size_t> pos(size(), std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i].value >= size() || pos[order[i].value] != std::numeric_limits<std::size_t>::max()) {
      throw std::invalid_argument("topo order: not a permutation");
    }
    pos[order[i].value] = i;
  }
  for (const Edge& e : edges()) {
    if (pos[e.parent.value] > pos[e.child.value]) {
      throw std::invalid_argument("topo order: edge " + name(e.parent) + "->" +
                                  name(e.child) + " points backwards");
    }
  }
  order_ = std::move(order);
  position_ = std::move(pos);
}

std::vector<NodeId> Dag::nodes() const {
  std::vector<NodeId> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = NodeId{static_cast<std::uint32_t>(i)};
  return out;
}

std::vector<NodeId> Dag::observed_nodes() const {
  std::vector<NodeId> out;
  for (NodeId v : nodes()) {
    if (is_observed(v)) out.push_back(v);
  }
  return out;
}

std::vector<Edge> Dag::edges() const {
  std::vector<Edge> out;
  out.reserve(edge_count_);
  for (std::size_t p = 0; p < size(); ++p) {
    for (NodeId c : children_[p]) out.push_back(Edge{NodeId{static_cast<std::uint32_t>(p)}, c});
  }
  return out;
}

void Dag::mark_force_linear(Edge e) {
  if (!has_edge(e.parent, e.child)) throw std::invalid_argument("force-linear tag on missing edge");
  force_linear_.insert(e);
}

std::vector<std::vector<char>> Dag::reachability() const {
  std::vector<std::vector<char>> reach(size(), std::vector<char>(size(), 0));
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    auto& row = reach[it->value];
    for (NodeId c : children_[it->value]) {
      row[c.value] = 1;
      const auto& sub = reach[c.value];
      for (std::size_t j = 0; j < size(); ++j) row[j] |= sub[j];
    }
  }
  return reach;
}

namespace {

template <typename Next>
std::vector<NodeId> closure_from(NodeId start, std::size_t n, Next next) {
  std::vector<char> seen(n, 0);
  std::vector<NodeId> stack{start};
  seen[start.value] = 1;
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    for (NodeId w : next(v)) {
      if (!seen[w.value]) {
        seen[w.value] = 1;
        stack.push_back(w);
      }
    }
  }
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (seen[i]) out.push_back(NodeId{static_cast<std::uint32_t>(i)});
  }
  return out;
}

}  // namespace

std::vector<NodeId> Dag::descendants(NodeId v) const {
  return closure_from(v, size(), [this](NodeId w) -> const auto& { return children(w); });
}

std::vector<NodeId> Dag::ancestors(NodeId v) const {
  return closure_from(v, size(), [this](NodeId w) -> const auto& { return parents(w); });
}

Dag Dag::observed_subgraph() const {
  Dag out;
  std::vector<std::optional<NodeId>> remap(size());
  for (NodeId v : nodes()) {
    if (is_observed(v)) remap[v.value] = out.add_node(NodeKind::kObserved, name(v));
  }
  std::vector<NodeId> order;
  for (NodeId v : order_) {
    if (remap[v.value]) order.push_back(*remap[v.value]);
  }
  out.set_topo_order(std::move(order));
  for (const Edge& e : edges()) {
    if (remap[e.parent.value] && remap[e.child.value]) {
      out.add_edge(*remap[e.parent.value], *remap[e.child.value]);
      if (is_force_linear(e)) out.mark_force_linear({*remap[e.parent.value], *remap[e.child.value]});
    }
  }
  return out;
}

std::vector<std::string> Dag::check_invariants() const {
  std::vector<std::string> problems;
  for (const Edge& e : edges()) {
    if (position_[e.parent.value] >= position_[e.child.value]) {
      problems.push_back("edge " + name(e.parent) + "->" + name(e.child) +
                         " violates the topological order");
    }
  }
  for (NodeId v : nodes()) {
    if (kind(v) == NodeKind::kConfounder) {
      if (!parents(v).empty()) problems.push_back("confounder " + name(v) + " has parents");
      if (children(v).size() < 2) problems.push_back("confounder " + name(v) + " has fewer than 2 children");
    }
    if (kind(v) == NodeKind::kSelection && !children(v).empty()) {
      problems.push_back("selection node " + name(v) + " has children");
    }
  }
  return problems;
}

bool operator==(const Dag& a, const Dag& b) {
  return a.kinds_ == b.kinds_ && a.names_ == b.names_ && a.parents_ == b.parents_ &&
         a.force_linear_ == b.force_linear_;
}

// ---------------------------------------------------------------------------
// Sampling and surgery

Dag generate_dag(std::size_t n, DensityLevel density, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("generate_dag: n must be >= 1");
  if (!(density.expected_parents > 0.0)) {
    throw std::invalid_argument("generate_dag: expected_parents must be > 0");
  }
  Rng rng = Rng::stream(seed, Stream::kDag);
  Dag dag;
  for (std::size_t i = 0; i < n; ++i) dag.add_node(NodeKind::kObserved);

  std::vector<NodeId> order = dag.nodes();
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  dag.set_topo_order(order);

  for (std::size_t j = 1; j < n; ++j) {
    const double p = std::min(1.0, density.expected_parents / static_cast<double>(j));
    for (std::size_t i = 0; i < j; ++i) {
      if (rng.uniform() < p) dag.add_edge(order[i], order[j]);
    }
  }
  return dag;
}

std::size_t issue_count(std::size_t n_observed) {
  if (n_observed == 0) throw std::invalid_argument("issue_count: n_observed must be >= 1");
  return (n_observed + 9) / 10;
}

IssuePlan insert_confounders(Dag& dag, std::size_t count, std::uint64_t seed) {
  IssuePlan plan;
  if (count == 0) return plan;
  const auto observed = dag.observed_nodes();
  if (observed.size() < 2) {
    throw std::invalid_argument("insert_confounders: need at least 2 observed nodes");
  }
  Rng rng = Rng::stream(seed, Stream::kConfounders);
  const auto reach = dag.reachability();
  std::set<std::pair<NodeId, NodeId>> used;

  for (std::size_t k = 0; k < count; ++k) {
    // Preference tiers: unused and not path-connected, then unused, then any.
    std::vector<std::pair<NodeId, NodeId>> tiers[3];
    for (std::size_t i = 0; i < observed.size(); ++i) {
      for (std::size_t j = i + 1; j < observed.size(); ++j) {
        const auto pair = std::make_pair(observed[i], observed[j]);
        const bool connected = reach[pair.first.value][pair.second.value] ||
                               reach[pair.second.value][pair.first.value];
        if (used.contains(pair)) {
          tiers[2].push_back(pair);
        } else if (connected) {
          tiers[1].push_back(pair);
        } else {
          tiers[0].push_back(pair);
        }
      }
    }
    const auto& pool = !tiers[0].empty() ? tiers[0] : !tiers[1].empty() ? tiers[1] : tiers[2];
    const auto pick = pool[rng.index(pool.size())];
    used.insert(pick);

    const NodeId h = dag.add_node(NodeKind::kConfounder);
    dag.add_edge(h, pick.first);
    dag.add_edge(h, pick.second);
    plan.confounders.push_back({h, {pick.first, pick.second}});
  }
  return plan;
}

std::vector<NodeId> selection_candidates(const Dag& dag,
                                         std::span<const UnfaithfulTriple> triples) {
  std::vector<char> excluded(dag.size(), 0);
  for (const auto& t : triples) {
    for (NodeId d : dag.descendants(t.mediator)) excluded[d.value] = 1;
  }
  std::vector<NodeId> out;
  for (NodeId v : dag.observed_nodes()) {
    if (!excluded[v.value]) out.push_back(v);
  }
  return out;
}

namespace {

struct TripleCandidate {
  UnfaithfulTriple triple;
  std::size_t edits = 0;
};

bool has_latent_parent(const Dag& dag, NodeId v) {
  return std::any_of(dag.parents(v).begin(), dag.parents(v).end(),
                     [&](NodeId p) { return !dag.is_observed(p); });
}

void isolate_triangle(Dag& dag, const UnfaithfulTriple& t) {
  const auto strip = [&](NodeId v, std::initializer_list<NodeId> keep) {
    const auto parents = dag.parents(v);
    for (NodeId p : parents) {
      if (std::find(keep.begin(), keep.end(), p) == keep.end()) dag.remove_edge(p, v);
    }
  };
  strip(t.mediator, {t.source});
  strip(t.sink, {t.source, t.mediator});
  dag.add_edge(t.source, t.mediator);
  dag.add_edge(t.mediator, t.sink);
  dag.add_edge(t.source, t.sink);
  dag.mark_force_linear({t.source, t.mediator});
  dag.mark_force_linear({t.mediator, t.sink});
  dag.mark_force_linear({t.source, t.sink});
}

}  // namespace

IssuePlan select_unfaithful_triples(Dag& dag, std::size_t count, std::uint64_t seed,
                                    std::size_t reserve) {
  IssuePlan plan;
  if (count == 0) return plan;
  if (dag.observed_count() < 3) {
    throw std::invalid_argument("select_unfaithful_triples: need at least 3 observed nodes");
  }
  Rng rng = Rng::stream(seed, Stream::kTriples);
  std::vector<char> used(dag.size(), 0);

  for (std::size_t k = 0; k < count; ++k) {
    std::vector<NodeId> observed;
    for (NodeId v : dag.topo_order()) {
      if (dag.is_observed(v) && !used[v.value]) observed.push_back(v);
    }
    std::vector<TripleCandidate> candidates;
    for (std::size_t i = 0; i < observed.size(); ++i) {
      for (std::size_t j = i + 1; j < observed.size(); ++j) {
        const NodeId a = observed[i];
        const NodeId b = observed[j];
        if (has_latent_parent(dag, b)) continue;
        const std::size_t b_edits =
            !dag.has_edge(a, b) + dag.parents(b).size() - dag.has_edge(a, b);
        for (std::size_t l = j + 1; l < observed.size(); ++l) {
          const NodeId c = observed[l];
          if (has_latent_parent(dag, c)) continue;
          const std::size_t kept = dag.has_edge(a, c) + dag.has_edge(b, c);
          const std::size_t c_edits = (2 - kept) + dag.parents(c).size() - kept;
          candidates.push_back({{a, b, c}, b_edits + c_edits});
        }
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto& x, const auto& y) { return x.edits < y.edits; });

    // Walk edit levels from cheapest. Within a level, the first feasible
    // candidate of a random permutation is a uniform pick among those that
    // keep enough selection candidates free.
    const std::size_t remaining = count - k - 1;
    const std::size_t needed = reserve + 2 * remaining;
    std::optional<UnfaithfulTriple> chosen;
    for (std::size_t begin = 0; begin < candidates.size() && !chosen;) {
      std::size_t end = begin;
      while (end < candidates.size() && candidates[end].edits == candidates[begin].edits) ++end;
      for (std::size_t i = end; i > begin + 1; --i) {
        std::swap(candidates[i - 1], candidates[begin + rng.index(i - begin)]);
      }
      for (std::size_t i = begin; i < end && !chosen; ++i) {
        Dag trial = dag;
        isolate_triangle(trial, candidates[i].triple);
        auto triples = plan.triples;
        triples.push_back(candidates[i].triple);
        if (selection_candidates(trial, triples).size() >= needed) chosen = candidates[i].triple;
      }
      begin = end;
    }
    if (!chosen) throw InsufficientTriplesError(count, k);

    isolate_triangle(dag, *chosen);
    used[chosen->source.value] = used[chosen->mediator.value] = used[chosen->sink.value] = 1;
    plan.triples.push_back(*chosen);
  }
  return plan;
}

IssuePlan attach_selection_nodes(Dag& dag, std::size_t count, double keep_fraction,
                                 std::uint64_t seed,
                                 std::span<const UnfaithfulTriple> triples) {
  IssuePlan plan;
  if (!(keep_fraction > 0.0 && keep_fraction < 1.0)) {
    throw std::invalid_argument("attach_selection_nodes: keep_fraction must be in (0, 1)");
  }
  if (count == 0) return plan;
  if (dag.observed_count() < 2) {
    throw std::invalid_argument("attach_selection_nodes: need at least 2 observed nodes");
  }
  const auto pool = selection_candidates(dag, triples);
  if (pool.size() < 2) {
    throw std::invalid_argument(
        "attach_selection_nodes: fewer than 2 observed nodes outside the mediators' descendants");
  }
  Rng rng = Rng::stream(seed, Stream::kSelection);

  std::vector<std::pair<NodeId, NodeId>> fresh;
  for (std::size_t k = 0; k < count; ++k) {
    // Parent pairs are drawn without replacement until the pool is exhausted.
    if (fresh.empty()) {
      for (std::size_t i = 0; i < pool.size(); ++i) {
        for (std::size_t j = i + 1; j < pool.size(); ++j) fresh.emplace_back(pool[i], pool[j]);
      }
    }
    const std::size_t pick = rng.index(fresh.size());
    const auto parents = fresh[pick];
    fresh.erase(fresh.begin() + static_cast<std::ptrdiff_t>(pick));

    const NodeId s = dag.add_node(NodeKind::kSelection);
    dag.add_edge(parents.first, s);
    dag.add_edge(parents.second, s);
    plan.selection.push_back({s, {parents.first, parents.second}, keep_fraction});
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Edge-list text

std::string to_edge_list(const Dag& dag) {
  std::string out;
  for (const Edge& e : dag.edges()) {
    out += dag.name(e.parent);
    out += ',';
    out += dag.name(e.child);
    out += '\n';
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_edge_list(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string_view::npos || comma == 0 || comma + 1 == line.size() ||
        line.find(',', comma + 1) != std::string_view::npos) {
      throw std::invalid_argument("edge list line " + std::to_string(line_no) +
                                  ": expected 'parent,child'");
    }
    out.emplace_back(std::string(line.substr(0, comma)), std::string(line.substr(comma + 1)));
  }
  return out;
}

}  // namespace acgen
