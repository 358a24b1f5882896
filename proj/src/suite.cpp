#include "acgen/suite.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "acgen/rng.hpp"
#include "acgen/stats.hpp"

namespace acgen {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

std::string IssueSet::token() const {
  if (empty()) return "none";
  std::string t;
  if (unfaithful) t += 'U';
  if (confounding) t += 'C';
  if (selection) t += 'S';
  return t;
}

std::optional<IssueSet> IssueSet::from_token(std::string_view token) {
  if (token == "none") return IssueSet{};
  IssueSet s;
  std::size_t pos = 0;
  const auto take = [&](char c, bool& flag) {
    if (pos < token.size() && token[pos] == c) {
      flag = true;
      ++pos;
    }
  };
  take('U', s.unfaithful);
  take('C', s.confounding);
  take('S', s.selection);
  if (pos != token.size() || s.empty()) return std::nullopt;
  return s;
}

std::optional<IssueSet> IssueSet::parse(std::string_view text) {
  if (text == "none") return IssueSet{};
  IssueSet s;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    if (item == "unfaithful") {
      s.unfaithful = true;
    } else if (item == "confounder") {
      s.confounding = true;
    } else if (item == "selection") {
      s.selection = true;
    } else {
      return std::nullopt;
    }
  }
  if (s.empty()) return std::nullopt;
  return s;
}

std::vector<std::string> IssueSet::names() const {
  std::vector<std::string> out;
  if (unfaithful) out.emplace_back("unfaithful");
  if (confounding) out.emplace_back("confounder");
  if (selection) out.emplace_back("selection");
  return out;
}

std::string ScenarioConfig::label() const {
  return std::to_string(size) + "_" + std::string(to_string(density)) + "_" +
         std::string(to_string(mode)) + "_" + issues.token() + "_" + std::to_string(seed);
}

void ScenarioConfig::validate(bool allow_custom_size) const {
  if (size == 0) throw std::invalid_argument("size must be >= 1");
  if (!allow_custom_size &&
      std::find(kSuiteSizes.begin(), kSuiteSizes.end(), size) == kSuiteSizes.end()) {
    throw std::invalid_argument("size " + std::to_string(size) +
                                " is not one of 10, 15, 25, 50");
  }
  if (rows == 0) throw std::invalid_argument("rows must be >= 1");
  if (!(keep_fraction > 0.0 && keep_fraction < 1.0)) {
    throw std::invalid_argument("keep_fraction must be in (0, 1)");
  }
}

std::uint64_t scenario_seed(const ScenarioConfig& config) {
  return Rng::derive(config.seed, static_cast<std::uint64_t>(Stream::kScenario), config.size,
                     static_cast<std::uint64_t>(config.density));
}

std::vector<ScenarioConfig> expand_matrix(std::span<const std::uint64_t> seeds) {
  if (seeds.size() != 3) throw std::invalid_argument("expand_matrix: exactly 3 seeds required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw std::invalid_argument("expand_matrix: seeds must be distinct");
  }
  const IssueSet issue_sets[] = {
      {}, {true, false, false}, {false, true, false}, {false, false, true}, {true, true, true}};
  std::vector<ScenarioConfig> out;
  for (std::size_t size : kSuiteSizes) {
    for (Density density : {Density::kSparse, Density::kDense}) {
      for (MechanismMode mode : {MechanismMode::kLinearOnly, MechanismMode::kMixed}) {
        for (const auto& issues : issue_sets) {
          for (std::uint64_t seed : seeds) {
            ScenarioConfig c;
            c.size = size;
            c.density = density;
            c.mode = mode;
            c.issues = issues;
            c.seed = seed;
            out.push_back(c);
          }
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Running

namespace {

void append(IssuePlan& into, IssuePlan&& part) {
  for (auto& t : part.triples) into.triples.push_back(t);
  for (auto& c : part.confounders) into.confounders.push_back(std::move(c));
  for (auto& s : part.selection) into.selection.push_back(std::move(s));
}

}  // namespace

DatasetBundle run_scenario(const ScenarioConfig& config, bool allow_custom_size) {
  try {
    config.validate(allow_custom_size);
    const std::uint64_t base = scenario_seed(config);
    const std::size_t per_kind = issue_count(config.size);

    Dag dag = generate_dag(config.size, DensityLevel::of(config.density), base);
    IssuePlan plan;
    if (config.issues.confounding) append(plan, insert_confounders(dag, per_kind, base));
    if (config.issues.unfaithful) {
      // The reserve does not depend on whether selection is active, so runs
      // with and without selection share the same triples.
      append(plan, select_unfaithful_triples(dag, per_kind, base, per_kind + 1));
    }
    if (config.issues.selection) {
      append(plan, attach_selection_nodes(dag, per_kind, config.keep_fraction, base, plan.triples));
    }

    for (std::uint32_t attempt = 0;; ++attempt) {
      const std::uint64_t seed = Rng::derive(base, attempt);
      try {
        auto assignment = assign_mechanisms(dag, config.mode, plan, seed);
        auto synthesis = synthesize(dag, std::move(assignment), plan, config.rows, seed);
        DatasetBundle bundle;
        bundle.config = config;
        bundle.observed_graph = dag.observed_subgraph();
        bundle.observed_data = std::move(synthesis.observed);
        bundle.assignment = std::move(synthesis.assignment);
        bundle.trace = std::move(synthesis.trace);
        bundle.plan = plan;
        bundle.attempt = attempt;
        bundle.full_graph = dag;
        try {
          bundle.metrics_snapshot = varsortability(bundle.observed_data, bundle.full_graph);
        } catch (const std::invalid_argument&) {
          bundle.metrics_snapshot.reset();
        }
        return bundle;
      } catch (const DegenerateDrawError&) {
        if (attempt + 1 >= kMaxAttempts) throw;
      }
    }
  } catch (const std::exception& e) {
    throw ScenarioError(config.label() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

double parse_double(std::string_view text, const char* what) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw BundleError(what, "malformed number '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  for (;;) {
    const auto p = line.find(sep);
    out.push_back(line.substr(0, p));
    if (p == std::string_view::npos) return out;
    line = line.substr(p + 1);
  }
}

}  // namespace

std::string to_csv(const SampleMatrix& matrix, const Dag& dag) {
  std::string out;
  for (std::size_t i = 0; i < matrix.nodes.size(); ++i) {
    if (i) out += ',';
    out += dag.name(matrix.nodes[i]);
  }
  out += '\n';
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    for (std::size_t c = 0; c < matrix.columns.size(); ++c) {
      if (c) out += ',';
      append_double(out, matrix.columns[c][r]);
    }
    out += '\n';
  }
  return out;
}

SampleMatrix parse_csv(std::string_view text, const Dag& dag) {
  SampleMatrix m;
  std::size_t line_no = 0;
  bool header = true;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (header) {
      for (auto name : cells) {
        const auto id = dag.find(name);
        if (!id) throw BundleError("columns", "unknown column '" + std::string(name) + "'");
        m.nodes.push_back(*id);
      }
      m.columns.resize(m.nodes.size());
      header = false;
      continue;
    }
    if (cells.size() != m.nodes.size()) {
      throw BundleError("data", "line " + std::to_string(line_no) + " has " +
                                    std::to_string(cells.size()) + " cells, expected " +
                                    std::to_string(m.nodes.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) m.columns[c].push_back(parse_double(cells[c], "data"));
  }
  if (header) throw BundleError("data", "missing header");
  return m;
}

// ---------------------------------------------------------------------------
// Bundle files

namespace {

std::string_view role_name(NodeRole r) {
  switch (r) {
    case NodeRole::kObservedRoot:
      return "observed_root";
    case NodeRole::kObservedChild:
      return "observed_child";
    case NodeRole::kLatentConfounder:
      return "latent_confounder";
    case NodeRole::kLatentSelection:
      return "latent_selection";
  }
  return "?";
}

std::vector<std::string> names(const Dag& dag, const std::vector<NodeId>& ids) {
  std::vector<std::string> out;
  for (NodeId v : ids) out.push_back(dag.name(v));
  return out;
}

json config_json(const ScenarioConfig& c) {
  return json{{"size", c.size},
              {"density", to_string(c.density)},
              {"mode", to_string(c.mode)},
              {"issues", c.issues.names()},
              {"seed", c.seed},
              {"rows", c.rows},
              {"keep_fraction", c.keep_fraction}};
}

json mechanisms_json(const DatasetBundle& b) {
  const Dag& g = b.full_graph;
  json nodes = json::array();
  for (NodeId v : g.nodes()) {
    json n{{"name", g.name(v)},
           {"role", role_name(g.role(v))},
           {"topo_position", g.position(v)},
           {"target_scale", b.assignment.target_scale.at(v)},
           {"scale_factor", b.trace.scale_factor.at(v)}};
    if (const auto it = b.assignment.roots.find(v); it != b.assignment.roots.end()) {
      json comps = json::array();
      for (const auto& c : it->second.components) {
        comps.push_back({{"weight", c.weight}, {"mean", c.mean}, {"stddev", c.stddev}});
      }
      n["root_mixture"] = comps;
    } else {
      n["noise_stddev"] = b.assignment.noise.at(v).stddev;
    }
    nodes.push_back(std::move(n));
  }
  json edges = json::array();
  for (const Edge& e : g.edges()) {
    const auto& f = b.assignment.function(e);
    json j{{"parent", g.name(e.parent)},
           {"child", g.name(e.child)},
           {"kind", to_string(kind_of(f))},
           {"parameters", parameters(f)},
           {"force_linear", g.is_force_linear(e)}};
    if (const auto it = b.trace.effective_weight.find(e); it != b.trace.effective_weight.end()) {
      j["effective_weight"] = it->second;
    }
    if (const auto it = b.trace.confounder_share.find(e); it != b.trace.confounder_share.end()) {
      j["confounder_share"] = it->second;
    }
    edges.push_back(std::move(j));
  }
  json triples = json::array();
  for (const auto& c : b.trace.cancellation) {
    triples.push_back({{"source", g.name(c.triple.source)},
                       {"mediator", g.name(c.triple.mediator)},
                       {"sink", g.name(c.triple.sink)},
                       {"epsilon", c.epsilon},
                       {"epsilon_relative", c.epsilon_relative}});
  }
  json confounders = json::array();
  for (const auto& c : b.plan.confounders) {
    confounders.push_back({{"latent", g.name(c.latent)}, {"children", names(g, c.children)}});
  }
  json selection = json::array();
  for (const auto& s : b.plan.selection) {
    selection.push_back({{"latent", g.name(s.latent)},
                         {"parents", names(g, s.parents)},
                         {"keep_fraction", s.keep_fraction},
                         {"threshold", b.trace.selection_threshold.at(s.latent)}});
  }
  return json{{"schema_version", kSchemaVersion},
              {"mode", to_string(b.assignment.mode)},
              {"nodes", std::move(nodes)},
              {"edges", std::move(edges)},
              {"issues",
               {{"unfaithful_triples", std::move(triples)},
                {"confounders", std::move(confounders)},
                {"selection", std::move(selection)}}},
              {"generation",
               {{"attempt", b.attempt},
                {"calibration_rows", b.trace.calibration_rows},
                {"raw_rows", b.trace.raw_rows},
                {"retained_fraction", b.trace.retained_fraction}}}};
}

json metadata_json(const DatasetBundle& b) {
  const std::size_t per_kind = issue_count(b.config.size);
  json snapshot = nullptr;
  if (b.metrics_snapshot) {
    snapshot = {{"value", b.metrics_snapshot->value},
                {"pair_count", b.metrics_snapshot->pair_count},
                {"ties", b.metrics_snapshot->ties}};
  }
  return json{
      {"schema_version", kSchemaVersion},
      {"generator_version", kGeneratorVersion},
      {"config", config_json(b.config)},
      {"rows", b.observed_data.rows()},
      {"observed_nodes", b.full_graph.observed_count()},
      {"latent_nodes", b.full_graph.latent_count()},
      {"issue_counting", "per_active_kind"},
      {"issue_instances_per_kind", per_kind},
      {"issue_instances",
       {{"unfaithful", b.plan.triples.size()},
        {"confounder", b.plan.confounders.size()},
        {"selection", b.plan.selection.size()}}},
      {"matrix_rule",
       "40 configurations = 4 sizes x 2 mechanism modes x 5 issue sets "
       "{none, U, C, S, UCS}; each x 2 densities x 3 seeds = 240 bundles"},
      {"density_placement", "outside the 40 configurations"},
      {"mixed_mode_kinds", {"linear", "polynomial", "sigmoid"}},
      {"varsortability", snapshot}};
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed for " + path.string());
}

std::string read_file(const fs::path& path, const std::string& check) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BundleError(check, "missing file " + path.filename().string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path, const std::string& check) {
  try {
    return json::parse(read_file(path, check));
  } catch (const json::exception& e) {
    throw BundleError(check, path.filename().string() + " is not valid JSON: " + e.what());
  }
}

NodeId lookup(const Dag& g, const json& name, const std::string& check) {
  const auto id = g.find(name.get<std::string>());
  if (!id) throw BundleError(check, "unknown node " + name.get<std::string>());
  return *id;
}

Dag dag_from_edges(std::vector<std::string> node_names, std::string_view edge_text,
                   const std::string& file) {
  Dag g;
  for (auto& n : node_names) g.add_node(kind_from_name(n), n);
  std::vector<std::pair<std::string, std::string>> edges;
  try {
    edges = parse_edge_list(edge_text);
  } catch (const std::invalid_argument& e) {
    throw BundleError("edges", file + ": " + e.what());
  }
  for (const auto& [p, c] : edges) {
    const auto pid = g.find(p);
    const auto cid = g.find(c);
    if (!pid || !cid) throw BundleError("edges", file + ": unknown node in edge " + p + "," + c);
    try {
      g.add_edge(*pid, *cid);
    } catch (const CycleError& e) {
      throw BundleError("acyclic", file + ": " + e.what());
    }
  }
  return g;
}

}  // namespace

fs::path write_bundle(const DatasetBundle& bundle, const fs::path& root, bool force) {
  const fs::path dir = root / bundle.config.label();
  if (fs::exists(dir)) {
    if (!force) throw Error("refusing to overwrite existing bundle " + dir.string());
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  write_file(dir / "data.csv", to_csv(bundle.observed_data, bundle.full_graph));
  write_file(dir / "graph_observed.csv", to_edge_list(bundle.observed_graph));
  write_file(dir / "graph_full.csv", to_edge_list(bundle.full_graph));
  write_file(dir / "mechanisms.json", mechanisms_json(bundle).dump(2) + "\n");
  write_file(dir / "metadata.json", metadata_json(bundle).dump(2) + "\n");
  return dir;
}

DatasetBundle read_bundle(const fs::path& dir) {
  DatasetBundle b;
  const json meta = read_json(dir / "metadata.json", "metadata");
  const json mech = read_json(dir / "mechanisms.json", "manifest");

  try {
    if (meta.at("schema_version").get<int>() != kSchemaVersion ||
        mech.at("schema_version").get<int>() != kSchemaVersion) {
      throw BundleError("schema", "unsupported schema version");
    }
    const json& c = meta.at("config");
    b.config.size = c.at("size").get<std::size_t>();
    const auto density = parse_density(c.at("density").get<std::string>());
    const auto mode = parse_mechanism_mode(c.at("mode").get<std::string>());
    if (!density || !mode) throw BundleError("metadata", "bad density or mode");
    b.config.density = *density;
    b.config.mode = *mode;
    for (const auto& issue : c.at("issues")) {
      const auto s = IssueSet::parse(issue.get<std::string>());
      if (!s) throw BundleError("metadata", "unknown issue " + issue.dump());
      b.config.issues.unfaithful |= s->unfaithful;
      b.config.issues.confounding |= s->confounding;
      b.config.issues.selection |= s->selection;
    }
    b.config.seed = c.at("seed").get<std::uint64_t>();
    b.config.rows = c.at("rows").get<std::size_t>();
    b.config.keep_fraction = c.at("keep_fraction").get<double>();

    // Full graph: nodes from the manifest, edges from graph_full.csv.
    std::vector<std::string> node_names;
    for (const auto& n : mech.at("nodes")) node_names.push_back(n.at("name").get<std::string>());
    b.full_graph = dag_from_edges(node_names, read_file(dir / "graph_full.csv", "edges"),
                                  "graph_full.csv");
    Dag& g = b.full_graph;
    std::vector<NodeId> order(g.size());
    std::vector<char> placed(g.size(), 0);
    for (const auto& n : mech.at("nodes")) {
      const NodeId v = lookup(g, n.at("name"), "manifest");
      const auto pos = n.at("topo_position").get<std::size_t>();
      if (pos >= order.size() || placed[pos]) throw BundleError("manifest", "bad topo_position");
      placed[pos] = 1;
      order[pos] = v;
      b.assignment.target_scale[v] = n.at("target_scale").get<double>();
      b.trace.scale_factor[v] = n.at("scale_factor").get<double>();
      if (n.contains("root_mixture")) {
        GmmSpec spec;
        for (const auto& comp : n.at("root_mixture")) {
          spec.components.push_back({comp.at("weight").get<double>(), comp.at("mean").get<double>(),
                                     comp.at("stddev").get<double>()});
        }
        b.assignment.roots[v] = std::move(spec);
      } else {
        b.assignment.noise[v] = NoiseSpec{n.at("noise_stddev").get<double>()};
      }
    }
    try {
      g.set_topo_order(order);
    } catch (const std::invalid_argument& e) {
      throw BundleError("acyclic", e.what());
    }

    b.assignment.mode = *parse_mechanism_mode(mech.at("mode").get<std::string>());
    std::size_t manifest_edges = 0;
    for (const auto& e : mech.at("edges")) {
      const Edge edge{lookup(g, e.at("parent"), "manifest"), lookup(g, e.at("child"), "manifest")};
      if (!g.has_edge(edge.parent, edge.child)) {
        throw BundleError("graph_consistency", "manifest edge " + e.at("parent").get<std::string>() +
                                                   "->" + e.at("child").get<std::string>() +
                                                   " missing from graph_full.csv");
      }
      ++manifest_edges;
      const auto kind = parse_mechanism_kind(e.at("kind").get<std::string>());
      if (!kind) throw BundleError("manifest", "unknown mechanism kind");
      const auto params = e.at("parameters").get<std::vector<double>>();
      try {
        b.assignment.edge_functions[edge] = make_edge_function(*kind, params);
      } catch (const std::invalid_argument& ex) {
        throw BundleError("manifest", ex.what());
      }
      if (e.at("force_linear").get<bool>()) g.mark_force_linear(edge);
      if (e.contains("effective_weight")) {
        b.trace.effective_weight[edge] = e.at("effective_weight").get<double>();
      }
      if (e.contains("confounder_share")) {
        b.trace.confounder_share[edge] = e.at("confounder_share").get<double>();
      }
    }
    if (manifest_edges != g.edge_count()) {
      throw BundleError("graph_consistency", "graph_full.csv has edges missing from the manifest");
    }

    const json& issues = mech.at("issues");
    for (const auto& t : issues.at("unfaithful_triples")) {
      const UnfaithfulTriple triple{lookup(g, t.at("source"), "manifest"),
                                    lookup(g, t.at("mediator"), "manifest"),
                                    lookup(g, t.at("sink"), "manifest")};
      b.plan.triples.push_back(triple);
      b.trace.cancellation.push_back(
          {triple, t.at("epsilon").get<double>(), t.at("epsilon_relative").get<double>()});
    }
    for (const auto& h : issues.at("confounders")) {
      Confounder conf{lookup(g, h.at("latent"), "manifest"), {}};
      for (const auto& ch : h.at("children")) conf.children.push_back(lookup(g, ch, "manifest"));
      b.plan.confounders.push_back(std::move(conf));
    }
    for (const auto& s : issues.at("selection")) {
      SelectionNode sel{lookup(g, s.at("latent"), "manifest"), {}, s.at("keep_fraction").get<double>()};
      for (const auto& p : s.at("parents")) sel.parents.push_back(lookup(g, p, "manifest"));
      b.trace.selection_threshold[sel.latent] = s.at("threshold").get<double>();
      b.plan.selection.push_back(std::move(sel));
    }
    const json& gen = mech.at("generation");
    b.attempt = gen.at("attempt").get<std::uint32_t>();
    b.trace.calibration_rows = gen.at("calibration_rows").get<std::size_t>();
    b.trace.raw_rows = gen.at("raw_rows").get<std::size_t>();
    b.trace.retained_fraction = gen.at("retained_fraction").get<double>();

    if (!meta.at("varsortability").is_null()) {
      const json& v = meta.at("varsortability");
      b.metrics_snapshot = VarsortabilityReport{v.at("value").get<double>(),
                                                v.at("pair_count").get<std::size_t>(),
                                                v.at("ties").get<std::size_t>()};
    }
  } catch (const json::exception& e) {
    throw BundleError("manifest", std::string("malformed metadata or manifest: ") + e.what());
  }

  const auto problems = b.full_graph.check_invariants();
  if (!problems.empty()) throw BundleError("roles", problems.front());

  // Observed graph: must equal the full graph with latents removed.
  b.observed_graph = dag_from_edges(names(b.full_graph, b.full_graph.observed_nodes()),
                                    read_file(dir / "graph_observed.csv", "edges"),
                                    "graph_observed.csv");
  Dag expected = b.full_graph.observed_subgraph();
  for (const Edge& e : expected.force_linear_edges()) b.observed_graph.mark_force_linear(e);
  if (!(expected == b.observed_graph)) {
    throw BundleError("graph_consistency", "graph_observed.csv differs from graph_full.csv minus latents");
  }
  b.observed_graph = std::move(expected);

  b.observed_data = parse_csv(read_file(dir / "data.csv", "data"), b.full_graph);
  if (b.observed_data.nodes != b.full_graph.observed_nodes()) {
    throw BundleError("columns", "data.csv columns do not match the observed nodes");
  }
  if (b.observed_data.rows() != b.config.rows ||
      meta.at("rows").get<std::size_t>() != b.config.rows) {
    throw BundleError("row_count", "data.csv has " + std::to_string(b.observed_data.rows()) +
                                       " rows, expected " + std::to_string(b.config.rows));
  }
  return b;
}

// ---------------------------------------------------------------------------
// Validation

bool ValidationReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
}

ValidationReport validate_bundle(const DatasetBundle& b) {
  ValidationReport report;
  const auto add = [&](std::string name, bool pass, std::string detail = {}) {
    report.checks.push_back({std::move(name), pass, std::move(detail)});
  };
  const Dag& g = b.full_graph;

  {
    const auto problems = g.check_invariants();
    bool order_ok = true;
    std::vector<std::string> role_problems;
    for (const auto& p : problems) {
      if (p.find("topological order") != std::string::npos) {
        order_ok = false;
      } else {
        role_problems.push_back(p);
      }
    }
    add("acyclic", order_ok && b.observed_graph.check_invariants().empty());
    add("roles", role_problems.empty(), role_problems.empty() ? "" : role_problems.front());
  }

  add("graph_consistency", g.observed_subgraph() == b.observed_graph,
      "observed graph must equal the full graph minus latent nodes");
  add("columns", b.observed_data.nodes == g.observed_nodes());
  add("row_count", b.observed_data.rows() == b.config.rows,
      std::to_string(b.observed_data.rows()) + " rows, expected " + std::to_string(b.config.rows));

  {
    auto problems = b.assignment.check(g);
    for (NodeId v : g.nodes()) {
      if (!b.trace.scale_factor.contains(v)) problems.push_back("missing scale factor for " + g.name(v));
    }
    if (b.trace.cancellation.size() != b.plan.triples.size()) {
      problems.push_back("cancellation residuals do not match the triples");
    }
    for (const auto& s : b.plan.selection) {
      if (!b.trace.selection_threshold.contains(s.latent)) {
        problems.push_back("missing selection threshold for " + g.name(s.latent));
      }
    }
    add("manifest_complete", problems.empty(), problems.empty() ? "" : problems.front());
  }

  {
    const std::size_t k = issue_count(b.config.size);
    const bool ok = b.plan.triples.size() == (b.config.issues.unfaithful ? k : 0) &&
                    b.plan.confounders.size() == (b.config.issues.confounding ? k : 0) &&
                    b.plan.selection.size() == (b.config.issues.selection ? k : 0) &&
                    g.observed_count() == b.config.size &&
                    g.latent_count() == b.plan.confounders.size() + b.plan.selection.size();
    add("issue_counts", ok, "expected " + std::to_string(k) + " instances per active kind");
  }

  try {
    const auto full = replay_full(g, b.assignment, b.plan, b.trace, b.config.rows,
                                  Rng::derive(scenario_seed(b.config), b.attempt));
    const auto observed = drop_latents(full, g);
    double worst = 0.0;
    bool shape = observed.nodes == b.observed_data.nodes && observed.rows() == b.observed_data.rows();
    if (shape) {
      for (std::size_t c = 0; c < observed.columns.size(); ++c) {
        for (std::size_t r = 0; r < observed.rows(); ++r) {
          worst = std::max(worst, std::abs(observed.columns[c][r] - b.observed_data.columns[c][r]));
        }
      }
    }
    std::ostringstream detail;
    detail << "max abs difference " << worst;
    add("additivity_replay", shape && worst <= 1e-9, shape ? detail.str() : "shape mismatch");
  } catch (const std::exception& e) {
    add("additivity_replay", false, e.what());
  }

  try {
    const auto audit = cancellation_audit(b);
    std::string detail;
    bool ok = true;
    for (const auto& r : audit) {
      if (!r.pass) {
        ok = false;
        if (detail.empty()) detail = r.reason;
      }
    }
    add("cancellation", ok, detail);
  } catch (const std::exception& e) {
    add("cancellation", false, e.what());
  }

  try {
    std::optional<VarsortabilityReport> fresh;
    try {
      fresh = varsortability(b.observed_data, g);
    } catch (const std::invalid_argument&) {
    }
    const bool ok = fresh.has_value() == b.metrics_snapshot.has_value() &&
                    (!fresh || (std::abs(fresh->value - b.metrics_snapshot->value) <= 1e-12 &&
                                fresh->pair_count == b.metrics_snapshot->pair_count));
    add("varsortability_snapshot", ok);
  } catch (const std::exception& e) {
    add("varsortability_snapshot", false, e.what());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Suite

std::size_t SuiteSummary::failures() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const auto& e) { return !e.error.empty(); }));
}

std::optional<double> SuiteSummary::mean_varsortability() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : entries) {
    if (e.error.empty() && e.varsortability) {
      sum += e.varsortability->value;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

SuiteSummary run_suite(const std::vector<ScenarioConfig>& configs, const fs::path& root,
                       std::size_t workers, bool force) {
  SuiteSummary summary;
  summary.entries.resize(configs.size());
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(configs.size(), 1));

  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      SuiteEntry& entry = summary.entries[i];
      entry.config = configs[i];
      try {
        const auto bundle = run_scenario(configs[i]);
        entry.directory = write_bundle(bundle, root, force);
        entry.varsortability = bundle.metrics_snapshot;
      } catch (const std::exception& e) {
        entry.error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return summary;
}

}  // namespace acgen
