#include "acgen/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "acgen/suite.hpp"

namespace acgen {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

fs::path default_root() {
  if (const char* env = std::getenv("ACGEN_OUT"); env && *env) return env;
  return "acgen_out";
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json snapshot_json(const std::optional<VarsortabilityReport>& r) {
  if (!r) return nullptr;
  return {{"value", r->value}, {"pair_count", r->pair_count}, {"ties", r->ties}};
}

std::string snapshot_text(const std::optional<VarsortabilityReport>& r) {
  if (!r) return "n/a (no path pairs)";
  std::ostringstream ss;
  ss << r->value << " (" << r->pair_count << " pairs, " << r->ties << " ties)";
  return ss.str();
}

struct GenerateArgs {
  std::size_t size = 10;
  std::string density = "sparse";
  std::string mode = "linear";
  std::string issues = "none";
  std::uint64_t seed = 1;
  std::string out;
  bool allow_custom = false;
  bool force = false;
  bool json = false;
};

ScenarioConfig make_config(const GenerateArgs& a) {
  ScenarioConfig c;
  c.size = a.size;
  const auto density = parse_density(a.density);
  if (!density) throw UsageError("unknown density '" + a.density + "' (sparse or dense)");
  const auto mode = parse_mechanism_mode(a.mode);
  if (!mode) throw UsageError("unknown mode '" + a.mode + "' (linear or mixed)");
  const auto issues = IssueSet::parse(a.issues);
  if (!issues) {
    throw UsageError("unknown issues '" + a.issues +
                     "' (none, or a comma list of unfaithful, confounder, selection)");
  }
  c.density = *density;
  c.mode = *mode;
  c.issues = *issues;
  c.seed = a.seed;
  try {
    c.validate(a.allow_custom);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  const ScenarioConfig config = make_config(a);
  const auto bundle = run_scenario(config, a.allow_custom);
  const fs::path root = a.out.empty() ? default_root() : fs::path(a.out);
  const auto dir = write_bundle(bundle, root, a.force);
  const std::size_t per_kind = issue_count(config.size);
  if (a.json) {
    out << json{{"directory", dir.string()},
                {"label", config.label()},
                {"rows", bundle.observed_data.rows()},
                {"issue_instances_per_kind", per_kind},
                {"attempt", bundle.attempt},
                {"varsortability", snapshot_json(bundle.metrics_snapshot)}}
               .dump(2)
        << '\n';
  } else {
    out << dir.string() << '\n'
        << "rows: " << bundle.observed_data.rows() << '\n'
        << "issue instances per kind: " << per_kind << '\n'
        << "attempt: " << bundle.attempt << '\n'
        << "varsortability: " << snapshot_text(bundle.metrics_snapshot) << '\n';
  }
  return kExitOk;
}

bool matches(const ScenarioConfig& c, const std::string& filter) {
  const auto eq = filter.find('=');
  if (eq == std::string::npos) throw UsageError("filter '" + filter + "' is not key=value");
  const std::string key = filter.substr(0, eq);
  const std::string value = filter.substr(eq + 1);
  if (key == "size") return std::to_string(c.size) == value;
  if (key == "seed") return std::to_string(c.seed) == value;
  if (key == "density") {
    const auto d = parse_density(value);
    if (!d) throw UsageError("unknown density in filter '" + filter + "'");
    return c.density == *d;
  }
  if (key == "mode") {
    const auto m = parse_mechanism_mode(value);
    if (!m) throw UsageError("unknown mode in filter '" + filter + "'");
    return c.mode == *m;
  }
  if (key == "issues") {
    auto s = IssueSet::from_token(value);
    if (!s) s = IssueSet::parse(value);
    if (!s) throw UsageError("unknown issue set in filter '" + filter + "'");
    return c.issues == *s;
  }
  throw UsageError("unknown filter key '" + key + "' (size, density, mode, issues, seed)");
}

struct SuiteArgs {
  std::vector<std::uint64_t> seeds{kDefaultSeeds.begin(), kDefaultSeeds.end()};
  std::string out;
  std::size_t workers = 1;
  std::vector<std::string> filters;
  bool force = false;
  bool json = false;
};

int cmd_suite(const SuiteArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<ScenarioConfig> configs;
  try {
    configs = expand_matrix(a.seeds);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::erase_if(configs, [&](const ScenarioConfig& c) {
    for (const auto& f : a.filters) {
      if (!matches(c, f)) return true;
    }
    return false;
  });
  const fs::path root = a.out.empty() ? default_root() : fs::path(a.out);
  const auto summary = run_suite(configs, root, a.workers, a.force);
  const auto mean = summary.mean_varsortability();

  if (a.json) {
    json entries = json::array();
    for (const auto& e : summary.entries) {
      json j{{"label", e.config.label()}, {"varsortability", snapshot_json(e.varsortability)}};
      if (e.error.empty()) {
        j["directory"] = e.directory.string();
      } else {
        j["error"] = e.error;
      }
      entries.push_back(std::move(j));
    }
    out << json{{"bundles", summary.entries.size()},
                {"failures", summary.failures()},
                {"mean_varsortability", mean ? json(*mean) : json(nullptr)},
                {"entries", std::move(entries)}}
               .dump(2)
        << '\n';
  } else {
    for (const auto& e : summary.entries) {
      out << e.config.label() << '\t';
      if (e.error.empty()) {
        out << (e.varsortability ? std::to_string(e.varsortability->value) : "n/a") << '\n';
      } else {
        out << "FAILED\n";
      }
    }
    out << "bundles: " << summary.entries.size() << '\n'
        << "failures: " << summary.failures() << '\n'
        << "mean varsortability: " << (mean ? std::to_string(*mean) : "n/a") << '\n';
  }
  for (const auto& e : summary.entries) {
    if (!e.error.empty()) err << "error: " << e.error << '\n';
  }
  return summary.failures() == 0 ? kExitOk : kExitFailure;
}

int cmd_varsort(const std::string& data_path, const std::string& graph_path, bool as_json,
                std::ostream& out) {
  const std::string data = read_text(data_path);
  const std::string graph = read_text(graph_path);
  Dag dag;
  const auto header = data.substr(0, data.find('\n'));
  std::string_view rest = header;
  if (!rest.empty() && rest.back() == '\r') rest.remove_suffix(1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string name(rest.substr(0, comma));
    dag.add_node(kind_from_name(name), name);
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
  }
  for (const auto& [p, c] : parse_edge_list(graph)) {
    for (const auto& name : {p, c}) {
      if (!dag.find(name)) dag.add_node(kind_from_name(name), name);
    }
    dag.add_edge(*dag.find(p), *dag.find(c));
  }
  const auto matrix = parse_csv(data, dag);
  const auto report = varsortability(matrix, dag);
  if (as_json) {
    out << snapshot_json(report).dump(2) << '\n';
  } else {
    out << "varsortability,pair_count,ties\n"
        << report.value << ',' << report.pair_count << ',' << report.ties << '\n';
  }
  return kExitOk;
}

int cmd_validate(const std::string& dir, bool as_json, std::ostream& out) {
  ValidationReport report;
  try {
    report = validate_bundle(read_bundle(dir));
  } catch (const BundleError& e) {
    report.checks.push_back({e.check(), false, e.what()});
  }
  if (as_json) {
    json checks = json::array();
    for (const auto& c : report.checks) {
      checks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    }
    out << json{{"ok", report.ok()}, {"checks", std::move(checks)}}.dump(2) << '\n';
  } else {
    for (const auto& c : report.checks) {
      out << (c.pass ? "PASS " : "FAIL ") << c.name;
      if (!c.pass && !c.detail.empty()) out << ": " << c.detail;
      out << '\n';
    }
  }
  return report.ok() ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic causal-discovery benchmark generator"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate one scenario bundle");
  generate->add_option("--size", gen.size, "Observed node count (10, 15, 25, 50)");
  generate->add_option("--density", gen.density, "sparse or dense");
  generate->add_option("--mode", gen.mode, "linear or mixed");
  generate->add_option("--issues", gen.issues, "none or a comma list of unfaithful,confounder,selection");
  generate->add_option("--seed", gen.seed, "Scenario seed");
  generate->add_option("--out", gen.out, "Output root (default $ACGEN_OUT or ./acgen_out)");
  generate->add_flag("--allow-custom-size", gen.allow_custom, "Accept any size >= 1");
  generate->add_flag("--force", gen.force, "Overwrite an existing bundle directory");
  generate->add_flag("--json", gen.json, "Machine-readable output");

  SuiteArgs suite_args;
  auto* suite = app.add_subcommand("suite", "Generate the full 240-bundle suite");
  suite->add_option("--seeds", suite_args.seeds, "Three distinct seeds")->delimiter(',');
  suite->add_option("--out", suite_args.out, "Output root (default $ACGEN_OUT or ./acgen_out)");
  suite->add_option("--workers", suite_args.workers, "Worker threads (0 = hardware count)");
  suite->add_option("--filter", suite_args.filters, "key=value on size, density, mode, issues, seed");
  suite->add_flag("--force", suite_args.force, "Overwrite existing bundle directories");
  suite->add_flag("--json", suite_args.json, "Machine-readable output");

  std::string data_path, graph_path;
  bool varsort_json = false;
  auto* varsort = app.add_subcommand("varsort", "Varsortability of a data file under a graph");
  varsort->add_option("--data", data_path, "data.csv")->required();
  varsort->add_option("--graph", graph_path, "Edge list (parent,child per line)")->required();
  varsort->add_flag("--json", varsort_json, "Machine-readable output");

  std::string bundle_dir;
  bool validate_json = false;
  auto* validate = app.add_subcommand("validate", "Validate a bundle directory");
  validate->add_option("dir", bundle_dir, "Bundle directory")->required();
  validate->add_flag("--json", validate_json, "Machine-readable output");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "usage error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen, out);
    if (suite->parsed()) return cmd_suite(suite_args, out, err);
    if (varsort->parsed()) return cmd_varsort(data_path, graph_path, varsort_json, out);
    return cmd_validate(bundle_dir, validate_json, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace acgen
