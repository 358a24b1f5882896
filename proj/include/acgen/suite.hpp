#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "acgen/error.hpp"
#include "acgen/graph.hpp"
#include "acgen/mech.hpp"
#include "acgen/metrics.hpp"
#include "acgen/synth.hpp"

namespace acgen {

inline constexpr std::array<std::size_t, 4> kSuiteSizes{10, 15, 25, 50};
inline constexpr std::size_t kRowsPerBundle = 2500;
inline constexpr double kDefaultKeepFraction = 0.7;
inline constexpr std::array<std::uint64_t, 3> kDefaultSeeds{1, 2, 3};
inline constexpr std::string_view kGeneratorVersion = "1.0.0";
inline constexpr int kSchemaVersion = 1;
inline constexpr std::uint32_t kMaxAttempts = 100;

struct IssueSet {
  bool unfaithful = false;
  bool confounding = false;
  bool selection = false;

  bool empty() const { return !unfaithful && !confounding && !selection; }
  // Directory token: "none" or any of U, C, S in that order ("UCS").
  std::string token() const;
  static std::optional<IssueSet> from_token(std::string_view token);
  // CLI form: "none" or a comma list of unfaithful, confounder, selection.
  static std::optional<IssueSet> parse(std::string_view text);
  std::vector<std::string> names() const;

  friend bool operator==(const IssueSet&, const IssueSet&) = default;
};

struct ScenarioConfig {
  std::size_t size = 10;
  Density density = Density::kSparse;
  MechanismMode mode = MechanismMode::kLinearOnly;
  IssueSet issues;
  std::uint64_t seed = 1;
  std::size_t rows = kRowsPerBundle;
  double keep_fraction = kDefaultKeepFraction;

  // <size>_<density>_<mode>_<issues>_<seed>
  std::string label() const;
  // Throws std::invalid_argument on a size outside kSuiteSizes (unless
  // allowed), zero rows, or keep_fraction outside (0, 1).
  void validate(bool allow_custom_size = false) const;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

// Seed from which every stream of a scenario is derived. It depends on the
// seed, size and density only, so configurations differing in mechanism mode
// or issue set share their base graph.
std::uint64_t scenario_seed(const ScenarioConfig& config);

struct DatasetBundle {
  ScenarioConfig config;
  SampleMatrix observed_data;  // node ids of full_graph (observed ids coincide)
  Dag observed_graph;
  Dag full_graph;
  MechanismAssignment assignment;
  GenerationTrace trace;
  IssuePlan plan;
  std::uint32_t attempt = 0;
  std::optional<VarsortabilityReport> metrics_snapshot;

  friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

class ScenarioError : public Error {
 public:
  using Error::Error;
};

// 40 configurations (4 sizes x 2 modes x {none, U, C, S, UCS}) x 2 densities
// x the 3 seeds. Throws std::invalid_argument unless given 3 distinct seeds.
std::vector<ScenarioConfig> expand_matrix(std::span<const std::uint64_t> seeds);

// graph -> issues (confounders, triples, selection) -> mechanisms -> data ->
// metrics. Degenerate draws are retried with a new attempt number, up to
// kMaxAttempts. Errors are rethrown as ScenarioError naming the config.
DatasetBundle run_scenario(const ScenarioConfig& config, bool allow_custom_size = false);

// Writes <root>/<label>/ with data.csv, graph_observed.csv, graph_full.csv,
// mechanisms.json and metadata.json. Refuses an existing directory unless
// `force`. Returns the bundle directory.
std::filesystem::path write_bundle(const DatasetBundle& bundle, const std::filesystem::path& root,
                                   bool force = false);

// Loads and checks a bundle directory; throws BundleError naming the check.
DatasetBundle read_bundle(const std::filesystem::path& dir);

struct ValidationCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  bool ok() const;
};

ValidationReport validate_bundle(const DatasetBundle& bundle);

struct SuiteEntry {
  ScenarioConfig config;
  std::filesystem::path directory;
  std::optional<VarsortabilityReport> varsortability;
  std::string error;  // empty on success
};

struct SuiteSummary {
  std::vector<SuiteEntry> entries;
  std::size_t failures() const;
  // Mean over successful bundles that have a snapshot.
  std::optional<double> mean_varsortability() const;
};

// Runs and writes every config with `workers` threads (0 = hardware count).
SuiteSummary run_suite(const std::vector<ScenarioConfig>& configs,
                       const std::filesystem::path& root, std::size_t workers, bool force);

// data.csv text <-> SampleMatrix (header = node names of `dag`).
std::string to_csv(const SampleMatrix& matrix, const Dag& dag);
SampleMatrix parse_csv(std::string_view text, const Dag& dag);

}  // namespace acgen
