#pragma once

// Experiment runner behind the robustcbf command line: JSON configs, the
// built-in example configs, and artifact bundles (CSV + summary JSON).

#include "robustcbf/sim.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace robustcbf::cli {

/// Raised for anything wrong with a config; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KdConfig {
  enum class Type { Constant, Linear, Lqr };
  Type type = Type::Constant;
  VectorXd u0;      // Constant, and the offset for Linear
  MatrixXd K;       // Linear: u = K xhat + u0
  VectorXd q_diag;  // Lqr: u = -K xhat with K from the linearization at the origin
  VectorXd r_diag;
};

struct NamedFilter {
  std::string label;  // unique within a config, defaults to the kind name
  FilterSpec spec;
};

struct ExperimentConfig {
  enum class Kind { Static, ClosedLoop };

  std::string name;
  Kind kind = Kind::ClosedLoop;
  std::string benchmark;
  SegwayParams segway;
  std::vector<NamedFilter> filters;
  ErrorSet error_set;
  /// Extents to scale error_set to (every half width or the radius). Empty
  /// means error_set as given.
  std::vector<double> levels;
  CorruptionModel corruption;
  VectorXd x0;    // ClosedLoop
  VectorXd xhat;  // Static
  double dt = 1e-3;
  double horizon = 5.0;
  KdConfig k_d;
  std::uint64_t seed = 42;
  /// Which levels get a trajectory CSV; nullopt means all of them.
  std::optional<std::vector<double>> trajectory_levels;
  /// Static: size of the state grid used to check the returned inputs.
  int check_points = 10001;
};

ExperimentConfig parse_config(const nlohmann::json& doc);
/// Reads and parses a file; unreadable files and bad JSON are ConfigErrors.
ExperimentConfig load_config(const std::filesystem::path& path);

/// "example1", "example2", "example3".
const std::vector<std::string>& builtin_names();
/// Pinned config of a built-in example; throws ConfigError for unknown names.
nlohmann::json builtin_config(const std::string& name);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  /// Write per-step solve times into the trajectory CSVs.
  bool timing = false;
};

/// Output files by name, built fully in memory before anything is written.
struct Artifacts {
  std::map<std::string, std::string> files;
  nlohmann::json summary;
};

Benchmark make_benchmark(const ExperimentConfig& config);
/// k_d policy of the config (solves the LQR problem if asked for).
KdPolicy make_policy(const ExperimentConfig& config, const Benchmark& bench);

/// Runs the experiment. Throws ConfigError for inconsistencies only visible
/// once the benchmark is built, anything else for simulation faults.
Artifacts run_experiment(const ExperimentConfig& config, const RunOptions& options);

/// Writes every file into dir via a staging directory, so an I/O failure
/// leaves no partial bundle behind.
void write_artifacts(const Artifacts& artifacts, const std::filesystem::path& dir);

/// Command line entry point; returns the process exit code.
int main_entry(int argc, char** argv);

}  // namespace robustcbf::cli
