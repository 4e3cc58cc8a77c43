#pragma once

#include <yaml-cpp/yaml.h>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fermigas/scattering.hpp"

namespace fermigas::cli {

using json = nlohmann::ordered_json;

struct ConfigIssue {
  int line = 0;  ///< 1-based; 0 when the value came from the command line
  std::string message;
};

/// All problems found in a configuration, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }
  std::string report(const std::string& source) const;

 private:
  std::vector<ConfigIssue> issues_;
};

/// A potential together with the record of how it was specified.
struct PotentialConfig {
  RadialPotential potential;
  json echo;
};

struct ScatterConfig {
  PotentialConfig potential;
  double r_max = 0.0;
  std::size_t grid_points = 10000;
  std::size_t profile_points = 200;
};

struct EnergyConfig {
  std::optional<double> rho;
  int q = 2;
  std::optional<double> a_v;
  std::optional<PotentialConfig> potential;
  std::optional<double> rho_up;
  std::optional<double> rho_down;
  bool bose = false;
  bool lhy = false;
};

struct DysonConfig {
  PotentialConfig potential;
  double shell_inner = 0.0;  ///< 0 selects the range of the potential
  double shell_outer = 0.0;
  int l_max = 4;
  std::size_t radial_elements = 2000;
  double radial_tolerance = 1e-8;
  bool generalized = true;
  std::string cutoff = "gaussian";
  double k_c = 1.0;
  std::vector<double> eps{0.25, 0.5, 0.75};
  int M = 16;
  double L = 4.0;
  double tolerance = 1e-6;
  double barrier_factor = 1e4;
  std::uint64_t seed = 2024;
};

struct SlaterConfig {
  int oracle_max_n = 4;
  int oracle_max_m = 2;
  std::uint64_t oracle_seed = 100;
  int N = 7;
  int centers = 7;
  double L = 10.0;
  double s = 2.0;
  std::vector<double> ratios{5.0, 10.0, 20.0, 40.0};
  int draws = 5;
  std::uint64_t seed = 7;
};

struct VmcConfig {
  int n_up = 0;
  int n_down = 0;
  double L = 0.0;
  PotentialConfig potential;
  double b = 0.0;
  double s = 0.0;
  std::size_t steps = 10000;
  std::size_t equilibration = 1000;
  double step_size = 0.0;
  std::vector<std::uint64_t> seeds{1};
};

using SubcommandConfig = std::variant<ScatterConfig, EnergyConfig, DysonConfig, SlaterConfig, VmcConfig>;

struct RunConfig {
  std::string subcommand;
  SubcommandConfig parameters;
  json echo;  ///< validated parameters as written to the summary
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::filesystem::path out = ".";
  int verbosity = 0;
};

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"scatter", "energy", "dyson-check", "slater-check", "vmc"};
  return names;
}

/// Key/value pairs from command-line flags; values are YAML scalars and replace config keys.
using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Parses and validates the YAML text of a subcommand configuration. Relative
/// potential_file paths resolve against base_dir. Throws ConfigError.
SubcommandConfig parse_config(const std::string& subcommand, const std::string& text,
                              const std::filesystem::path& base_dir, json* echo = nullptr,
                              const Overrides& overrides = {});

/// Parses a potential definition (a YAML map) on its own.
PotentialConfig parse_potential_text(const std::string& text, const std::filesystem::path& base_dir);

}  // namespace fermigas::cli
