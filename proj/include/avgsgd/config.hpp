#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "avgsgd/problem.hpp"
#include "avgsgd/schemes.hpp"

// Experiment configuration: flat `key = value` text, `#` comments, and
// `key = [v1, v2, ...]` lists. A list on a scalar key (see sweepable_keys())
// turns that key into a sweep grid.

namespace avgsgd {

struct ExperimentConfig {
  // Problem instance.
  std::string spectrum = "power_law";  ///< power_law | explicit
  double spectrum_a = 2.0;
  std::vector<double> spectrum_values;
  std::size_t d = 200;
  std::string displacement = "gaussian";  ///< gaussian | source | explicit
  std::uint64_t displacement_seed = 0;
  double source_b = 1.0;
  std::vector<double> displacement_values;
  double sigma2 = 1.0;
  std::string moment_model = "gaussian";  ///< gaussian | custom
  double psi = kGaussianPsi;
  double beta = kGaussianBeta;
  std::string noise_model = "well_specified";  ///< well_specified | diagonal
  std::vector<double> noise_values;

  // Schemes and optimizer.
  std::vector<std::string> schemes = {"ema:0.995", "none", "ia", "ta:333"};
  std::vector<double> alphas = {0.9, 0.99, 0.999};  ///< EMA parameters for the alpha figure
  double delta = 0.2;
  std::size_t N = 1000;
  std::size_t batch = 1;

  // Simulation and output.
  std::size_t trials = 10;
  std::uint64_t seed = 0;
  std::size_t stride = 1;
  std::string mode = "full";  ///< full | bias_only | var_only
  std::string out = "out";
  std::size_t memory_budget_mb = 256;
  unsigned jobs = 1;

  // Critical batch size.
  double samples = 1e6;  ///< sample budget M
  std::vector<std::size_t> batch_grid = {1, 2, 4, 8, 16, 32, 64, 128, 256};

  /// Sweep grids: scalar key -> textual values.
  std::map<std::string, std::vector<std::string>> grids;

  /// Directory that relative `custom:@file` scheme paths resolve against.
  std::filesystem::path base_dir;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Scalar keys that accept a list (sweep grid).
const std::vector<std::string>& sweepable_keys();

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
std::string format_config(const ExperimentConfig& config);

/// Sets one key from its textual value (same syntax as the file format).
void set_config_value(ExperimentConfig& config, const std::string& key, std::string_view value);

/// Checks cross-field consistency; throws ValidationError naming the field.
void validate_config(const ExperimentConfig& config);

ProblemInstance build_instance(const ExperimentConfig& config);
std::vector<SchemeKind> build_scheme_kinds(const ExperimentConfig& config);

/// One cell of the Cartesian product over `grids`.
struct SweepCell {
  std::string label;  ///< "key=value;key=value" in key order
  ExperimentConfig config;
};
std::vector<SweepCell> expand_grid(const ExperimentConfig& config);

}  // namespace avgsgd
