#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "avgsgd/config.hpp"
#include "avgsgd/results.hpp"

// Subcommands of the experiment harness. Each builds a ResultTable from an
// ExperimentConfig; run() writes the CSV/SVG artifacts and a manifest.

namespace avgsgd {

enum class Subcommand { exact, bounds, simulate, figures, sweep, critical_batch, verify };
Subcommand parse_subcommand(const std::string& name);
const char* subcommand_name(Subcommand sub);

/// Exact bias/variance/excess at t = 0, stride, 2 stride, ..., N plus final rows.
ResultTable exact_table(const ExperimentConfig& config);
/// Upper and lower bounds for each EMA scheme and the scheme comparison table.
/// Bounds whose preconditions fail are skipped with a note on `log`.
ResultTable bounds_table(const ExperimentConfig& config, std::ostream& log);
/// Monte Carlo paths in the configured mode. Scheme k uses seed derive_seed(seed, k).
ResultTable simulate_table(const ExperimentConfig& config);
/// One block of rows per grid cell, cells in grid order.
ResultTable sweep_table(const ExperimentConfig& config, std::ostream& log);
/// Scaling terms and exact mini-batch variance over batch_grid, plus B*.
ResultTable critical_batch_table(const ExperimentConfig& config);

struct Artifact {
  std::string name;
  std::uint64_t checksum = 0;
};

struct RunOutcome {
  std::vector<Artifact> artifacts;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  bool ok = true;
};

/// Runs a subcommand and writes its artifacts plus `manifest.txt` into
/// config.out. `verify` writes nothing and reports through `ok`.
RunOutcome run(const ExperimentConfig& config, Subcommand sub, std::ostream& log);

struct VerifyCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Quick oracle-equivalence and invariant battery at small scale.
std::vector<VerifyCheck> run_verify(unsigned jobs, std::uint64_t seed);

}  // namespace avgsgd
