#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "avgsgd/problem.hpp"
#include "avgsgd/schemes.hpp"

// Monte Carlo simulation of online (mini-batch) SGD on Gaussian data with a
// diagonal covariance, tracking the averaged residual etabar_t = wbar_t - w_*.

namespace avgsgd::mc {

enum class Mode { full, bias_only, var_only };

const char* mode_name(Mode mode);
Mode parse_mode(const std::string& text);

/// Per-step statistics of sum_i l_i etabar_{t,i}^2 for t = 0..N.
struct MCEstimate {
  std::vector<double> mean;
  std::vector<double> stderr_;
  std::size_t trials = 0;
  std::uint64_t master_seed = 0;
  Mode mode = Mode::full;
};

/// Trials are split into fixed blocks; each block's statistics are
/// accumulated in trial order and blocks are merged in block order, so the
/// result is bit-identical for any `jobs`.
///
/// Trial k draws from mt19937_64(derive_seed(master_seed, k)). Each step,
/// for every batch element: the d feature coordinates in ascending order,
/// then the label noise xi. xi is drawn in every mode so the three modes
/// share one stream.
MCEstimate simulate_paths(const ProblemInstance& instance, const AveragingScheme& scheme,
                          double step_size, std::size_t batch, Mode mode, std::size_t trials,
                          std::uint64_t master_seed, unsigned jobs = 1);

/// Iterates and running averages of one trial (t = 0..N), for inspecting the
/// bias/variance decomposition on a shared stream.
struct TrialTrace {
  std::vector<std::vector<double>> iterate;
  std::vector<std::vector<double>> average;
};
TrialTrace trace_trial(const ProblemInstance& instance, const AveragingScheme& scheme,
                       double step_size, std::size_t batch, Mode mode, std::uint64_t master_seed,
                       std::uint64_t trial_index);

struct FourthMomentEstimate {
  std::vector<double> mean;
  std::vector<double> stderr_;
};

/// Estimates diag E[x x^T A x x^T] = E[(x^T A x) x_i^2] for x ~ N(0, H) and
/// diagonal A. Requires samples >= 1000.
FourthMomentEstimate estimate_fourth_moment(const Spectrum& spectrum,
                                            const std::vector<double>& a_diag,
                                            std::size_t samples, std::uint64_t seed);

}  // namespace avgsgd::mc
