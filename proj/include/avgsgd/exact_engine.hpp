#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "avgsgd/problem.hpp"
#include "avgsgd/schemes.hpp"

// Exact expected bias and variance errors of constant-step SGD with any
// averaging scheme, for Gaussian features (fourth moment given by the Isserlis
// identity M o A = 2 HAH + tr(HA) H).
//
// With H diagonal, the diagonal of B o A = E[(I - d X) A (I - d X)] depends
// only on the diagonal of A:
//
//   L(v)_i = (1 - d l_i)^2 v_i + (d^2 / B) (l_i^2 v_i + l_i sum_j l_j v_j),
//
// so every quantity below is carried as a length-d diagonal.

namespace avgsgd::exact {

/// Diagonals of B_t = E[eta_t^bias (x) eta_t^bias] and C_t = E[eta_t^var (x) eta_t^var].
struct SecondMomentState {
  std::size_t t = 0;
  std::vector<double> bias_diag;
  std::vector<double> var_diag;
};

/// t = 0: B_0 = diag(eta_0^2), C_0 = 0.
SecondMomentState initial_state(const ProblemInstance& instance);

/// One application of the second-moment map with mini-batch size `batch`.
SecondMomentState second_moment_step(const SecondMomentState& state,
                                     const ProblemInstance& instance, double step_size,
                                     std::size_t batch = 1);

/// Diagonal of (B - B~) o A for diagonal A, i.e. (d^2/B)(l_i^2 a_i + l_i tr(HA)).
std::vector<double> fourth_moment_excess(std::span<const double> a_diag, const Spectrum& spectrum,
                                         double step_size, std::size_t batch = 1);

/// G[t][i] = sum_{k >= t} c_k (1 - d l_i)^{k - t} for t = 0..N (G[N] = 0),
/// by the backward recursion G_t = c_t + (1 - d l_i) G_{t+1}.
std::vector<std::vector<double>> suffix_geometric_sums(std::span<const double> increments,
                                                       const Spectrum& spectrum,
                                                       double step_size);

enum class RiskMethod { telescoped, direct, dense_oracle, forward_path };

struct RiskReport {
  double bias = 0.0;      ///< <H, E[etabar^bias (x) etabar^bias]>
  double variance = 0.0;  ///< <H, E[etabar^var (x) etabar^var]>
  /// (bias + variance) / 2. Exact only for well-specified noise; otherwise
  /// an upper bound on the excess risk is bias + variance.
  double excess_risk = 0.0;
  bool excess_is_exact = true;
  std::vector<double> per_coordinate_bias;
  std::vector<double> per_coordinate_variance;
  RiskMethod method = RiskMethod::telescoped;
};

enum class SuffixTableMode {
  automatic,   ///< table when N*d*8 bytes fits the memory budget
  table,       ///< precompute G (O(N d) memory)
  regenerate,  ///< rebuild each coordinate's G column (O(N) memory per worker)
};

struct ExactOptions {
  std::size_t batch = 1;
  SuffixTableMode suffix_mode = SuffixTableMode::automatic;
  std::size_t memory_budget_bytes = std::size_t{256} << 20;
  unsigned jobs = 1;
};

/// Telescoped exact risk, O(N d). Per coordinate:
///   bias_i = l_i [ (beta_0 + G_0)^2 eta_0i^2 + sum_{t=1}^{N-1} G_t^2 ((B - B~) o B_{t-1})_ii ]
///   var_i  = l_i   sum_{t=1}^{N-1} G_t^2 [ ((B - B~) o C_{t-1})_ii + d^2 Sigma_ii / B ]
/// Output is bit-identical for any `jobs` and either suffix mode.
RiskReport exact_risk(const ProblemInstance& instance, const AveragingScheme& scheme,
                      double step_size, const ExactOptions& options = {});

/// Untelescoped double sum over (t, k) pairs using E[eta_t eta_k] = D_t (1 - d l)^{k-t}.
/// O(N^2 d); rejects N^2 d > 1e8.
RiskReport direct_risk_oracle(const ProblemInstance& instance, const AveragingScheme& scheme,
                              double step_size, std::size_t batch = 1);

struct DenseOracleReport {
  RiskReport risk;
  /// Largest |off-diagonal| seen in C_t and in B_t started from diag(eta_0^2).
  double max_off_diagonal = 0.0;
  /// Bias total computed from the diagonal start diag(eta_0^2) instead of eta_0 eta_0^T.
  double bias_from_diagonal_start = 0.0;
};

/// Full-matrix recursion with B_0 = eta_0 eta_0^T and the dense Isserlis
/// operator. d <= 8.
DenseOracleReport dense_risk_oracle(const ProblemInstance& instance,
                                    const AveragingScheme& scheme, double step_size,
                                    std::size_t batch = 1);

/// Per-coordinate multiplier of the averaged full-gradient trajectory,
/// beta_0 + sum_t c_t (1 - d l_i)^t.
std::vector<double> deterministic_bias(const ProblemInstance& instance,
                                       const AveragingScheme& scheme, double step_size);

/// Bias and variance errors at every horizon t = 0..N of the running average,
/// via a forward recursion on E[wbar_t^2], E[wbar_t eta_t], E[eta_t^2].
struct RiskPath {
  std::vector<double> bias;
  std::vector<double> variance;
};
RiskPath risk_path(const ProblemInstance& instance, const AveragingScheme& scheme,
                   double step_size, std::size_t batch = 1);

/// Throws PreconditionError unless d * l_1 < 1.
void require_contraction(const Spectrum& spectrum, double step_size);

}  // namespace avgsgd::exact
