#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "avgsgd/problem.hpp"

// Closed-form excess-risk bounds and rates for SGD with an exponential moving
// average of the iterates (parameter alpha, step size delta, horizon N).

namespace avgsgd::bounds {

/// b = alpha^N + (1 - alpha) sum_{t<N} alpha^{N-1-t} (1 - delta lambda)^t
///   = (delta lambda alpha^N - (1 - alpha)(1 - delta lambda)^N) / (delta lambda - (1 - alpha)).
/// Uses the rational form away from delta lambda = 1 - alpha and the sum form
/// inside a relative 1e-9 neighbourhood of it.
double decay_rate(double step_size, double lambda, double alpha, std::size_t horizon);

/// Sum form by Horner recursion, O(N).
double decay_rate_sum(double step_size, double lambda, double alpha, std::size_t horizon);

/// Case split on r = (1 - delta lambda) / alpha against (N-1)/N, 1, N/(N-1);
/// alpha = 0 is case 4.
struct EnvelopeReport {
  int case_id = 0;
  double lower = 0.0;
  double upper = 0.0;
};
EnvelopeReport decay_rate_envelope(double step_size, double lambda, double alpha,
                                   std::size_t horizon);

struct EffectiveDimensions {
  std::size_t k_star = 0;    ///< max{i : lambda_i >= (1 - alpha) / delta}
  std::size_t k_dagger = 0;  ///< max{i : lambda_i >= 1 / (N delta)}
};
EffectiveDimensions effective_dimensions(const Spectrum& spectrum, double step_size, double alpha,
                                         std::size_t horizon);

/// The three piecewise effective-variance expressions and their sum-of-min
/// equivalents:
///   (1a) k*(1-a)^2 + d^2 sum_{i>k*} l_i^2        = sum_i min{1-a, d l_i}^2
///   (1b) sum_{i<=k+} eta_i^2 + N d sum_{i>k+} l_i eta_i^2 = sum_i eta_i^2 min{1, N d l_i}
///   (2)  (1-a)k* + d sum_{k*<i<=k+} l_i + N d^2 sum_{i>k+} l_i^2
///                                                = sum_i min{1-a, d l_i, N d^2 l_i^2}
/// The (2) identity requires k* <= k+, which holds when N(1 - a) >= 1.
struct VarianceForms {
  double piecewise_1a = 0.0, min_form_1a = 0.0;
  double piecewise_1b = 0.0, min_form_1b = 0.0;
  double piecewise_2 = 0.0, min_form_2 = 0.0;
};
VarianceForms variance_forms(const ProblemInstance& instance, double step_size, double alpha,
                             std::size_t horizon);

enum class BoundKind { upper, lower, minibatch_upper };

struct BoundReport {
  BoundKind kind = BoundKind::upper;
  double effective_bias = 0.0;      ///< sum_i eta_i^2 l_i b_i^2
  double effective_variance = 0.0;  ///< feature_noise_term + label_noise_term
  std::size_t k_star = 0;
  std::size_t k_dagger = 0;
  std::vector<double> b;
  double feature_noise_term = 0.0;
  double label_noise_term = 0.0;
  VarianceForms forms;

  /// The bound on E[L(wbar_N)] - L(w_*): EffBias + EffVar for the upper
  /// bounds, (EffBias + EffVar) / 2 for the lower bound.
  [[nodiscard]] double excess_risk_bound() const {
    const double s = effective_bias + effective_variance;
    return kind == BoundKind::lower ? 0.5 * s : s;
  }
};

/// Requires N(1 - alpha) >= 1 and delta < 1 / (psi tr H).
BoundReport ema_upper_bound(const ProblemInstance& instance, double step_size, double alpha,
                           std::size_t horizon);
/// Requires delta <= 1 / lambda_1, alpha^{N-1} <= 1/N, N >= 2 and well-specified noise.
BoundReport ema_lower_bound(const ProblemInstance& instance, double step_size, double alpha,
                           std::size_t horizon);
/// Requires delta < min{B / (2 psi tr H), 1 / lambda_1}.
BoundReport minibatch_upper_bound(const ProblemInstance& instance, double step_size,
                                     double alpha, std::size_t horizon, std::size_t batch);

/// Scaling laws (unit constants) for the mini-batch effective variance under
/// lambda_i = i^{-a}, lambda_i eta_i^2 = i^{-b}, and the critical batch size
/// for a sample budget M.
struct CriticalBatchReport {
  double variance_term1 = 0.0;  ///< B^{-1} d^{1/a} (1-alpha)^{1-1/a}
  double variance_term2 = 0.0;  ///< B^{-1} d^{(2-b)/a} (1-alpha)^{2-1/a} N^{1-(b-1)/a}
  double critical_batch = 0.0;  ///< M d^{(1-b)/(a-b+1)} (1-alpha)^{a/(a-b+1)}
};
CriticalBatchReport critical_batch_scaling(double a, double b, double step_size, double alpha, double horizon,
                               double batch, double samples);

struct ComparisonRow {
  std::string scheme;  ///< "ema", "none", "ia", "ta"
  std::vector<double> decay;
  double variance_min_form = 0.0;
  std::size_t k_star = 0;
  std::size_t k_dagger = 0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  /// True when (1 - alpha)(N - s) = 1 to 1e-12.
  bool tail_correspondence = false;
  /// Largest coordinatewise |min{1-a, d l, N d^2 l^2} - min{1/(N-s), d l, N d^2 l^2}|.
  double tail_correspondence_gap = 0.0;
};

/// EMA, no averaging, iterate averaging and tail averaging side by side.
ComparisonTable scheme_comparison(const Spectrum& spectrum, double step_size, std::size_t horizon,
                                  double alpha, std::size_t tail_start);

/// Decay rates for the other schemes.
double decay_rate_last_iterate(double step_size, double lambda, std::size_t horizon);
double decay_rate_iterate_averaging(double step_size, double lambda, std::size_t horizon);
double decay_rate_tail_averaging(double step_size, double lambda, std::size_t horizon,
                                 std::size_t tail_start);

}  // namespace avgsgd::bounds
