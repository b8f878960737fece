#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "avgsgd/common.hpp"

namespace avgsgd {

/// Eigenvalues of a diagonal data covariance, strictly positive and sorted
/// descending. Indices are 0-based in code; eigenvalue `i` is lambda_{i+1}.
class Spectrum {
 public:
  [[nodiscard]] std::span<const double> eigenvalues() const { return values_; }
  [[nodiscard]] double operator[](std::size_t i) const { return values_[i]; }
  [[nodiscard]] std::size_t dimension() const { return values_.size(); }
  [[nodiscard]] double trace() const { return trace_; }
  [[nodiscard]] double top() const { return values_.front(); }
  /// Exponent `a` when built as lambda_i = i^{-a}.
  [[nodiscard]] std::optional<double> power_law_exponent() const { return exponent_; }

 private:
  friend Spectrum make_power_law_spectrum(double a, std::size_t d);
  friend Spectrum make_explicit_spectrum(std::vector<double> values);
  Spectrum(std::vector<double> values, std::optional<double> exponent);

  std::vector<double> values_;
  double trace_ = 0.0;
  std::optional<double> exponent_;
};

struct PowerLaw {
  double a = 2.0;
};
struct ExplicitValues {
  std::vector<double> values;
};
using SpectrumSpec = std::variant<PowerLaw, ExplicitValues>;

Spectrum make_power_law_spectrum(double a, std::size_t d);
Spectrum make_explicit_spectrum(std::vector<double> values);
/// For ExplicitValues, `d` must equal the number of values.
Spectrum make_spectrum(const SpectrumSpec& kind, std::size_t d);

struct ExplicitDisplacement {
  std::vector<double> values;
};
/// lambda_i * eta_{0,i}^2 = i^{-b}; requires a power-law spectrum with b < a + 1.
struct SourceCondition {
  double b = 1.0;
};
/// eta_{0,i} ~ N(0, 1), drawn in coordinate order from a mt19937_64 seeded
/// with splitmix64(seed).
struct GaussianRandom {
  std::uint64_t seed = 0;
};
using DisplacementSpec = std::variant<ExplicitDisplacement, SourceCondition, GaussianRandom>;

/// Gaussian features: psi = 3, beta = 1.
struct GaussianMoments {};
struct CustomMoments {
  double psi = 3.0;
  double beta = 1.0;
};
using MomentModel = std::variant<GaussianMoments, CustomMoments>;

/// Sigma = sigma^2 H.
struct WellSpecified {};
/// Sigma = diag(values); must satisfy Sigma <= sigma^2 H.
struct DiagonalNoise {
  std::vector<double> values;
};
using NoiseModel = std::variant<WellSpecified, DiagonalNoise>;

inline constexpr double kGaussianPsi = 3.0;
inline constexpr double kGaussianBeta = 1.0;

/// Immutable linear-regression instance: spectrum, initial displacement
/// w_0 - w_*, label-noise level and fourth-moment constants.
class ProblemInstance {
 public:
  [[nodiscard]] const Spectrum& spectrum() const { return spectrum_; }
  [[nodiscard]] std::size_t dimension() const { return spectrum_.dimension(); }
  [[nodiscard]] std::span<const double> displacement() const { return displacement_; }
  [[nodiscard]] double sigma2() const { return sigma2_; }
  [[nodiscard]] double psi() const { return psi_; }
  [[nodiscard]] double beta() const { return beta_; }
  [[nodiscard]] const NoiseModel& noise_model() const { return noise_; }
  [[nodiscard]] bool well_specified() const {
    return std::holds_alternative<WellSpecified>(noise_);
  }
  /// Diagonal of Sigma = E[xi^2 x x^T].
  [[nodiscard]] std::span<const double> noise_diagonal() const { return noise_diag_; }

 private:
  friend ProblemInstance make_instance(const Spectrum&, const DisplacementSpec&, double,
                                       const MomentModel&, const NoiseModel&);
  ProblemInstance(Spectrum spectrum, std::vector<double> displacement, double sigma2, double psi,
                  double beta, NoiseModel noise, std::vector<double> noise_diag);

  Spectrum spectrum_;
  std::vector<double> displacement_;
  double sigma2_;
  double psi_;
  double beta_;
  NoiseModel noise_;
  std::vector<double> noise_diag_;
};

ProblemInstance make_instance(const Spectrum& spectrum, const DisplacementSpec& displacement,
                              double sigma2, const MomentModel& moments = GaussianMoments{},
                              const NoiseModel& noise = WellSpecified{});

}  // namespace avgsgd
