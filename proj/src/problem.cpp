#include "avgsgd/problem.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

namespace avgsgd {

Spectrum::Spectrum(std::vector<double> values, std::optional<double> exponent)
    : values_(std::move(values)), exponent_(exponent) {
  if (values_.empty()) throw ValidationError("spectrum: at least one eigenvalue is required");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!(values_[i] > 0.0) || !std::isfinite(values_[i])) {
      std::ostringstream msg;
      msg << "spectrum: eigenvalue at index " << i + 1 << " is not a positive finite number ("
          << values_[i] << ")";
      throw ValidationError(msg.str());
    }
    if (i > 0 && values_[i] > values_[i - 1]) {
      std::ostringstream msg;
      msg << "spectrum: eigenvalues must be non-increasing; index " << i + 1 << " (" << values_[i]
          << ") exceeds index " << i << " (" << values_[i - 1] << ")";
      throw ValidationError(msg.str());
    }
  }
  CompensatedSum sum;
  for (double v : values_) sum += v;
  trace_ = sum.value();
}

Spectrum make_power_law_spectrum(double a, std::size_t d) {
  if (!(a > 0.0)) throw ValidationError("spectrum: power_law requires a > 0");
  if (d == 0) throw ValidationError("spectrum: dimension d must be positive");
  std::vector<double> values(d);
  for (std::size_t i = 0; i < d; ++i) values[i] = std::pow(static_cast<double>(i + 1), -a);
  return Spectrum(std::move(values), a);
}

Spectrum make_explicit_spectrum(std::vector<double> values) {
  return Spectrum(std::move(values), std::nullopt);
}

Spectrum make_spectrum(const SpectrumSpec& kind, std::size_t d) {
  if (const auto* p = std::get_if<PowerLaw>(&kind)) return make_power_law_spectrum(p->a, d);
  const auto& values = std::get<ExplicitValues>(kind).values;
  if (values.size() != d) {
    std::ostringstream msg;
    msg << "spectrum: explicit values have length " << values.size() << " but d = " << d;
    throw ValidationError(msg.str());
  }
  return make_explicit_spectrum(values);
}

ProblemInstance::ProblemInstance(Spectrum spectrum, std::vector<double> displacement, double sigma2,
                                 double psi, double beta, NoiseModel noise,
                                 std::vector<double> noise_diag)
    : spectrum_(std::move(spectrum)),
      displacement_(std::move(displacement)),
      sigma2_(sigma2),
      psi_(psi),
      beta_(beta),
      noise_(std::move(noise)),
      noise_diag_(std::move(noise_diag)) {}

namespace {

std::vector<double> build_displacement(const Spectrum& spectrum, const DisplacementSpec& spec) {
  const std::size_t d = spectrum.dimension();
  if (const auto* e = std::get_if<ExplicitDisplacement>(&spec)) {
    if (e->values.size() != d) {
      std::ostringstream msg;
      msg << "instance: displacement has length " << e->values.size()
          << " but the spectrum has dimension " << d;
      throw ValidationError(msg.str());
    }
    for (double v : e->values) {
      if (!std::isfinite(v)) throw ValidationError("instance: displacement entries must be finite");
    }
    return e->values;
  }
  if (const auto* s = std::get_if<SourceCondition>(&spec)) {
    const auto a = spectrum.power_law_exponent();
    if (!a) throw ValidationError("instance: source_condition requires a power-law spectrum");
    if (!(s->b < *a + 1.0)) {
      std::ostringstream msg;
      msg << "instance: source condition requires b < a + 1 (got b = " << s->b << ", a = " << *a
          << ")";
      throw ValidationError(msg.str());
    }
    std::vector<double> eta(d);
    for (std::size_t i = 0; i < d; ++i) {
      const double idx = static_cast<double>(i + 1);
      eta[i] = std::sqrt(std::pow(idx, -s->b) / spectrum[i]);
    }
    return eta;
  }
  const auto& g = std::get<GaussianRandom>(spec);
  std::mt19937_64 engine(splitmix64(g.seed));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> eta(d);
  for (auto& v : eta) v = normal(engine);
  return eta;
}

}  // namespace

ProblemInstance make_instance(const Spectrum& spectrum, const DisplacementSpec& displacement,
                              double sigma2, const MomentModel& moments, const NoiseModel& noise) {
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) {
    throw ValidationError("instance: sigma2 must be a nonnegative finite number");
  }
  auto eta = build_displacement(spectrum, displacement);

  double psi = kGaussianPsi;
  double beta = kGaussianBeta;
  if (const auto* c = std::get_if<CustomMoments>(&moments)) {
    psi = c->psi;
    beta = c->beta;
  }
  if (!(psi >= 1.0)) throw ValidationError("instance: fourth-moment constant psi must be >= 1");
  if (!(beta > 0.0)) throw ValidationError("instance: fourth-moment constant beta must be > 0");
  if (beta > psi) throw ValidationError("instance: fourth-moment constants require beta <= psi");

  const std::size_t d = spectrum.dimension();
  std::vector<double> noise_diag(d);
  if (const auto* diag = std::get_if<DiagonalNoise>(&noise)) {
    if (diag->values.size() != d) {
      throw ValidationError("instance: diagonal noise model length does not match dimension");
    }
    for (std::size_t i = 0; i < d; ++i) {
      const double v = diag->values[i];
      if (!(v >= 0.0)) {
        std::ostringstream msg;
        msg << "instance: diagonal noise entry at index " << i + 1 << " is negative";
        throw ValidationError(msg.str());
      }
      if (v > sigma2 * spectrum[i] * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "instance: diagonal noise entry at index " << i + 1
            << " violates Sigma <= sigma2 * H";
        throw ValidationError(msg.str());
      }
      noise_diag[i] = v;
    }
  } else {
    for (std::size_t i = 0; i < d; ++i) noise_diag[i] = sigma2 * spectrum[i];
  }
  return ProblemInstance(spectrum, std::move(eta), sigma2, psi, beta, noise, std::move(noise_diag));
}

}  // namespace avgsgd
