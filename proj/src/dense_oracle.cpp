#include <algorithm>
#include <cmath>
#include <vector>

#include "avgsgd/exact_engine.hpp"

namespace avgsgd::exact {

namespace {

// Small dense symmetric matrix, row-major.
struct Dense {
  std::size_t n = 0;
  std::vector<double> a;

  explicit Dense(std::size_t dim) : n(dim), a(dim * dim, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return a[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * n + j]; }
};

double total(std::span<const double> v) {
  CompensatedSum s;
  for (double x : v) s += x;
  return s.value();
}

double max_off_diagonal(const Dense& m) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = 0; j < m.n; ++j) {
      if (i != j) worst = std::max(worst, std::abs(m(i, j)));
    }
  }
  return worst;
}

// B o A = (I - dH) A (I - dH) + (d^2/B) (M o A - HAH),
// with M o A = 2 HAH + tr(HA) H for Gaussian x ~ N(0, H).
Dense apply_operator(const Dense& m, std::span<const double> lambda, double step, double coef) {
  const std::size_t n = m.n;
  double tr_ha = 0.0;
  for (std::size_t k = 0; k < n; ++k) tr_ha += lambda[k] * m(k, k);
  Dense out(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double hah = lambda[i] * m(i, j) * lambda[j];
      const double fourth = 2.0 * hah + (i == j ? tr_ha * lambda[i] : 0.0);
      out(i, j) = (1.0 - step * lambda[i]) * m(i, j) * (1.0 - step * lambda[j]) +
                  coef * (fourth - hah);
    }
  }
  return out;
}

// <H, E[etabar (x) etabar]> from the untelescoped expansion over (t, k) pairs,
// with E[eta_t (x) eta_k] = D_t (I - dH)^{k-t} for k >= t.
std::vector<double> averaged_risk(const std::vector<Dense>& moments, std::span<const double> lambda,
                     std::span<const double> c, double beta0, double step) {
  const std::size_t n = moments.front().n;
  const std::size_t horizon = c.size();
  Dense e(n);
  auto add_pair = [&](double w, const Dense& dt, std::size_t lag) {
    // w * [P^lag D_t + D_t P^lag], P = I - dH diagonal.
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double pi = std::pow(1.0 - step * lambda[i], static_cast<double>(lag));
        const double pj = std::pow(1.0 - step * lambda[j], static_cast<double>(lag));
        e(i, j) += w * (pi + pj) * dt(i, j);
      }
    }
  };
  for (std::size_t i = 0; i < n * n; ++i) e.a[i] += beta0 * beta0 * moments[0].a[i];
  for (std::size_t t = 0; t < horizon; ++t) add_pair(beta0 * c[t], moments[0], t);
  for (std::size_t t = 0; t < horizon; ++t) {
    for (std::size_t i = 0; i < n * n; ++i) e.a[i] += c[t] * c[t] * moments[t].a[i];
    for (std::size_t k = t + 1; k < horizon; ++k) add_pair(c[t] * c[k], moments[t], k - t);
  }
  std::vector<double> per_coordinate(n);
  for (std::size_t i = 0; i < n; ++i) per_coordinate[i] = lambda[i] * e(i, i);
  return per_coordinate;
}

}  // namespace

DenseOracleReport dense_risk_oracle(const ProblemInstance& instance,
                                    const AveragingScheme& scheme, double step_size,
                                    std::size_t batch) {
  if (batch == 0) throw ValidationError("batch size must be positive");
  const auto& spectrum = instance.spectrum();
  const std::size_t d = spectrum.dimension();
  if (d > 8) throw PreconditionError("dense_risk_oracle: dimension must be <= 8");
  require_contraction(spectrum, step_size);
  const std::size_t horizon = scheme.horizon();
  const auto lambda = spectrum.eigenvalues();
  const double coef = step_size * step_size / static_cast<double>(batch);
  const auto eta = instance.displacement();
  const auto noise = instance.noise_diagonal();

  Dense b_rank_one(d), b_diag(d), c(d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) b_rank_one(i, j) = eta[i] * eta[j];
    b_diag(i, i) = eta[i] * eta[i];
  }
  std::vector<Dense> bias_moments{b_rank_one}, diag_moments{b_diag}, var_moments{c};
  double worst = 0.0;
  for (std::size_t t = 1; t < horizon; ++t) {
    bias_moments.push_back(apply_operator(bias_moments.back(), lambda, step_size, coef));
    diag_moments.push_back(apply_operator(diag_moments.back(), lambda, step_size, coef));
    Dense next = apply_operator(var_moments.back(), lambda, step_size, coef);
    for (std::size_t i = 0; i < d; ++i) next(i, i) += coef * noise[i];
    var_moments.push_back(std::move(next));
    worst = std::max({worst, max_off_diagonal(diag_moments.back()),
                      max_off_diagonal(var_moments.back())});
  }

  const auto inc = scheme.increments();
  const double beta0 = scheme.betas()[0];
  DenseOracleReport out;
  out.risk.per_coordinate_bias = averaged_risk(bias_moments, lambda, inc, beta0, step_size);
  out.risk.per_coordinate_variance = averaged_risk(var_moments, lambda, inc, beta0, step_size);
  out.risk.bias = total(out.risk.per_coordinate_bias);
  out.risk.variance = total(out.risk.per_coordinate_variance);
  out.risk.excess_risk = 0.5 * (out.risk.bias + out.risk.variance);
  out.risk.excess_is_exact = instance.well_specified();
  out.risk.method = RiskMethod::dense_oracle;
  out.max_off_diagonal = worst;
  out.bias_from_diagonal_start = total(averaged_risk(diag_moments, lambda, inc, beta0, step_size));
  return out;
}

}  // namespace avgsgd::exact
