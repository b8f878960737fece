#include "avgsgd/exact_engine.hpp"

#include <sstream>

namespace avgsgd::exact {

void require_contraction(const Spectrum& spectrum, double step_size) {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    throw PreconditionError("step size must be a positive finite number");
  }
  if (!(step_size * spectrum.top() < 1.0)) {
    std::ostringstream msg;
    msg << "exact engine requires delta * lambda_1 < 1 (got " << step_size * spectrum.top() << ")";
    throw PreconditionError(msg.str());
  }
}

namespace {

void require_batch(std::size_t batch) {
  if (batch == 0) throw ValidationError("batch size must be positive");
}

void require_horizon(const AveragingScheme& scheme) {
  if (scheme.horizon() == 0) throw ValidationError("scheme horizon must be positive");
}

double weighted_trace(const Spectrum& spectrum, std::span<const double> v) {
  CompensatedSum sum;
  for (std::size_t j = 0; j < v.size(); ++j) sum += spectrum[j] * v[j];
  return sum.value();
}

// All updates of a single diagonal entry go through these two helpers so the
// per-coordinate replay in exact_risk reproduces the first pass bit for bit.
inline double excess_term(double lambda, double value, double weighted, double coef) {
  return coef * (lambda * lambda * value + lambda * weighted);
}

inline double contract(double damp2, double value, double excess) { return damp2 * value + excess; }

void fill_suffix_column(std::span<const double> increments, double damp, std::span<double> out) {
  const std::size_t n = increments.size();
  out[n] = 0.0;
  for (std::size_t t = n; t-- > 0;) out[t] = increments[t] + damp * out[t + 1];
}

RiskReport finish_report(std::vector<double> bias_i, std::vector<double> var_i, bool exact,
                         RiskMethod method) {
  RiskReport r;
  CompensatedSum b, v;
  for (double x : bias_i) b += x;
  for (double x : var_i) v += x;
  r.bias = b.value();
  r.variance = v.value();
  r.excess_risk = 0.5 * (r.bias + r.variance);
  r.excess_is_exact = exact;
  r.per_coordinate_bias = std::move(bias_i);
  r.per_coordinate_variance = std::move(var_i);
  r.method = method;
  return r;
}

}  // namespace

SecondMomentState initial_state(const ProblemInstance& instance) {
  SecondMomentState s;
  const auto eta = instance.displacement();
  s.bias_diag.resize(eta.size());
  for (std::size_t i = 0; i < eta.size(); ++i) s.bias_diag[i] = eta[i] * eta[i];
  s.var_diag.assign(eta.size(), 0.0);
  return s;
}

std::vector<double> fourth_moment_excess(std::span<const double> a_diag, const Spectrum& spectrum,
                                         double step_size, std::size_t batch) {
  require_batch(batch);
  if (a_diag.size() != spectrum.dimension()) {
    throw ValidationError("fourth_moment_excess: dimension mismatch");
  }
  const double coef = step_size * step_size / static_cast<double>(batch);
  const double w = weighted_trace(spectrum, a_diag);
  std::vector<double> out(a_diag.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = excess_term(spectrum[i], a_diag[i], w, coef);
  return out;
}

SecondMomentState second_moment_step(const SecondMomentState& state,
                                     const ProblemInstance& instance, double step_size,
                                     std::size_t batch) {
  require_batch(batch);
  const auto& spectrum = instance.spectrum();
  const std::size_t d = spectrum.dimension();
  if (state.bias_diag.size() != d || state.var_diag.size() != d) {
    throw ValidationError("second_moment_step: state dimension does not match the instance");
  }
  require_contraction(spectrum, step_size);

  const double coef = step_size * step_size / static_cast<double>(batch);
  const double wb = weighted_trace(spectrum, state.bias_diag);
  const double wc = weighted_trace(spectrum, state.var_diag);
  const auto noise = instance.noise_diagonal();

  SecondMomentState next;
  next.t = state.t + 1;
  next.bias_diag.resize(d);
  next.var_diag.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double lambda = spectrum[i];
    const double damp = 1.0 - step_size * lambda;
    const double damp2 = damp * damp;
    next.bias_diag[i] =
        contract(damp2, state.bias_diag[i], excess_term(lambda, state.bias_diag[i], wb, coef));
    const double ec = excess_term(lambda, state.var_diag[i], wc, coef) + coef * noise[i];
    next.var_diag[i] = contract(damp2, state.var_diag[i], ec);
  }
  return next;
}

std::vector<std::vector<double>> suffix_geometric_sums(std::span<const double> increments,
                                                       const Spectrum& spectrum,
                                                       double step_size) {
  require_contraction(spectrum, step_size);
  const std::size_t n = increments.size();
  const std::size_t d = spectrum.dimension();
  std::vector<std::vector<double>> g(n + 1, std::vector<double>(d, 0.0));
  std::vector<double> column(n + 1);
  for (std::size_t i = 0; i < d; ++i) {
    fill_suffix_column(increments, 1.0 - step_size * spectrum[i], column);
    for (std::size_t t = 0; t <= n; ++t) g[t][i] = column[t];
  }
  return g;
}

RiskReport exact_risk(const ProblemInstance& instance, const AveragingScheme& scheme,
                      double step_size, const ExactOptions& options) {
  require_batch(options.batch);
  require_horizon(scheme);
  const auto& spectrum = instance.spectrum();
  require_contraction(spectrum, step_size);

  const std::size_t n = scheme.horizon();
  const std::size_t d = spectrum.dimension();
  const double coef = step_size * step_size / static_cast<double>(options.batch);
  const auto eta = instance.displacement();
  const auto noise = instance.noise_diagonal();
  const auto increments = scheme.increments();
  const double beta0 = scheme.betas()[0];

  // Pass 1 (sequential): the shared scalars sum_j l_j B_{t,j}, sum_j l_j C_{t,j}
  // for t = 0..N-2.
  const std::size_t steps = n - 1;
  std::vector<double> wb(steps), wc(steps);
  {
    SecondMomentState s = initial_state(instance);
    for (std::size_t t = 0; t < steps; ++t) {
      wb[t] = weighted_trace(spectrum, s.bias_diag);
      wc[t] = weighted_trace(spectrum, s.var_diag);
      if (t + 1 < steps) s = second_moment_step(s, instance, step_size, options.batch);
    }
  }

  bool use_table = options.suffix_mode == SuffixTableMode::table;
  if (options.suffix_mode == SuffixTableMode::automatic) {
    use_table = (n + 1) * d * sizeof(double) <= options.memory_budget_bytes;
  }
  std::vector<double> table;
  if (use_table) {
    table.resize((n + 1) * d);
    parallel_for(d, options.jobs, 64, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        fill_suffix_column(increments, 1.0 - step_size * spectrum[i],
                           std::span<double>(table).subspan(i * (n + 1), n + 1));
      }
    });
  }

  // Pass 2 (parallel over coordinates): replay each coordinate's moments and
  // accumulate the telescoped sums.
  std::vector<double> bias_i(d), var_i(d);
  parallel_for(d, options.jobs, 64, [&](std::size_t lo, std::size_t hi) {
    std::vector<double> scratch;
    if (!use_table) scratch.resize(n + 1);
    for (std::size_t i = lo; i < hi; ++i) {
      const double lambda = spectrum[i];
      const double damp = 1.0 - step_size * lambda;
      const double damp2 = damp * damp;
      std::span<const double> g;
      if (use_table) {
        g = std::span<const double>(table).subspan(i * (n + 1), n + 1);
      } else {
        fill_suffix_column(increments, damp, scratch);
        g = scratch;
      }
      double b = eta[i] * eta[i];
      double c = 0.0;
      const double head = beta0 + g[0];
      CompensatedSum bias_acc, var_acc;
      bias_acc += head * head * b;
      for (std::size_t t = 1; t < n; ++t) {
        const double g2 = g[t] * g[t];
        const double eb = excess_term(lambda, b, wb[t - 1], coef);
        const double ec = excess_term(lambda, c, wc[t - 1], coef) + coef * noise[i];
        bias_acc += g2 * eb;
        var_acc += g2 * ec;
        b = contract(damp2, b, eb);
        c = contract(damp2, c, ec);
      }
      bias_i[i] = lambda * bias_acc.value();
      var_i[i] = lambda * var_acc.value();
    }
  });
  return finish_report(std::move(bias_i), std::move(var_i), instance.well_specified(),
                       RiskMethod::telescoped);
}

RiskReport direct_risk_oracle(const ProblemInstance& instance, const AveragingScheme& scheme,
                              double step_size, std::size_t batch) {
  require_batch(batch);
  require_horizon(scheme);
  const auto& spectrum = instance.spectrum();
  require_contraction(spectrum, step_size);
  const std::size_t n = scheme.horizon();
  const std::size_t d = spectrum.dimension();
  if (static_cast<double>(n) * static_cast<double>(n) * static_cast<double>(d) > 1e8) {
    throw PreconditionError("direct_risk_oracle: N^2 * d exceeds 1e8");
  }

  std::vector<SecondMomentState> states;
  states.reserve(n);
  states.push_back(initial_state(instance));
  for (std::size_t t = 1; t < n; ++t) {
    states.push_back(second_moment_step(states.back(), instance, step_size, batch));
  }

  const auto c = scheme.increments();
  const double beta0 = scheme.betas()[0];
  std::vector<double> bias_i(d), var_i(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double x = 1.0 - step_size * spectrum[i];
    auto second_moment = [&](auto moment_of) {
      CompensatedSum e;
      const double d0 = moment_of(states[0]);
      e += beta0 * beta0 * d0;
      double pw = 1.0;
      for (std::size_t t = 0; t < n; ++t) {
        e += 2.0 * beta0 * c[t] * pw * d0;
        pw *= x;
      }
      for (std::size_t t = 0; t < n; ++t) {
        const double dt = moment_of(states[t]);
        e += c[t] * c[t] * dt;
        double p = 1.0;
        for (std::size_t k = t + 1; k < n; ++k) {
          p *= x;
          e += 2.0 * c[t] * c[k] * p * dt;
        }
      }
      return e.value();
    };
    bias_i[i] = spectrum[i] * second_moment([i](const SecondMomentState& s) { return s.bias_diag[i]; });
    var_i[i] = spectrum[i] * second_moment([i](const SecondMomentState& s) { return s.var_diag[i]; });
  }
  return finish_report(std::move(bias_i), std::move(var_i), instance.well_specified(),
                       RiskMethod::direct);
}

std::vector<double> deterministic_bias(const ProblemInstance& instance,
                                       const AveragingScheme& scheme, double step_size) {
  require_horizon(scheme);
  const auto& spectrum = instance.spectrum();
  require_contraction(spectrum, step_size);
  const std::size_t n = scheme.horizon();
  const double beta0 = scheme.betas()[0];
  std::vector<double> out(spectrum.dimension());
  std::vector<double> column(n + 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    fill_suffix_column(scheme.increments(), 1.0 - step_size * spectrum[i], column);
    out[i] = beta0 + column[0];
  }
  return out;
}

RiskPath risk_path(const ProblemInstance& instance, const AveragingScheme& scheme,
                   double step_size, std::size_t batch) {
  require_batch(batch);
  require_horizon(scheme);
  const auto& spectrum = instance.spectrum();
  require_contraction(spectrum, step_size);
  const std::size_t n = scheme.horizon();
  const std::size_t d = spectrum.dimension();
  const double coef = step_size * step_size / static_cast<double>(batch);
  const auto noise = instance.noise_diagonal();
  const auto alphas = scheme.alphas();

  // Per coordinate: P = E[wbar_t^2], Q = E[wbar_t eta_t], D = E[eta_t^2].
  struct Moments {
    std::vector<double> p, q, d;
  };
  Moments bias{{}, {}, {}}, var{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0),
                                 std::vector<double>(d, 0.0)};
  const auto eta = instance.displacement();
  bias.d.resize(d);
  for (std::size_t i = 0; i < d; ++i) bias.d[i] = eta[i] * eta[i];
  bias.p = bias.d;
  bias.q = bias.d;

  RiskPath path;
  path.bias.resize(n + 1);
  path.variance.resize(n + 1);
  for (std::size_t t = 0;; ++t) {
    path.bias[t] = weighted_trace(spectrum, bias.p);
    path.variance[t] = weighted_trace(spectrum, var.p);
    if (t == n) break;
    const double a = alphas[t];
    const double wb = weighted_trace(spectrum, bias.d);
    const double wv = weighted_trace(spectrum, var.d);
    for (std::size_t i = 0; i < d; ++i) {
      const double lambda = spectrum[i];
      const double damp = 1.0 - step_size * lambda;
      const double damp2 = damp * damp;
      auto advance = [&](Moments& m, double weighted, double source) {
        const double p = m.p[i], q = m.q[i], dd = m.d[i];
        m.p[i] = a * a * p + 2.0 * a * (1.0 - a) * q + (1.0 - a) * (1.0 - a) * dd;
        m.q[i] = damp * (a * q + (1.0 - a) * dd);
        m.d[i] = contract(damp2, dd, excess_term(lambda, dd, weighted, coef) + source);
      };
      advance(bias, wb, 0.0);
      advance(var, wv, coef * noise[i]);
    }
  }
  return path;
}

}  // namespace avgsgd::exact
