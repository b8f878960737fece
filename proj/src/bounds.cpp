#include "avgsgd/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace avgsgd::bounds {

namespace {

constexpr double kOneMinusInvE = 0.63212055882855767;  // 1 - e^{-1}

void require_horizon(std::size_t horizon) {
  if (horizon == 0) throw ValidationError("horizon N must be positive");
}

void require_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
}

void require_rate_inputs(double step_size, double lambda, double alpha, std::size_t horizon,
                         bool allow_unit) {
  require_horizon(horizon);
  require_alpha(alpha);
  if (!(step_size > 0.0) || !(lambda >= 0.0)) {
    throw ValidationError("decay rate requires delta > 0 and lambda >= 0");
  }
  const double dl = step_size * lambda;
  if (allow_unit ? !(dl <= 1.0) : !(dl < 1.0)) {
    std::ostringstream msg;
    msg << "decay rate requires delta * lambda < 1 (got " << dl << ")";
    throw PreconditionError(msg.str());
  }
}

double ipow(double base, std::size_t n) { return std::pow(base, static_cast<double>(n)); }

// (hi^n - lo^n) for 0 <= lo <= hi without cancellation.
double power_gap(double hi, double lo, std::size_t n) {
  if (hi == 0.0) return 0.0;
  return -ipow(hi, n) * std::expm1(static_cast<double>(n) * std::log1p((lo - hi) / hi));
}

// Closed form, evaluated as alpha^N + (1 - alpha)(alpha^N - x^N)/(alpha - x)
// with the power difference taken through expm1/log1p.
double decay_rate_closed(double dl, double alpha, std::size_t n) {
  const double x = 1.0 - dl;
  if (alpha == 0.0) return ipow(x, n - 1);
  const double hi = std::max(alpha, x);
  const double lo = std::min(alpha, x);
  const double ratio = power_gap(hi, lo, n) / (hi - lo);
  return ipow(alpha, n) + (1.0 - alpha) * ratio;
}

double decay_rate_series(double dl, double alpha, std::size_t n) {
  const double x = 1.0 - dl;
  double h = 0.0;
  double x_pow = 1.0;
  double a_pow = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    h = alpha * h + x_pow;
    x_pow *= x;
    a_pow *= alpha;
  }
  return a_pow + (1.0 - alpha) * h;
}

double decay_rate_impl(double dl, double alpha, std::size_t n) {
  const double gap = dl - (1.0 - alpha);
  const double scale = std::max(dl, 1.0 - alpha);
  if (std::abs(gap) < 1e-9 * scale || alpha == 1.0 - dl) return decay_rate_series(dl, alpha, n);
  return decay_rate_closed(dl, alpha, n);
}

void require_effective_inputs(double step_size, double alpha, std::size_t horizon) {
  require_horizon(horizon);
  if (!(step_size > 0.0)) throw ValidationError("step size must be positive");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in [0, 1)");
}

struct Pieces {
  EffectiveDimensions dims;
  VarianceForms forms;
  std::vector<double> b;
  double effective_bias = 0.0;
  double head_norm = 0.0;  // sum_{i <= k+} eta_i^2
  double tail_norm = 0.0;  // sum_{i > k+} l_i eta_i^2
  // sum_{k* < i <= k+} l_i and sum_{i > k+} l_i^2
  double mid_trace = 0.0;
  double tail_square = 0.0;
};

Pieces compute_pieces(const ProblemInstance& instance, double step_size, double alpha,
                      std::size_t horizon) {
  const auto& spectrum = instance.spectrum();
  const auto eta = instance.displacement();
  const std::size_t d = spectrum.dimension();
  const double n = static_cast<double>(horizon);
  Pieces p;
  p.dims = effective_dimensions(spectrum, step_size, alpha, horizon);
  const std::size_t ks = p.dims.k_star;
  const std::size_t kd = p.dims.k_dagger;

  CompensatedSum bias, head, tail, mid, tail_sq, above_ks_sq;
  CompensatedSum min1a, min1b, min2;
  p.b.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double l = spectrum[i];
    const double dl = step_size * l;
    const double e2 = eta[i] * eta[i];
    p.b[i] = decay_rate_impl(dl, alpha, horizon);
    bias += e2 * l * p.b[i] * p.b[i];
    const std::size_t idx = i + 1;
    if (idx <= kd) head += e2; else tail += l * e2;
    if (idx > ks && idx <= kd) mid += l;
    if (idx > kd) tail_sq += l * l;
    if (idx > ks) above_ks_sq += l * l;
    const double m1a = std::min(1.0 - alpha, dl);
    min1a += m1a * m1a;
    min1b += e2 * std::min(1.0, n * dl);
    min2 += std::min({1.0 - alpha, dl, n * dl * dl});
  }
  p.effective_bias = bias.value();
  p.head_norm = head.value();
  p.tail_norm = tail.value();
  p.mid_trace = mid.value();
  p.tail_square = tail_sq.value();
  const double k = static_cast<double>(ks);
  p.forms.piecewise_1a = k * (1.0 - alpha) * (1.0 - alpha) + step_size * step_size * above_ks_sq.value();
  p.forms.min_form_1a = min1a.value();
  p.forms.piecewise_1b = p.head_norm + n * step_size * p.tail_norm;
  p.forms.min_form_1b = min1b.value();
  p.forms.piecewise_2 = (1.0 - alpha) * k + step_size * p.mid_trace +
                        n * step_size * step_size * p.tail_square;
  p.forms.min_form_2 = min2.value();
  return p;
}

BoundReport report_from(const Pieces& p, BoundKind kind) {
  BoundReport r;
  r.kind = kind;
  r.effective_bias = p.effective_bias;
  r.k_star = p.dims.k_star;
  r.k_dagger = p.dims.k_dagger;
  r.b = p.b;
  r.forms = p.forms;
  return r;
}

}  // namespace

double decay_rate(double step_size, double lambda, double alpha, std::size_t horizon) {
  require_rate_inputs(step_size, lambda, alpha, horizon, false);
  return decay_rate_impl(step_size * lambda, alpha, horizon);
}

double decay_rate_sum(double step_size, double lambda, double alpha, std::size_t horizon) {
  require_rate_inputs(step_size, lambda, alpha, horizon, false);
  return decay_rate_series(step_size * lambda, alpha, horizon);
}

EnvelopeReport decay_rate_envelope(double step_size, double lambda, double alpha,
                                   std::size_t horizon) {
  require_rate_inputs(step_size, lambda, alpha, horizon, false);
  const double dl = step_size * lambda;
  const double x = 1.0 - dl;
  const double n = static_cast<double>(horizon);
  EnvelopeReport e;
  if (alpha == 0.0) {
    e.case_id = 4;
  } else if (n * x <= (n - 1.0) * alpha) {
    e.case_id = 1;
  } else if (x <= alpha) {
    e.case_id = 2;
  } else if ((n - 1.0) * x <= n * alpha) {
    e.case_id = 3;
  } else {
    e.case_id = 4;
  }
  switch (e.case_id) {
    case 1: {
      const double core = dl * ipow(alpha, horizon) / (alpha - x);
      e.lower = kOneMinusInvE * core;
      e.upper = core;
      break;
    }
    case 2: {
      const double a_n = ipow(alpha, horizon);
      const double tail = (1.0 - alpha) * n * ipow(alpha, horizon - 1);
      e.lower = a_n + kOneMinusInvE * tail;
      e.upper = a_n + tail;
      break;
    }
    case 3: {
      const double x_n = ipow(x, horizon);
      const double tail = n * dl * ipow(x, horizon - 1);
      e.lower = x_n + kOneMinusInvE * tail;
      e.upper = x_n + tail;
      break;
    }
    default: {
      const double core = (1.0 - alpha) * ipow(x, horizon) / (x - alpha);
      e.lower = kOneMinusInvE * core;
      e.upper = core;
      break;
    }
  }
  return e;
}

EffectiveDimensions effective_dimensions(const Spectrum& spectrum, double step_size, double alpha,
                                         std::size_t horizon) {
  require_effective_inputs(step_size, alpha, horizon);
  const double star_threshold = (1.0 - alpha) / step_size;
  const double dagger_threshold = 1.0 / (static_cast<double>(horizon) * step_size);
  EffectiveDimensions out;
  for (std::size_t i = 0; i < spectrum.dimension(); ++i) {
    if (spectrum[i] >= star_threshold) out.k_star = i + 1;
    if (spectrum[i] >= dagger_threshold) out.k_dagger = i + 1;
  }
  return out;
}

VarianceForms variance_forms(const ProblemInstance& instance, double step_size, double alpha,
                             std::size_t horizon) {
  require_effective_inputs(step_size, alpha, horizon);
  if (!(step_size * instance.spectrum().top() <= 1.0)) {
    throw PreconditionError("variance forms require delta * lambda_1 <= 1");
  }
  return compute_pieces(instance, step_size, alpha, horizon).forms;
}

BoundReport ema_upper_bound(const ProblemInstance& instance, double step_size, double alpha,
                           std::size_t horizon) {
  require_effective_inputs(step_size, alpha, horizon);
  const double n = static_cast<double>(horizon);
  if (!(n * (1.0 - alpha) >= 1.0)) {
    std::ostringstream msg;
    msg << "upper bound requires N(1 - alpha) >= 1 (got " << n * (1.0 - alpha) << ")";
    throw PreconditionError(msg.str());
  }
  const double load = instance.psi() * step_size * instance.spectrum().trace();
  if (!(load < 1.0)) {
    std::ostringstream msg;
    msg << "upper bound requires delta < 1/(psi tr(H)) (got psi * delta * tr(H) = " << load << ")";
    throw PreconditionError(msg.str());
  }
  const Pieces p = compute_pieces(instance, step_size, alpha, horizon);
  BoundReport r = report_from(p, BoundKind::upper);
  const double denom = 1.0 - load;
  r.feature_noise_term =
      p.forms.piecewise_1a * instance.psi() * p.forms.piecewise_1b / (step_size * denom);
  r.label_noise_term = instance.sigma2() / denom * p.forms.piecewise_2;
  r.effective_variance = r.feature_noise_term + r.label_noise_term;
  return r;
}

BoundReport ema_lower_bound(const ProblemInstance& instance, double step_size, double alpha,
                           std::size_t horizon) {
  require_effective_inputs(step_size, alpha, horizon);
  if (!(step_size * instance.spectrum().top() <= 1.0)) {
    throw PreconditionError("lower bound requires delta <= 1/lambda_1");
  }
  if (horizon < 2) throw PreconditionError("lower bound requires N >= 2");
  const double n = static_cast<double>(horizon);
  if (!(ipow(alpha, horizon - 1) <= 1.0 / n)) {
    std::ostringstream msg;
    msg << "lower bound requires alpha^(N-1) <= 1/N (got " << ipow(alpha, horizon - 1)
        << " > " << 1.0 / n << ")";
    throw PreconditionError(msg.str());
  }
  if (!instance.well_specified()) {
    throw PreconditionError("lower bound requires well-specified noise (Sigma = sigma^2 H)");
  }
  const Pieces p = compute_pieces(instance, step_size, alpha, horizon);
  BoundReport r = report_from(p, BoundKind::lower);
  const double k = static_cast<double>(p.dims.k_star);
  const double bracket = 3.0 * alpha * alpha * (1.0 - alpha) * k / 16.0 +
                         step_size / 100.0 * p.mid_trace +
                         n * step_size * step_size / 180.0 * p.tail_square;
  r.feature_noise_term = instance.beta() * std::exp(-2.0) * p.tail_norm / 2.0 * bracket;
  r.label_noise_term = instance.sigma2() / 2.0 * bracket;
  r.effective_variance = r.feature_noise_term + r.label_noise_term;
  return r;
}

BoundReport minibatch_upper_bound(const ProblemInstance& instance, double step_size,
                                     double alpha, std::size_t horizon, std::size_t batch) {
  require_effective_inputs(step_size, alpha, horizon);
  if (batch == 0) throw ValidationError("batch size must be positive");
  const double bsz = static_cast<double>(batch);
  const double limit = bsz / (2.0 * instance.psi() * instance.spectrum().trace());
  if (!(step_size < limit)) {
    std::ostringstream msg;
    msg << "mini-batch bound requires delta < B/(2 psi tr(H)) = " << limit;
    throw PreconditionError(msg.str());
  }
  if (!(step_size * instance.spectrum().top() < 1.0)) {
    throw PreconditionError("mini-batch bound requires delta < 1/lambda_1");
  }
  const Pieces p = compute_pieces(instance, step_size, alpha, horizon);
  BoundReport r = report_from(p, BoundKind::minibatch_upper);
  r.feature_noise_term =
      p.forms.piecewise_1a * 2.0 * instance.psi() * p.forms.piecewise_1b / (step_size * bsz);
  r.label_noise_term = 2.0 * instance.sigma2() / bsz * p.forms.piecewise_2;
  r.effective_variance = r.feature_noise_term + r.label_noise_term;
  return r;
}

CriticalBatchReport critical_batch_scaling(double a, double b, double step_size, double alpha, double horizon,
                               double batch, double samples) {
  if (!(a > 1.0)) throw ValidationError("critical batch: spectrum exponent requires a > 1");
  if (!(b < a + 1.0)) {
    throw ValidationError("critical batch: source condition requires b < a + 1");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("critical batch: alpha must be in (0, 1)");
  if (!(step_size > 0.0 && horizon > 0.0 && batch > 0.0 && samples > 0.0)) {
    throw ValidationError("critical batch: delta, N, B and M must be positive");
  }
  const double om = 1.0 - alpha;
  CriticalBatchReport r;
  r.variance_term1 = std::pow(step_size, 1.0 / a) * std::pow(om, 1.0 - 1.0 / a) / batch;
  r.variance_term2 = std::pow(step_size, (2.0 - b) / a) * std::pow(om, 2.0 - 1.0 / a) *
                     std::pow(horizon, 1.0 - (b - 1.0) / a) / batch;
  const double denom = a - b + 1.0;
  r.critical_batch = samples * std::pow(step_size, (1.0 - b) / denom) * std::pow(om, a / denom);
  return r;
}

double decay_rate_last_iterate(double step_size, double lambda, std::size_t horizon) {
  require_rate_inputs(step_size, lambda, 0.0, horizon, false);
  return ipow(1.0 - step_size * lambda, horizon - 1);
}

double decay_rate_iterate_averaging(double step_size, double lambda, std::size_t horizon) {
  return decay_rate_tail_averaging(step_size, lambda, horizon, 0);
}

double decay_rate_tail_averaging(double step_size, double lambda, std::size_t horizon,
                                 std::size_t tail_start) {
  require_rate_inputs(step_size, lambda, 0.0, horizon, false);
  if (tail_start >= horizon) throw ValidationError("tail averaging requires s < N");
  const double dl = step_size * lambda;
  if (dl == 0.0) return 1.0;
  const std::size_t span = horizon - tail_start;
  const double x_s = ipow(1.0 - dl, tail_start);
  // x^s (1 - x^{N-s}) / ((N - s) d l)
  return x_s * -std::expm1(static_cast<double>(span) * std::log1p(-dl)) /
         (static_cast<double>(span) * dl);
}

ComparisonTable scheme_comparison(const Spectrum& spectrum, double step_size, std::size_t horizon,
                                  double alpha, std::size_t tail_start) {
  require_horizon(horizon);
  if (tail_start >= horizon) throw ValidationError("tail averaging requires 0 <= s < N");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in [0, 1)");
  if (!(step_size > 0.0 && step_size * spectrum.top() < 1.0)) {
    throw PreconditionError("scheme comparison requires 0 < delta * lambda_1 < 1");
  }
  const std::size_t d = spectrum.dimension();
  const double n = static_cast<double>(horizon);
  const double tail_len = static_cast<double>(horizon - tail_start);

  auto count_above = [&](double threshold) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < d; ++i) {
      if (spectrum[i] >= threshold) k = i + 1;
    }
    return k;
  };
  const std::size_t k_dagger = count_above(1.0 / (n * step_size));

  ComparisonRow ema{"ema", {}, 0.0, 0, k_dagger};
  ComparisonRow none{"none", {}, 0.0, 0, k_dagger};
  ComparisonRow ia{"ia", {}, 0.0, k_dagger, k_dagger};
  ComparisonRow ta{"ta", {}, 0.0, count_above(1.0 / (tail_len * step_size)), k_dagger};
  ema.k_star = count_above((1.0 - alpha) / step_size);
  none.k_star = count_above(1.0 / step_size);

  CompensatedSum v_ema, v_none, v_ia, v_ta;
  ComparisonTable table;
  for (std::size_t i = 0; i < d; ++i) {
    const double l = spectrum[i];
    const double dl = step_size * l;
    const double quad = n * dl * dl;
    ema.decay.push_back(decay_rate_impl(dl, alpha, horizon));
    none.decay.push_back(decay_rate_last_iterate(step_size, l, horizon));
    ia.decay.push_back(decay_rate_iterate_averaging(step_size, l, horizon));
    ta.decay.push_back(decay_rate_tail_averaging(step_size, l, horizon, tail_start));
    const double m_ema = std::min({1.0 - alpha, dl, quad});
    const double m_ta = std::min({1.0 / tail_len, dl, quad});
    v_ema += m_ema;
    v_none += std::min({1.0, dl, quad});
    v_ia += std::min(1.0 / n, quad);
    v_ta += m_ta;
    table.tail_correspondence_gap = std::max(table.tail_correspondence_gap, std::abs(m_ema - m_ta));
  }
  ema.variance_min_form = v_ema.value();
  none.variance_min_form = v_none.value();
  ia.variance_min_form = v_ia.value();
  ta.variance_min_form = v_ta.value();
  table.tail_correspondence = std::abs((1.0 - alpha) * tail_len - 1.0) <= 1e-12;
  table.rows = {std::move(ema), std::move(none), std::move(ia), std::move(ta)};
  return table;
}

}  // namespace avgsgd::bounds
