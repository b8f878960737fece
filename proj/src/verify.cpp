#include <algorithm>
#include <cfloat>
#include <cmath>
#include <random>
#include <sstream>

#include "avgsgd/bounds.hpp"
#include "avgsgd/exact_engine.hpp"
#include "avgsgd/harness.hpp"
#include "avgsgd/montecarlo.hpp"

namespace avgsgd {

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

Spectrum random_spectrum(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  for (auto& x : v) x = uniform(rng, 0.05, 1.0);
  std::sort(v.rbegin(), v.rend());
  return make_explicit_spectrum(v);
}

ProblemInstance random_instance(Rng& rng, std::size_t d) {
  auto spectrum = random_spectrum(rng, d);
  std::vector<double> eta(d);
  for (auto& x : eta) x = uniform(rng, -2.0, 2.0);
  return make_instance(spectrum, ExplicitDisplacement{eta}, uniform(rng, 0.1, 2.0));
}

SchemeKind random_kind(Rng& rng, std::size_t horizon) {
  switch (pick(rng, 0, 4)) {
    case 0: return Ema{uniform(rng, 0.05, 0.95)};
    case 1: return NoAveraging{};
    case 2: return IterateAveraging{};
    case 3: return TailAveraging{pick(rng, 0, horizon - 1)};
    default: {
      std::vector<double> a(horizon);
      for (auto& x : a) x = uniform(rng, 0.0, 1.0);
      return CustomAlphas{a};
    }
  }
}

struct Tally {
  double worst = 0.0;
  std::size_t count = 0;
  bool ok = true;
  void note(double err, double tol) {
    worst = std::max(worst, err);
    ++count;
    ok = ok && err <= tol;
  }
  std::string detail(const std::string& what) const {
    std::ostringstream s;
    s << count << " " << what << ", worst " << worst;
    return s.str();
  }
};

}  // namespace

std::vector<VerifyCheck> run_verify(unsigned jobs, std::uint64_t seed) {
  std::vector<VerifyCheck> checks;
  Rng rng(splitmix64(seed));

  {
    Tally t;
    for (int k = 0; k < 60; ++k) {
      const auto inst = random_instance(rng, pick(rng, 1, 4));
      const std::size_t n = pick(rng, 1, 8);
      const auto scheme = make_scheme(random_kind(rng, n), n);
      const double delta = uniform(rng, 0.05, 0.95) / inst.spectrum().top();
      const auto a = exact::exact_risk(inst, scheme, delta);
      const auto b = exact::direct_risk_oracle(inst, scheme, delta);
      t.note(std::max(rel_err(a.bias, b.bias), rel_err(a.variance, b.variance)), 1e-10);
    }
    checks.push_back({"telescoped = direct double sum", t.ok, t.detail("configs")});
  }
  {
    Tally t;
    double off = 0.0;
    for (int k = 0; k < 15; ++k) {
      const auto inst = random_instance(rng, pick(rng, 1, 5));
      const std::size_t n = pick(rng, 1, 10);
      const auto scheme = make_scheme(random_kind(rng, n), n);
      const double delta = uniform(rng, 0.05, 0.95) / inst.spectrum().top();
      const auto a = exact::exact_risk(inst, scheme, delta);
      const auto dense = exact::dense_risk_oracle(inst, scheme, delta);
      t.note(std::max(rel_err(a.bias, dense.risk.bias), rel_err(a.variance, dense.risk.variance)),
             1e-10);
      off = std::max(off, dense.max_off_diagonal);
    }
    checks.push_back({"dense recursion closes on diagonal", t.ok && off <= 1e-14,
                      t.detail("configs") + ", off-diagonal " + std::to_string(off)});
  }
  {
    Tally t;
    for (int k = 0; k < 10; ++k) {
      const auto inst = random_instance(rng, pick(rng, 1, 6));
      const std::size_t n = pick(rng, 2, 30);
      SchemeKind kind = random_kind(rng, n);
      const auto scheme = make_scheme(kind, n);
      const double delta = uniform(rng, 0.05, 0.9) / inst.spectrum().top();
      const auto path = exact::risk_path(inst, scheme, delta);
      for (std::size_t h = 1; h <= n; ++h) {
        const auto r = exact::exact_risk(inst, scheme.prefix(h), delta);
        t.note(std::max(rel_err(path.bias[h], r.bias), rel_err(path.variance[h], r.variance)),
               1e-10);
      }
    }
    checks.push_back({"forward path = exact risk per horizon", t.ok, t.detail("horizons")});
  }
  {
    const auto inst = make_instance(make_power_law_spectrum(1.5, 300), GaussianRandom{seed}, 1.0);
    const auto scheme = make_scheme(Ema{0.98}, 200);
    exact::ExactOptions serial;
    serial.suffix_mode = exact::SuffixTableMode::table;
    exact::ExactOptions parallel;
    parallel.suffix_mode = exact::SuffixTableMode::regenerate;
    parallel.jobs = std::max(jobs, 3u);
    const auto a = exact::exact_risk(inst, scheme, 0.3, serial);
    const auto b = exact::exact_risk(inst, scheme, 0.3, parallel);
    const bool same = a.bias == b.bias && a.variance == b.variance &&
                      a.per_coordinate_bias == b.per_coordinate_bias &&
                      a.per_coordinate_variance == b.per_coordinate_variance;
    checks.push_back({"exact risk independent of jobs and suffix mode", same, "bitwise"});
  }
  {
    Tally t;
    for (int k = 0; k < 2000; ++k) {
      const std::size_t n = pick(rng, 1, 3000);
      const double alpha = uniform(rng, 0.0, 1.0);
      const double delta = uniform(rng, 0.01, 1.0);
      double dl = uniform(rng, 1e-6, 0.999);
      if (k % 3 == 0) dl = std::clamp((1.0 - alpha) * (1.0 + uniform(rng, -1e-6, 1e-6)), 1e-9, 0.999);
      const double lambda = dl / delta;
      t.note(rel_err(bounds::decay_rate(delta, lambda, alpha, n),
                     bounds::decay_rate_sum(delta, lambda, alpha, n)),
             1e-12);
    }
    checks.push_back({"decay rate closed form = sum", t.ok, t.detail("draws")});
  }
  {
    std::size_t bad = 0;
    for (int k = 0; k < 2000; ++k) {
      const std::size_t n = pick(rng, 1, 2000);
      const double alpha = k % 10 == 0 ? 0.0 : uniform(rng, 0.0, 1.0);
      const double lambda = uniform(rng, 1e-4, 0.999);
      const double b = bounds::decay_rate(1.0, lambda, alpha, n);
      const auto env = bounds::decay_rate_envelope(1.0, lambda, alpha, n);
      const double slack = 1e-12 * b + DBL_MIN;
      if (!(env.lower <= b + slack && b <= env.upper + slack)) ++bad;
    }
    checks.push_back({"decay rate envelopes bracket b", bad == 0,
                      std::to_string(bad) + " of 2000 outside"});
  }
  {
    Tally t;
    for (int k = 0; k < 50; ++k) {
      const std::size_t d = pick(rng, 1, 5);
      const auto inst = make_instance(random_spectrum(rng, d), ExplicitDisplacement{std::vector<double>(d, 1.0)}, 0.0);
      const std::size_t n = pick(rng, 1, 500);
      const double alpha = uniform(rng, 0.0, 0.999);
      const double delta = uniform(rng, 0.05, 0.99) / inst.spectrum().top();
      const auto g = exact::deterministic_bias(inst, make_scheme(Ema{std::max(alpha, 1e-3)}, n), delta);
      for (std::size_t i = 0; i < d; ++i) {
        t.note(rel_err(g[i], bounds::decay_rate(delta, inst.spectrum()[i], std::max(alpha, 1e-3), n)),
               1e-12);
      }
    }
    checks.push_back({"averaged full-gradient path = decay rate", t.ok, t.detail("coordinates")});
  }
  {
    const auto dims = bounds::effective_dimensions(make_power_law_spectrum(2.0, 2000), 0.2, 0.995, 3000);
    checks.push_back({"effective dimensions (power law, d=2000)", dims.k_star == 6 && dims.k_dagger == 24,
                      "k*=" + std::to_string(dims.k_star) + " k+=" + std::to_string(dims.k_dagger)});
  }
  {
    Tally t;
    for (int k = 0; k < 200; ++k) {
      const std::size_t n = pick(rng, 3, 3000);
      const std::size_t s = pick(rng, 0, n - 2);
      const double alpha = 1.0 - 1.0 / static_cast<double>(n - s);
      const auto spectrum = random_spectrum(rng, 20);
      const double delta = uniform(rng, 0.01, 0.99) / spectrum.top();
      const auto table = bounds::scheme_comparison(spectrum, delta, n, alpha, s);
      t.note(table.tail_correspondence_gap, 1e-12);
      for (std::size_t i = 0; i < 20; ++i) {
        const double lhs = table.rows[0].decay[i];
        const double rhs = table.rows[3].decay[i] / std::sqrt(std::exp(1.0));
        t.note(lhs >= rhs * (1.0 - 1e-12) ? 0.0 : 1.0, 0.0);
      }
    }
    checks.push_back({"tail-averaging correspondence", t.ok, t.detail("checks")});
  }
  {
    const auto inst = make_instance(make_power_law_spectrum(2.0, 50), GaussianRandom{seed}, 1.0);
    const auto scheme = make_scheme(Ema{0.99}, 300);
    double prev = INFINITY;
    bool monotone = true, halves = true;
    double prev_label = 0.0;
    for (std::size_t b = 1; b <= 256; b *= 2) {
      exact::ExactOptions o;
      o.batch = b;
      const double v = exact::exact_risk(inst, scheme, 0.1, o).variance;
      monotone = monotone && v <= prev;
      prev = v;
      const auto bound = bounds::minibatch_upper_bound(inst, 0.1, 0.99, 300, b);
      if (b > 1) halves = halves && bound.label_noise_term == 0.5 * prev_label;
      prev_label = bound.label_noise_term;
    }
    checks.push_back({"mini-batch variance monotone, label term halves", monotone && halves,
                      monotone ? (halves ? "ok" : "label term mismatch") : "variance increased"});
  }
  {
    std::size_t bad = 0, total = 0;
    for (int k = 0; k < 15; ++k) {
      const std::size_t d = pick(rng, 5, 40);
      const auto inst = make_instance(make_power_law_spectrum(uniform(rng, 1.2, 2.5), d),
                                      GaussianRandom{rng()}, uniform(rng, 0.1, 2.0));
      const std::size_t n = pick(rng, 50, 400);
      const double log_n = std::log(static_cast<double>(n));
      const double alpha = 1.0 - uniform(rng, log_n + 0.5, log_n + 6.0) / static_cast<double>(n);
      const double delta = uniform(rng, 0.05, 0.95) / (3.0 * inst.spectrum().trace());
      const double risk = exact::exact_risk(inst, make_scheme(Ema{alpha}, n), delta).excess_risk;
      try {
        const double upper = bounds::ema_upper_bound(inst, delta, alpha, n).excess_risk_bound();
        const double lower = bounds::ema_lower_bound(inst, delta, alpha, n).excess_risk_bound();
        ++total;
        if (!(lower <= risk && risk <= upper)) ++bad;
      } catch (const PreconditionError&) {
      }
    }
    checks.push_back({"lower bound <= exact risk <= upper bound", bad == 0 && total > 0,
                      std::to_string(total - bad) + " of " + std::to_string(total) + " sandwiched"});
  }
  {
    const auto inst = make_instance(make_explicit_spectrum({1.0, 0.6, 0.3, 0.1}),
                                    ExplicitDisplacement{{1.0, -1.0, 0.5, 2.0}}, 0.5);
    const auto scheme = make_scheme(Ema{0.8}, 25);
    const auto path = exact::risk_path(inst, scheme, 0.3);
    const auto est = mc::simulate_paths(inst, scheme, 0.3, 1, mc::Mode::full, 4000, seed, jobs);
    std::size_t inside = 0;
    for (std::size_t t = 0; t <= 25; ++t) {
      const double target = path.bias[t] + path.variance[t];
      if (std::abs(est.mean[t] - target) <= 4.0 * est.stderr_[t] + 1e-12 * target) ++inside;
    }
    checks.push_back({"Monte Carlo agrees with exact risk", inside >= 25,
                      std::to_string(inside) + " of 26 checkpoints within 4 s.e."});
    const auto full = mc::trace_trial(inst, scheme, 0.3, 2, mc::Mode::full, seed, 7);
    const auto bias = mc::trace_trial(inst, scheme, 0.3, 2, mc::Mode::bias_only, seed, 7);
    const auto var = mc::trace_trial(inst, scheme, 0.3, 2, mc::Mode::var_only, seed, 7);
    double worst = 0.0;
    for (std::size_t t = 0; t < full.average.size(); ++t) {
      for (std::size_t i = 0; i < 4; ++i) {
        worst = std::max(worst, std::abs(full.average[t][i] - bias.average[t][i] - var.average[t][i]));
      }
    }
    checks.push_back({"full = bias + variance on a shared stream", worst <= 1e-12,
                      "max gap " + std::to_string(worst)});
  }
  {
    const auto fm = mc::estimate_fourth_moment(make_explicit_spectrum({1.0, 0.5}), {1.0, 0.0},
                                               200000, seed);
    const double z_iss = std::abs(fm.mean[1] - 0.5) / fm.stderr_[1];
    const double z_alt = (1.0 - fm.mean[1]) / fm.stderr_[1];
    std::ostringstream s;
    s << "coordinate 2 = " << fm.mean[1] << " (z vs 0.5: " << z_iss << ", vs 1.0: " << z_alt << ")";
    checks.push_back({"Gaussian fourth moment is 2HAH + tr(HA)H", z_iss <= 5.0 && z_alt > 20.0, s.str()});
  }
  return checks;
}

}  // namespace avgsgd
