#include "avgsgd/montecarlo.hpp"

#include <algorithm>
#include <span>
#include <cmath>
#include <random>

namespace avgsgd::mc {

namespace {

constexpr std::size_t kTrialsPerBlock = 64;

// Welford accumulator for one step index.
struct Moments {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double x) {
    count += 1.0;
    const double delta = x - mean;
    mean += delta / count;
    m2 += delta * (x - mean);
  }

  // Chan et al. pairwise merge.
  void merge(const Moments& other) {
    if (other.count == 0.0) return;
    if (count == 0.0) {
      *this = other;
      return;
    }
    const double n = count + other.count;
    const double delta = other.mean - mean;
    mean += delta * (other.count / n);
    m2 += other.m2 + delta * delta * (count * other.count / n);
    count = n;
  }
};

double weighted_norm(std::span<const double> lambda, const std::vector<double>& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += lambda[i] * v[i] * v[i];
  return s;
}

void check_mode(const ProblemInstance& instance, Mode mode) {
  if (mode != Mode::bias_only && !instance.well_specified()) {
    throw ValidationError(
        "simulation with label noise supports only the well-specified noise model "
        "(use mode = bias_only with a diagonal noise model)");
  }
}

void check_inputs(const ProblemInstance& instance, double step_size, std::size_t batch,
                  Mode mode) {
  if (!(step_size > 0.0)) throw ValidationError("step size delta must be positive");
  if (batch == 0) throw ValidationError("batch size must be positive");
  check_mode(instance, mode);
}

// Runs one trial, calling visit(t, eta, etabar) for t = 0..N.
template <class Visit>
void run_trial(const ProblemInstance& instance, const AveragingScheme& scheme, double step_size,
               std::size_t batch, Mode mode, std::mt19937_64& rng, Visit&& visit) {
  const auto lambda = instance.spectrum().eigenvalues();
  const std::size_t d = lambda.size();
  const std::size_t horizon = scheme.horizon();
  const auto alphas = scheme.alphas();
  const double noise_sd = std::sqrt(instance.sigma2());
  const bool inject = mode != Mode::bias_only;
  const double scale = step_size / static_cast<double>(batch);

  std::vector<double> sd(d);
  for (std::size_t i = 0; i < d; ++i) sd[i] = std::sqrt(lambda[i]);

  std::vector<double> eta(d, 0.0);
  if (mode != Mode::var_only) {
    const auto eta0 = instance.displacement();
    eta.assign(eta0.begin(), eta0.end());
  }
  std::vector<double> avg = eta;
  std::vector<double> x(d), step(d);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (std::size_t t = 0; t < horizon; ++t) {
    visit(t, eta, avg);
    std::fill(step.begin(), step.end(), 0.0);
    for (std::size_t j = 0; j < batch; ++j) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        x[i] = sd[i] * normal(rng);
        dot += x[i] * eta[i];
      }
      const double xi = noise_sd * normal(rng);
      const double coef = inject ? xi - dot : -dot;
      for (std::size_t i = 0; i < d; ++i) step[i] += coef * x[i];
    }
    const double a = alphas[t];
    for (std::size_t i = 0; i < d; ++i) {
      avg[i] = a * avg[i] + (1.0 - a) * eta[i];
      eta[i] += scale * step[i];
    }
  }
  visit(horizon, eta, avg);
}

}  // namespace

const char* mode_name(Mode mode) {
  switch (mode) {
    case Mode::full: return "full";
    case Mode::bias_only: return "bias_only";
    case Mode::var_only: return "var_only";
  }
  return "full";
}

Mode parse_mode(const std::string& text) {
  if (text == "full") return Mode::full;
  if (text == "bias_only" || text == "bias") return Mode::bias_only;
  if (text == "var_only" || text == "variance") return Mode::var_only;
  throw ValidationError("mode: expected full, bias_only or var_only, got '" + text + "'");
}

MCEstimate simulate_paths(const ProblemInstance& instance, const AveragingScheme& scheme,
                          double step_size, std::size_t batch, Mode mode, std::size_t trials,
                          std::uint64_t master_seed, unsigned jobs) {
  if (trials == 0) throw ValidationError("trials must be at least 1");
  check_inputs(instance, step_size, batch, mode);
  const std::size_t horizon = scheme.horizon();
  const auto lambda = instance.spectrum().eigenvalues();
  const std::size_t blocks = (trials + kTrialsPerBlock - 1) / kTrialsPerBlock;
  std::vector<std::vector<Moments>> block_stats(blocks, std::vector<Moments>(horizon + 1));

  parallel_for(blocks, jobs, 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      auto& stats = block_stats[b];
      const std::size_t first = b * kTrialsPerBlock;
      const std::size_t last = std::min(trials, first + kTrialsPerBlock);
      for (std::size_t k = first; k < last; ++k) {
        std::mt19937_64 rng(derive_seed(master_seed, k));
        run_trial(instance, scheme, step_size, batch, mode, rng,
                  [&](std::size_t t, const std::vector<double>&, const std::vector<double>& avg) {
                    stats[t].push(weighted_norm(lambda, avg));
                  });
      }
    }
  });

  std::vector<Moments> total(horizon + 1);
  for (const auto& stats : block_stats) {
    for (std::size_t t = 0; t <= horizon; ++t) total[t].merge(stats[t]);
  }
  MCEstimate out;
  out.trials = trials;
  out.master_seed = master_seed;
  out.mode = mode;
  out.mean.resize(horizon + 1);
  out.stderr_.resize(horizon + 1);
  for (std::size_t t = 0; t <= horizon; ++t) {
    out.mean[t] = total[t].mean;
    const double n = total[t].count;
    out.stderr_[t] = n > 1.0 ? std::sqrt(total[t].m2 / (n - 1.0) / n) : 0.0;
  }
  return out;
}

TrialTrace trace_trial(const ProblemInstance& instance, const AveragingScheme& scheme,
                       double step_size, std::size_t batch, Mode mode, std::uint64_t master_seed,
                       std::uint64_t trial_index) {
  check_inputs(instance, step_size, batch, mode);
  TrialTrace trace;
  std::mt19937_64 rng(derive_seed(master_seed, trial_index));
  run_trial(instance, scheme, step_size, batch, mode, rng,
            [&](std::size_t, const std::vector<double>& eta, const std::vector<double>& avg) {
              trace.iterate.push_back(eta);
              trace.average.push_back(avg);
            });
  return trace;
}

FourthMomentEstimate estimate_fourth_moment(const Spectrum& spectrum,
                                            const std::vector<double>& a_diag,
                                            std::size_t samples, std::uint64_t seed) {
  const std::size_t d = spectrum.dimension();
  if (samples < 1000) throw ValidationError("fourth-moment estimate requires samples >= 1000");
  if (a_diag.size() != d) throw ValidationError("A diagonal length must equal the dimension");
  for (double a : a_diag) {
    if (!(a >= 0.0) || !std::isfinite(a)) {
      throw ValidationError("A diagonal entries must be finite and nonnegative");
    }
  }
  std::vector<double> sd(d), x(d);
  for (std::size_t i = 0; i < d; ++i) sd[i] = std::sqrt(spectrum[i]);
  std::vector<Moments> stats(d);
  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t s = 0; s < samples; ++s) {
    double quad = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = sd[i] * normal(rng);
      quad += a_diag[i] * x[i] * x[i];
    }
    for (std::size_t i = 0; i < d; ++i) stats[i].push(quad * x[i] * x[i]);
  }
  FourthMomentEstimate out;
  const double n = static_cast<double>(samples);
  for (const auto& m : stats) {
    out.mean.push_back(m.mean);
    out.stderr_.push_back(std::sqrt(m.m2 / (n - 1.0) / n));
  }
  return out;
}

}  // namespace avgsgd::mc
