#include <doctest.h>

#include <cfloat>
#include <random>
#include <string>

#include "avgsgd/bounds.hpp"
#include "avgsgd/exact_engine.hpp"
#include "oracle.hpp"

using namespace avgsgd;
namespace bd = avgsgd::bounds;

namespace {

bool message_contains(const std::function<void()>& f, const std::string& needle) {
  try {
    f();
  } catch (const PreconditionError& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  } catch (const ValidationError& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

ProblemInstance reference_instance() {
  return make_instance(make_power_law_spectrum(2.0, 2000), GaussianRandom{1}, 1.0);
}

}  // namespace

TEST_CASE("decay rate frozen values") {
  CHECK(bd::decay_rate(1.0, 0.2, 0.0, 5) == doctest::Approx(0.4096).epsilon(1e-14));
  CHECK(bd::decay_rate(1.0, 0.2, 0.5, 3) == doctest::Approx(0.77).epsilon(1e-14));
  CHECK(bd::decay_rate_sum(1.0, 0.2, 0.5, 3) == doctest::Approx(0.77).epsilon(1e-14));
  CHECK(bd::decay_rate(0.5, 0.0, 0.7, 40) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(bd::decay_rate(0.5, 1.0, 1.0, 40) == 1.0);
}

TEST_CASE("decay rate agrees with the averaged full-gradient recursion") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 3000; ++k) {
    const std::size_t n = 1 + static_cast<std::size_t>(u(rng) * 2000);
    const double alpha = u(rng);
    double dl = 1e-6 + 0.998 * u(rng);
    if (k % 2 == 0) dl = std::clamp((1.0 - alpha) * (1.0 + 2e-6 * (u(rng) - 0.5)), 1e-9, 0.999);
    const double ref = static_cast<double>(oracle::averaged_multiplier(dl, alpha, n));
    if (ref < 1e-250) continue;  // below double resolution for relative comparison
    const double closed = bd::decay_rate(1.0, dl, alpha, n);
    const double summed = bd::decay_rate_sum(1.0, dl, alpha, n);
    CHECK(oracle::rel_err(closed, summed) <= 1e-12);
    CHECK(oracle::rel_err(closed, ref) <= 1e-11);
  }
}

TEST_CASE("decay rate precondition") {
  CHECK(message_contains([] { bd::decay_rate(1.0, 1.0, 0.5, 3); }, "delta * lambda < 1"));
  CHECK_THROWS_AS(bd::decay_rate(1.0, 0.5, 0.5, 0), ValidationError);
}

TEST_CASE("envelope case 1 frozen example") {
  const auto e = bd::decay_rate_envelope(1.0, 0.5, 0.9, 10);
  CHECK(e.case_id == 1);
  CHECK(e.lower == doctest::Approx(0.2755).epsilon(5e-4));
  CHECK(e.upper == doctest::Approx(0.4358).epsilon(5e-4));
  const double b = bd::decay_rate(1.0, 0.5, 0.9, 10);
  CHECK(e.lower <= b);
  CHECK(b <= e.upper);
}

TEST_CASE("envelope boundary and case 4 examples") {
  CHECK(bd::decay_rate_envelope(1.0, 0.25, 0.75, 20).case_id == 2);
  const auto e = bd::decay_rate_envelope(1.0, 0.01, 0.1, 100);
  CHECK(e.case_id == 4);
  CHECK(e.upper == doctest::Approx(0.9 * std::pow(0.99, 100) / (0.9 - 0.01)).epsilon(1e-13));
  CHECK(bd::decay_rate_envelope(1.0, 0.3, 0.0, 7).case_id == 4);
  const auto b = bd::decay_rate(1.0, 0.01, 0.1, 100);
  CHECK(e.lower <= b);
  CHECK(b <= e.upper);
}

TEST_CASE("envelopes bracket the decay rate in every case") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int seen[5] = {0, 0, 0, 0, 0};
  for (int k = 0; k < 20000; ++k) {
    const std::size_t n = 1 + static_cast<std::size_t>(u(rng) * 1000);
    const double alpha = k % 17 == 0 ? 0.0 : u(rng);
    const double dl = 1e-5 + 0.99 * u(rng);
    const auto e = bd::decay_rate_envelope(1.0, dl, alpha, n);
    const double b = static_cast<double>(oracle::averaged_multiplier(dl, alpha, n));
    const double slack = 1e-12 * b + DBL_MIN;  // no relative precision below DBL_MIN
    REQUIRE(e.lower <= b + slack);
    REQUIRE(b <= e.upper + slack);
    seen[e.case_id]++;
  }
  for (int c = 1; c <= 4; ++c) CHECK(seen[c] > 0);
}

TEST_CASE("effective dimensions on the power-law configuration") {
  const auto s = make_power_law_spectrum(2.0, 2000);
  const auto dims = bd::effective_dimensions(s, 0.2, 0.995, 3000);
  CHECK(dims.k_star == 6);
  CHECK(dims.k_dagger == 24);
  CHECK(bd::effective_dimensions(s, 0.2, 0.5, 3000).k_star == 0);
  const auto small = make_power_law_spectrum(1.0, 10);
  CHECK(bd::effective_dimensions(small, 0.5, 0.9, 1000).k_dagger == 10);
}

TEST_CASE("piecewise variance expressions equal their min forms") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const std::size_t d = 5 + static_cast<std::size_t>(u(rng) * 200);
    const auto inst = make_instance(make_power_law_spectrum(1.1 + 2 * u(rng), d), GaussianRandom{rng()}, 1.0);
    const std::size_t n = 10 + static_cast<std::size_t>(u(rng) * 5000);
    const double alpha = std::max(0.0, 1.0 - (1.0 + 20 * u(rng)) / static_cast<double>(n));
    const double delta = (0.01 + 0.98 * u(rng)) / inst.spectrum().top();
    const auto f = bd::variance_forms(inst, delta, alpha, n);
    // Oracle min forms straight from the definitions.
    double m1a = 0, m1b = 0, m2 = 0;
    for (std::size_t i = 0; i < d; ++i) {
      const double l = inst.spectrum()[i], e = inst.displacement()[i];
      m1a += std::pow(std::min(1 - alpha, delta * l), 2);
      m1b += e * e * std::min(1.0, n * delta * l);
      m2 += std::min({1 - alpha, delta * l, n * delta * delta * l * l});
    }
    CHECK(oracle::rel_err(f.piecewise_1a, m1a) <= 1e-12);
    CHECK(oracle::rel_err(f.min_form_1a, m1a) <= 1e-12);
    CHECK(oracle::rel_err(f.piecewise_1b, m1b) <= 1e-12);
    CHECK(oracle::rel_err(f.min_form_1b, m1b) <= 1e-12);
    CHECK(oracle::rel_err(f.piecewise_2, m2) <= 1e-12);
    CHECK(oracle::rel_err(f.min_form_2, m2) <= 1e-12);
  }
}

TEST_CASE("upper bound terms match the direct formula") {
  const auto inst = make_instance(make_power_law_spectrum(1.5, 300), GaussianRandom{4}, 0.7);
  const double delta = 0.1, alpha = 0.99;
  const std::size_t n = 800;
  const auto r = bd::ema_upper_bound(inst, delta, alpha, n);
  const double tr = inst.spectrum().trace();
  double bias = 0, m1a = 0, m1b = 0, m2 = 0;
  for (std::size_t i = 0; i < 300; ++i) {
    const double l = inst.spectrum()[i], e = inst.displacement()[i];
    const double b = static_cast<double>(oracle::averaged_multiplier(delta * l, alpha, n));
    bias += e * e * l * b * b;
    m1a += std::pow(std::min(1 - alpha, delta * l), 2);
    m1b += e * e * std::min(1.0, n * delta * l);
    m2 += std::min({1 - alpha, delta * l, n * delta * delta * l * l});
  }
  const double denom = 1 - 3 * delta * tr;
  CHECK(oracle::rel_err(r.effective_bias, bias) <= 1e-11);
  CHECK(oracle::rel_err(r.feature_noise_term, 3 * m1a * m1b / (delta * denom)) <= 1e-11);
  CHECK(oracle::rel_err(r.label_noise_term, 0.7 * m2 / denom) <= 1e-11);
  CHECK(r.excess_risk_bound() == doctest::Approx(r.effective_bias + r.feature_noise_term + r.label_noise_term));
}

TEST_CASE("upper bound dominates the exact risk on the full-scale configuration") {
  const auto inst = reference_instance();
  const auto bound = bd::ema_upper_bound(inst, 0.2, 0.995, 3000);
  const auto risk = exact::exact_risk(inst, make_scheme(Ema{0.995}, 3000), 0.2);
  CHECK(bound.k_star == 6);
  CHECK(bound.k_dagger == 24);
  CHECK(bound.excess_risk_bound() >= risk.bias + risk.variance);
}

TEST_CASE("bound preconditions are enforced and named") {
  const auto inst = reference_instance();
  CHECK(message_contains([&] { bd::ema_upper_bound(inst, 0.2, 0.9999, 3000); }, "N(1 - alpha) >= 1"));
  CHECK(message_contains([&] { bd::ema_upper_bound(inst, 0.25, 0.995, 3000); }, "delta < 1/(psi tr(H))"));
  CHECK(message_contains([&] { bd::ema_lower_bound(inst, 0.2, 0.9999, 3000); }, "alpha^(N-1) <= 1/N"));
  CHECK(message_contains([&] { bd::ema_lower_bound(inst, 1.5, 0.5, 3000); }, "delta <= 1/lambda_1"));
  CHECK_THROWS_AS(bd::ema_lower_bound(inst, 0.2, 0.5, 1), PreconditionError);
  const auto diag = make_instance(make_explicit_spectrum({1.0, 0.5}), ExplicitDisplacement{{1, 1}}, 1.0,
                                  GaussianMoments{}, DiagonalNoise{{0.5, 0.5}});
  CHECK(message_contains([&] { bd::ema_lower_bound(diag, 0.2, 0.5, 10); }, "well-specified"));
  CHECK(message_contains([&] { bd::minibatch_upper_bound(inst, 0.2, 0.995, 3000, 1); }, "B/(2 psi tr(H))"));
}

TEST_CASE("lower bound condition arithmetic and zero case") {
  const auto zero = make_instance(make_power_law_spectrum(2.0, 50), ExplicitDisplacement{std::vector<double>(50, 0.0)}, 0.0);
  const auto r = bd::ema_lower_bound(zero, 0.5, 0.5, 10);
  CHECK(r.effective_variance == 0.0);
  CHECK(r.excess_risk_bound() == 0.0);
  const auto up = bd::ema_upper_bound(zero, 0.1, 0.5, 10);
  CHECK(up.excess_risk_bound() == 0.0);
}

TEST_CASE("lower bound <= exact excess risk <= upper bound on random instances") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int tested = 0;
  for (int k = 0; k < 40; ++k) {
    const std::size_t d = 5 + static_cast<std::size_t>(u(rng) * 100);
    const auto inst = make_instance(make_power_law_spectrum(1.1 + 1.5 * u(rng), d), GaussianRandom{rng()},
                                    0.05 + 2 * u(rng));
    const std::size_t n = 20 + static_cast<std::size_t>(u(rng) * 1500);
    const double ln = std::log(static_cast<double>(n));
    const double alpha = 1.0 - (ln + 0.1 + 5 * u(rng)) / static_cast<double>(n);
    if (alpha <= 0.0) continue;
    const double delta = (0.02 + 0.97 * u(rng)) / (3 * inst.spectrum().trace());
    const auto lower = bd::ema_lower_bound(inst, delta, alpha, n);
    const auto upper = bd::ema_upper_bound(inst, delta, alpha, n);
    const double risk = exact::exact_risk(inst, make_scheme(Ema{alpha}, n), delta).excess_risk;
    CHECK(lower.excess_risk_bound() <= risk);
    CHECK(risk <= upper.excess_risk_bound());
    ++tested;
  }
  CHECK(tested > 30);
}

TEST_CASE("mini-batch bound: both variance terms halve when the batch doubles") {
  const auto inst = make_instance(make_power_law_spectrum(2.0, 200), GaussianRandom{6}, 1.0);
  auto prev = bd::minibatch_upper_bound(inst, 0.1, 0.99, 1000, 1);
  for (std::size_t b = 2; b <= 256; b *= 2) {
    const auto r = bd::minibatch_upper_bound(inst, 0.1, 0.99, 1000, b);
    CHECK(r.label_noise_term == 0.5 * prev.label_noise_term);
    CHECK(r.feature_noise_term == doctest::Approx(0.5 * prev.feature_noise_term).epsilon(1e-15));
    prev = r;
  }
  const auto b1 = bd::minibatch_upper_bound(inst, 0.1, 0.99, 1000, 1);
  const auto risk = exact::exact_risk(inst, make_scheme(Ema{0.99}, 1000), 0.1);
  CHECK(std::isfinite(b1.excess_risk_bound()));
  CHECK(b1.effective_variance >= risk.variance);
}

TEST_CASE("critical batch scaling") {
  const auto r = bd::critical_batch_scaling(2.0, 1.0, 0.3, 0.999, 1000, 1, 1e6);
  CHECK(r.critical_batch == doctest::Approx(1e6 * 0.001).epsilon(1e-12));
  const auto r2 = bd::critical_batch_scaling(2.0, 1.0, 0.6, 0.999, 1000, 1, 1e6);
  CHECK(r2.variance_term1 / r.variance_term1 == doctest::Approx(std::sqrt(2.0)).epsilon(1e-13));
  const auto a = bd::critical_batch_scaling(2.5, 1.5, 0.3, 0.99, 1000, 4, 1e6);
  const auto b = bd::critical_batch_scaling(2.5, 1.5, 0.3, 0.99, 2000, 4, 1e6);
  CHECK(b.variance_term2 / a.variance_term2 == doctest::Approx(std::pow(2.0, 1.0 - 0.5 / 2.5)).epsilon(1e-13));
  CHECK(message_contains([] { bd::critical_batch_scaling(2.0, 3.0, 0.3, 0.99, 1000, 1, 1e6); }, "b < a + 1"));
  CHECK_THROWS_AS(bd::critical_batch_scaling(1.0, 0.5, 0.3, 0.99, 1000, 1, 1e6), ValidationError);
}

TEST_CASE("scheme comparison") {
  CHECK(bd::decay_rate_iterate_averaging(1.0, 0.2, 3) == doctest::Approx((1 - 0.512) / 0.6).epsilon(1e-14));
  CHECK(bd::decay_rate_iterate_averaging(1.0, 0.2, 3) == doctest::Approx(0.81333).epsilon(1e-5));
  for (double dl : {1e-8, 0.1, 0.7}) {
    CHECK(bd::decay_rate_tail_averaging(1.0, dl, 50, 0) == bd::decay_rate_iterate_averaging(1.0, dl, 50));
    CHECK(bd::decay_rate_last_iterate(1.0, dl, 9) == doctest::Approx(std::pow(1 - dl, 8)));
    // Oracle: direct uniform average of x^t over t = s..N-1.
    double avg = 0;
    for (int t = 10; t < 50; ++t) avg += std::pow(1 - dl, t);
    CHECK(bd::decay_rate_tail_averaging(1.0, dl, 50, 10) == doctest::Approx(avg / 40).epsilon(1e-12));
  }
  const auto s = make_power_law_spectrum(2.0, 2000);
  const auto table = bd::scheme_comparison(s, 0.2, 3000, 0.999, 2000);
  CHECK(table.tail_correspondence);
  CHECK(table.tail_correspondence_gap <= 1e-12);
  REQUIRE(table.rows.size() == 4);
  CHECK(table.rows[0].scheme == "ema");
  CHECK(table.rows[3].scheme == "ta");
  CHECK(table.rows[0].variance_min_form == doctest::Approx(table.rows[3].variance_min_form).epsilon(1e-12));
  for (std::size_t i = 0; i < 2000; ++i) {
    CHECK(table.rows[0].decay[i] >= table.rows[3].decay[i] / std::sqrt(std::exp(1.0)) * (1 - 1e-12));
  }
  CHECK_THROWS_AS(bd::scheme_comparison(s, 0.2, 3000, 0.999, 3000), ValidationError);
  CHECK_THROWS_AS(bd::scheme_comparison(s, 1.0, 3000, 0.999, 10), PreconditionError);
}
