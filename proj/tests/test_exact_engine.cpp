#include <doctest.h>

#include <random>

#include "avgsgd/bounds.hpp"
#include "avgsgd/exact_engine.hpp"
#include "oracle.hpp"

using namespace avgsgd;

namespace {

std::vector<SchemeKind> all_kinds(std::size_t n) {
  std::vector<double> custom(n);
  for (std::size_t t = 0; t < n; ++t) custom[t] = 0.3 + 0.6 * static_cast<double>(t % 3) / 2.0;
  return {Ema{0.6}, NoAveraging{}, IterateAveraging{}, TailAveraging{n / 2}, CustomAlphas{custom}};
}

ProblemInstance small_instance(std::uint64_t seed, std::size_t d = 3, double sigma2 = 0.8) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0), e(-2.0, 2.0);
  std::vector<double> lambda(d), eta(d);
  for (auto& l : lambda) l = u(rng);
  std::sort(lambda.rbegin(), lambda.rend());
  for (auto& x : eta) x = e(rng);
  return make_instance(make_explicit_spectrum(lambda), ExplicitDisplacement{eta}, sigma2);
}

}  // namespace

TEST_CASE("second-moment step, hand-evaluated") {
  const auto inst = make_instance(make_explicit_spectrum({1.0, 0.5}), ExplicitDisplacement{{1.0, 1.0}}, 0.0);
  auto s = exact::initial_state(inst);
  s = exact::second_moment_step(s, inst, 0.1);
  CHECK(s.t == 1);
  CHECK(s.bias_diag[0] == doctest::Approx(0.835).epsilon(1e-14));
  CHECK(s.bias_diag[1] == doctest::Approx(0.9125).epsilon(1e-14));
}

TEST_CASE("second-moment step: zero stays zero, first noise injection") {
  const auto zero = make_instance(make_explicit_spectrum({1.0, 0.5}), ExplicitDisplacement{{0.0, 0.0}}, 0.0);
  auto s = exact::second_moment_step(exact::initial_state(zero), zero, 0.1);
  CHECK(s.bias_diag == std::vector<double>{0.0, 0.0});
  const auto noisy = make_instance(make_explicit_spectrum({1.0}), ExplicitDisplacement{{0.0}}, 1.0);
  s = exact::second_moment_step(exact::initial_state(noisy), noisy, 0.1);
  CHECK(s.var_diag[0] == doctest::Approx(0.01).epsilon(1e-14));
}

TEST_CASE("second-moment step matches the dense four-index oracle") {
  const auto inst = small_instance(3, 3);
  for (std::size_t batch : {1u, 3u}) {
    auto s = exact::initial_state(inst);
    oracle::Matrix d = oracle::zeros(3);
    for (std::size_t i = 0; i < 3; ++i) d[i][i] = s.bias_diag[i];
    for (int k = 0; k < 5; ++k) {
      s = exact::second_moment_step(s, inst, 0.4, batch);
      d = oracle::sgd_second_moment(inst.spectrum().eigenvalues(), d, 0.4, batch);
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(s.bias_diag[i] == doctest::Approx(d[i][i]).epsilon(1e-13));
  }
}

TEST_CASE("second-moment step rejects divergent steps and bad dimensions") {
  const auto inst = small_instance(4);
  CHECK_THROWS_AS(exact::second_moment_step(exact::initial_state(inst), inst, 2.0 / inst.spectrum().top()),
                  PreconditionError);
  auto bad = exact::initial_state(inst);
  bad.bias_diag.pop_back();
  CHECK_THROWS_AS(exact::second_moment_step(bad, inst, 0.1), ValidationError);
}

TEST_CASE("fourth-moment excess equals the Isserlis diagonal, not the alternative form") {
  const auto s = make_explicit_spectrum({1.0, 0.5});
  // Oracle: diag(E[x x^T A x x^T]) from the four-index sum, minus diag(HAH).
  const auto m = oracle::fourth_moment(s.eigenvalues(), {{1.0, 0.0}, {0.0, 0.0}});
  CHECK(m[0][0] == doctest::Approx(3.0));
  CHECK(m[1][1] == doctest::Approx(0.5));
  const auto ex = exact::fourth_moment_excess(std::vector<double>{1.0, 0.0}, s, 1.0);
  CHECK(ex[0] + 1.0 == doctest::Approx(3.0));
  CHECK(ex[1] + 0.0 == doctest::Approx(0.5));
}

TEST_CASE("operator sandwich: d^2 tr(HA) l_i <= ((B - B~) o A)_ii <= 3 d^2 tr(HA) l_i") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  const auto s = make_power_law_spectrum(1.3, 12);
  for (int k = 0; k < 50; ++k) {
    std::vector<double> a(12);
    for (auto& x : a) x = u(rng);
    double tr = 0.0;
    for (std::size_t i = 0; i < 12; ++i) tr += s[i] * a[i];
    const auto ex = exact::fourth_moment_excess(a, s, 0.3);
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(ex[i] >= 0.09 * tr * s[i] * (1 - 1e-14));
      CHECK(ex[i] <= 3 * 0.09 * tr * s[i] * (1 + 1e-14));
    }
  }
}

TEST_CASE("suffix geometric sums, hand-evaluated") {
  const auto s = make_explicit_spectrum({0.2});
  const std::vector<double> c{0.25, 0.75};
  const auto g = exact::suffix_geometric_sums(c, s, 1.0);
  REQUIRE(g.size() == 3);
  CHECK(g[2][0] == 0.0);
  CHECK(g[1][0] == doctest::Approx(0.75));
  CHECK(g[0][0] == doctest::Approx(0.85));
  const auto z = exact::suffix_geometric_sums(std::vector<double>(4, 0.0), s, 1.0);
  for (const auto& row : z) CHECK(row[0] == 0.0);
}

TEST_CASE("deterministic bias equals the averaged full-gradient multiplier") {
  const auto inst = make_instance(make_power_law_spectrum(1.0, 20), GaussianRandom{1}, 1.0);
  for (double alpha : {0.3, 0.9, 0.999}) {
    const auto g = exact::deterministic_bias(inst, make_scheme(Ema{alpha}, 57), 0.7);
    for (std::size_t i = 0; i < 20; ++i) {
      const double dl = 0.7 * inst.spectrum()[i];
      CHECK(oracle::rel_err(g[i], static_cast<double>(oracle::averaged_multiplier(dl, alpha, 57))) <= 1e-12);
      CHECK(oracle::rel_err(g[i], bounds::decay_rate(0.7, inst.spectrum()[i], alpha, 57)) <= 1e-12);
    }
  }
}

TEST_CASE("deterministic bias frozen values") {
  const auto one = make_instance(make_explicit_spectrum({0.2}), ExplicitDisplacement{{1.0}}, 0.0);
  CHECK(exact::deterministic_bias(one, make_scheme(CustomAlphas{std::vector<double>(5, 0.0)}, 5), 1.0)[0] ==
        doctest::Approx(0.4096).epsilon(1e-14));
  CHECK(exact::deterministic_bias(one, make_scheme(Ema{0.5}, 3), 1.0)[0] == doctest::Approx(0.77).epsilon(1e-14));
  const auto flat = make_instance(make_explicit_spectrum({1e-300}), ExplicitDisplacement{{1.0}}, 0.0);
  CHECK(exact::deterministic_bias(flat, make_scheme(Ema{0.9}, 100), 0.5)[0] == doctest::Approx(1.0));
}

TEST_CASE("exact risk zero cases and single-step identity") {
  const auto zero = make_instance(make_explicit_spectrum({1.0, 0.3}), ExplicitDisplacement{{0.0, 0.0}}, 0.0);
  for (const auto& k : all_kinds(6)) {
    const auto r = exact::exact_risk(zero, make_scheme(k, 6), 0.5);
    CHECK(r.bias == 0.0);
    CHECK(r.variance == 0.0);
    CHECK(exact::direct_risk_oracle(zero, make_scheme(k, 6), 0.5).bias == 0.0);
    CHECK(exact::dense_risk_oracle(zero, make_scheme(k, 6), 0.5).risk.variance == 0.0);
  }
  const auto inst = small_instance(5);
  double norm = 0.0;
  for (std::size_t i = 0; i < 3; ++i) norm += inst.spectrum()[i] * inst.displacement()[i] * inst.displacement()[i];
  const auto r = exact::exact_risk(inst, make_scheme(Ema{0.4}, 1), 0.5);
  CHECK(r.bias == doctest::Approx(norm).epsilon(1e-14));
  CHECK(r.variance == 0.0);
}

TEST_CASE("exact risk: one-step last iterate in one dimension") {
  const auto inst = make_instance(make_explicit_spectrum({1.0}), ExplicitDisplacement{{1.0}}, 0.0);
  const auto s = make_scheme(NoAveraging{}, 2);
  CHECK(exact::exact_risk(inst, s, 0.5).bias == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(exact::direct_risk_oracle(inst, s, 0.5).bias == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("exact risk matches the direct oracle (d = 4, N = 8, ema 0.6, power law)") {
  const auto inst = make_instance(make_power_law_spectrum(2.0, 4), GaussianRandom{2}, 1.0);
  const auto s = make_scheme(Ema{0.6}, 8);
  const auto a = exact::exact_risk(inst, s, 0.1);
  const auto b = exact::direct_risk_oracle(inst, s, 0.1);
  CHECK(oracle::rel_err(a.bias, b.bias) <= 1e-10);
  CHECK(oracle::rel_err(a.variance, b.variance) <= 1e-10);
  CHECK(a.excess_risk == doctest::Approx(0.5 * (a.bias + a.variance)));
}

TEST_CASE("all exact methods agree with the dense joint-moment oracle") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const auto inst = small_instance(seed, 1 + seed % 4);
    const std::size_t n = 2 + seed % 7;
    for (std::size_t batch : {1u, 2u}) {
      for (const auto& k : all_kinds(n)) {
        const auto scheme = make_scheme(k, n);
        const double delta = 0.8 / inst.spectrum().top();
        const auto ref = oracle::risk_paths(inst.spectrum().eigenvalues(), inst.displacement(),
                                            inst.sigma2(), scheme.alphas(), delta, batch);
        exact::ExactOptions o;
        o.batch = batch;
        const auto tele = exact::exact_risk(inst, scheme, delta, o);
        const auto direct = exact::direct_risk_oracle(inst, scheme, delta, batch);
        const auto dense = exact::dense_risk_oracle(inst, scheme, delta, batch);
        const auto path = exact::risk_path(inst, scheme, delta, batch);
        for (const auto* r : {&tele, &direct, &dense.risk}) {
          CHECK(oracle::rel_err(r->bias, ref.bias.back()) <= 1e-10);
          CHECK(oracle::rel_err(r->variance, ref.variance.back()) <= 1e-10);
        }
        for (std::size_t t = 0; t <= n; ++t) {
          CHECK(oracle::rel_err(path.bias[t], ref.bias[t]) <= 1e-10);
          CHECK(oracle::rel_err(path.variance[t], ref.variance[t]) <= 1e-10);
        }
        CHECK(dense.max_off_diagonal <= 1e-14);
        CHECK(oracle::rel_err(dense.bias_from_diagonal_start, tele.bias) <= 1e-10);
      }
    }
  }
}

TEST_CASE("risk path equals exact risk of every prefix") {
  const auto inst = make_instance(make_power_law_spectrum(1.5, 30), GaussianRandom{3}, 0.5);
  for (const auto& k : all_kinds(40)) {
    const auto scheme = make_scheme(k, 40);
    const auto path = exact::risk_path(inst, scheme, 0.3);
    for (std::size_t h = 1; h <= 40; ++h) {
      const auto r = exact::exact_risk(inst, scheme.prefix(h), 0.3);
      CHECK(oracle::rel_err(path.bias[h], r.bias) <= 1e-10);
      CHECK(oracle::rel_err(path.variance[h], r.variance) <= 1e-10);
    }
  }
}

TEST_CASE("exact risk is bit-identical across jobs and suffix modes") {
  const auto inst = make_instance(make_power_law_spectrum(2.0, 500), GaussianRandom{4}, 1.0);
  const auto scheme = make_scheme(TailAveraging{100}, 300);
  exact::ExactOptions base;
  base.suffix_mode = exact::SuffixTableMode::table;
  const auto ref = exact::exact_risk(inst, scheme, 0.2, base);
  for (unsigned jobs : {1u, 2u, 4u}) {
    for (auto mode : {exact::SuffixTableMode::table, exact::SuffixTableMode::regenerate,
                      exact::SuffixTableMode::automatic}) {
      exact::ExactOptions o;
      o.jobs = jobs;
      o.suffix_mode = mode;
      o.memory_budget_bytes = mode == exact::SuffixTableMode::automatic ? 1024 : o.memory_budget_bytes;
      const auto r = exact::exact_risk(inst, scheme, 0.2, o);
      CHECK(r.bias == ref.bias);
      CHECK(r.variance == ref.variance);
      CHECK(r.per_coordinate_bias == ref.per_coordinate_bias);
      CHECK(r.per_coordinate_variance == ref.per_coordinate_variance);
    }
  }
}

TEST_CASE("tr(H C_t) <= sigma^2 d tr(H) / (1 - 3 d tr(H))") {
  for (double a : {1.2, 2.0}) {
    const auto s = make_power_law_spectrum(a, 200);
    const auto inst = make_instance(s, GaussianRandom{5}, 1.3);
    const double delta = 0.9 / (3.0 * s.trace());
    const double cap = inst.sigma2() * delta * s.trace() / (1.0 - 3.0 * delta * s.trace());
    auto st = exact::initial_state(inst);
    for (int t = 0; t < 3000; ++t) {
      st = exact::second_moment_step(st, inst, delta);
      double tr = 0.0;
      for (std::size_t i = 0; i < 200; ++i) tr += s[i] * st.var_diag[i];
      REQUIRE(tr <= cap * (1 + 1e-12));
    }
  }
}

TEST_CASE("summed tr(H B_k) <= sum_i eta_i^2 (1 - (1 - d l_i)^t) / (d (1 - 3 d tr(H)))") {
  // Checked for both index ranges k = 0..t-1 and k = 1..t.
  const auto s = make_power_law_spectrum(1.5, 100);
  const auto inst = make_instance(s, GaussianRandom{6}, 0.0);
  const double delta = 0.9 / (3.0 * s.trace());
  const double scale = 1.0 / (delta * (1.0 - 3.0 * delta * s.trace()));
  auto st = exact::initial_state(inst);
  double from_zero = 0.0, from_one = 0.0;
  for (int t = 1; t <= 4000; ++t) {
    double tr_prev = 0.0;
    for (std::size_t i = 0; i < 100; ++i) tr_prev += s[i] * st.bias_diag[i];
    from_zero += tr_prev;
    st = exact::second_moment_step(st, inst, delta);
    double tr_now = 0.0;
    for (std::size_t i = 0; i < 100; ++i) tr_now += s[i] * st.bias_diag[i];
    from_one += tr_now;
    double cap = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
      const double e = inst.displacement()[i];
      cap += e * e * -std::expm1(t * std::log1p(-delta * s[i]));
    }
    cap *= scale;
    REQUIRE(from_zero <= cap * (1 + 1e-12));
    REQUIRE(from_one <= cap * (1 + 1e-12));
  }
}

TEST_CASE("exact engine preconditions") {
  const auto inst = small_instance(7);
  const auto s = make_scheme(Ema{0.5}, 4);
  CHECK_THROWS_AS(exact::exact_risk(inst, s, 1.0 / inst.spectrum().top()), PreconditionError);
  CHECK_THROWS_AS(exact::risk_path(inst, s, 0.0), PreconditionError);
  const auto big = make_instance(make_power_law_spectrum(2.0, 20), GaussianRandom{1}, 1.0);
  CHECK_THROWS_AS(exact::dense_risk_oracle(big, s, 0.1), PreconditionError);
  CHECK_THROWS_AS(exact::direct_risk_oracle(big, make_scheme(Ema{0.5}, 3000), 0.1), PreconditionError);
}

TEST_CASE("variance does not increase with the batch size") {
  const auto inst = make_instance(make_power_law_spectrum(2.0, 100), GaussianRandom{8}, 1.0);
  const auto scheme = make_scheme(Ema{0.99}, 500);
  double prev = INFINITY;
  for (std::size_t b = 1; b <= 256; b *= 2) {
    exact::ExactOptions o;
    o.batch = b;
    const double v = exact::exact_risk(inst, scheme, 0.2, o).variance;
    CHECK(v <= prev);
    prev = v;
  }
}

TEST_CASE("diagonal noise: excess risk is flagged as not exact") {
  const auto s = make_explicit_spectrum({1.0, 0.5});
  const auto inst = make_instance(s, ExplicitDisplacement{{1.0, 1.0}}, 1.0, GaussianMoments{},
                                  DiagonalNoise{{0.5, 0.1}});
  const auto scheme = make_scheme(Ema{0.5}, 5);
  const auto r = exact::exact_risk(inst, scheme, 0.3);
  CHECK_FALSE(r.excess_is_exact);
  const auto ref = oracle::risk_paths(s.eigenvalues(), inst.displacement(), 0.0, scheme.alphas(), 0.3);
  CHECK(oracle::rel_err(r.bias, ref.bias.back()) <= 1e-12);
  CHECK(oracle::rel_err(r.variance, exact::direct_risk_oracle(inst, scheme, 0.3).variance) <= 1e-10);
}
