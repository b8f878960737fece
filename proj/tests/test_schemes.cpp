#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "avgsgd/schemes.hpp"
#include "oracle.hpp"

using namespace avgsgd;

namespace {

void check_against_recursion(const AveragingScheme& s) {
  const auto [start, inc] = oracle::averaging_weights(s.alphas());
  CHECK(s.betas()[0] == doctest::Approx(start).epsilon(1e-14));
  for (std::size_t t = 0; t < s.horizon(); ++t) {
    CHECK(s.increments()[t] == doctest::Approx(inc[t]).epsilon(1e-13));
  }
}

}  // namespace

TEST_CASE("ema weights") {
  const auto s = make_scheme(Ema{0.5}, 2);
  CHECK(s.betas()[0] == 0.25);
  CHECK(s.betas()[1] == 0.5);
  CHECK(s.betas()[2] == 1.0);
  CHECK(s.increments()[0] == 0.25);
  CHECK(s.increments()[1] == 0.5);
  check_against_recursion(make_scheme(Ema{0.93}, 40));
}

TEST_CASE("no averaging puts all mass on the last iterate") {
  const auto s = make_scheme(NoAveraging{}, 5);
  for (std::size_t t = 0; t < 5; ++t) CHECK(s.betas()[t] == 0.0);
  CHECK(s.betas()[5] == 1.0);
  for (std::size_t t = 0; t < 4; ++t) CHECK(s.increments()[t] == 0.0);
  CHECK(s.increments()[4] == 1.0);
}

TEST_CASE("iterate averaging weights") {
  const auto s = make_scheme(IterateAveraging{}, 4);
  for (std::size_t t = 0; t <= 4; ++t) CHECK(s.betas()[t] == doctest::Approx(t / 4.0));
  for (std::size_t t = 0; t < 4; ++t) CHECK(s.increments()[t] == doctest::Approx(0.25));
  check_against_recursion(make_scheme(IterateAveraging{}, 30));
}

TEST_CASE("tail averaging weights") {
  const auto s = make_scheme(TailAveraging{2}, 4);
  CHECK(s.increments()[0] == 0.0);
  CHECK(s.increments()[1] == 0.0);
  CHECK(s.increments()[2] == doctest::Approx(0.5));
  CHECK(s.increments()[3] == doctest::Approx(0.5));
  check_against_recursion(make_scheme(TailAveraging{7}, 20));
}

TEST_CASE("reductions: tail(0) = iterate averaging, alpha = 0 = last iterate") {
  const auto ta = make_scheme(TailAveraging{0}, 9);
  const auto ia = make_scheme(IterateAveraging{}, 9);
  for (std::size_t t = 0; t < 9; ++t) CHECK(ta.increments()[t] == doctest::Approx(ia.increments()[t]));
  const auto zero = make_scheme(CustomAlphas{std::vector<double>(6, 0.0)}, 6);
  const auto none = make_scheme(NoAveraging{}, 6);
  for (std::size_t t = 0; t <= 6; ++t) CHECK(zero.betas()[t] == none.betas()[t]);
}

TEST_CASE("weights sum to one and increments are nonnegative") {
  for (const SchemeKind& k : {SchemeKind{Ema{0.9}}, SchemeKind{NoAveraging{}},
                              SchemeKind{IterateAveraging{}}, SchemeKind{TailAveraging{3}},
                              SchemeKind{CustomAlphas{{0.2, 0.9, 0.0, 1.0, 0.5, 0.7}}}}) {
    const auto s = make_scheme(k, 6);
    double total = s.betas()[0];
    for (double c : s.increments()) {
      CHECK(c >= 0.0);
      total += c;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    check_against_recursion(s);
  }
}

TEST_CASE("scheme validation") {
  CHECK_THROWS_AS(make_scheme(Ema{0.0}, 3), ValidationError);
  CHECK_THROWS_AS(make_scheme(Ema{1.0}, 3), ValidationError);
  CHECK_THROWS_AS(make_scheme(TailAveraging{3}, 3), ValidationError);
  CHECK_THROWS_AS(make_scheme(CustomAlphas{{0.5, 0.5}}, 3), ValidationError);
  CHECK_THROWS_AS(make_scheme(CustomAlphas{{0.5, 1.5, 0.5}}, 3), ValidationError);
}

TEST_CASE("prefix keeps the label and the first alphas") {
  const auto s = make_scheme(IterateAveraging{}, 10);
  const auto p = s.prefix(4);
  CHECK(p.horizon() == 4);
  CHECK(p.label() == "ia");
  for (std::size_t t = 0; t < 4; ++t) CHECK(p.alphas()[t] == s.alphas()[t]);
  CHECK(scheme_weights(p).betas.size() == 5);
}

TEST_CASE("scheme spec parsing and formatting") {
  CHECK(std::get<Ema>(parse_scheme_spec("ema:0.995")).alpha == 0.995);
  CHECK(std::holds_alternative<NoAveraging>(parse_scheme_spec("none")));
  CHECK(std::holds_alternative<IterateAveraging>(parse_scheme_spec("ia")));
  CHECK(std::get<TailAveraging>(parse_scheme_spec("ta:1000")).start == 1000);
  const auto custom = std::get<CustomAlphas>(parse_scheme_spec("custom:[0.5, 0.25]"));
  CHECK(custom.alphas == std::vector<double>{0.5, 0.25});
  for (const char* text : {"ema:0.9", "none", "ia", "ta:12", "custom:[0.1, 0.2, 1]"}) {
    CHECK(format_scheme_spec(parse_scheme_spec(text)) ==
          format_scheme_spec(parse_scheme_spec(format_scheme_spec(parse_scheme_spec(text)))));
  }
  CHECK_THROWS_AS(parse_scheme_spec("ema"), ValidationError);
  CHECK_THROWS_AS(parse_scheme_spec("bogus"), ValidationError);
}

TEST_CASE("custom alphas from a file resolve relative to the base directory") {
  const auto dir = std::filesystem::temp_directory_path() / "avgsgd_scheme_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "alphas.txt");
    f << "# three steps\n0.5\n0.75 # comment\n\n1\n";
  }
  const auto kind = std::get<CustomAlphas>(parse_scheme_spec("custom:@alphas.txt", dir));
  CHECK(kind.alphas == std::vector<double>{0.5, 0.75, 1.0});
  CHECK_THROWS_AS(parse_scheme_spec("custom:@missing.txt", dir), ValidationError);
}
