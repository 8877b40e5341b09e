#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "branchlab/error.hpp"
#include "branchlab/quadrature.hpp"
#include "branchlab/space.hpp"
#include "oracles.hpp"

using namespace branchlab;

TEST_CASE("domain geometry") {
  Domain d(-5.0, 5.0, 2001, Boundary::truncate);
  CHECK(d.spacing() == doctest::Approx(0.005));
  CHECK(d.node(1000) == doctest::Approx(0.0));
  CHECK(d.weight(0) == doctest::Approx(0.0025));
  CHECK(d.weight(7) == doctest::Approx(0.005));
  CHECK_THROWS_AS(d.reduce(5.1), DomainError);
  CHECK_THROWS_AS(Domain(1.0, 1.0, 11, Boundary::torus), DomainError);
  CHECK_THROWS_AS(Domain(0.0, 1.0, 2, Boundary::torus), DomainError);
  CHECK_THROWS_AS(Domain(0.0, INFINITY, 11, Boundary::torus), NumericInputError);
}

TEST_CASE("torus reduction and locate") {
  Domain d(-5.0, 5.0, 11, Boundary::torus);
  CHECK(d.reduce(5.0) == doctest::Approx(-5.0));
  CHECK(d.reduce(7.5) == doctest::Approx(-2.5));
  CHECK(d.reduce(-12.0) == doctest::Approx(-2.0));
  const auto [cell, frac] = d.locate(0.25);
  CHECK(cell == 5);
  CHECK(frac == doctest::Approx(0.25));
  CHECK(d.weight(10) == 0.0);
}

TEST_CASE("grid function validation and wrap") {
  Domain d(0.0, 1.0, 5, Boundary::torus);
  CHECK_THROWS_AS(GridFunction(d, {1.0, 2.0}), DomainError);
  CHECK_THROWS_AS(GridFunction(d, {1.0, NAN, 0.0, 0.0, 0.0}), NumericInputError);
  GridFunction f(d, {1.0, 2.0, 3.0, 4.0, 9.0});
  CHECK(f[4] == 1.0);
  CHECK(f.interpolate(0.875) == doctest::Approx(2.5));
  CHECK(f.interpolate(1.125) == doctest::Approx(1.5));
}

TEST_CASE("trapezoid integral of psi against the closed form") {
  Domain d(-5.0, 5.0, 2001, Boundary::truncate);
  TemperingWeight w(d, 0.5, 0.5);
  const double exact = oracle::psi_integral_line(-5.0, 5.0, 0.5, 0.5);
  CHECK(exact == doctest::Approx(1.835830002752202).epsilon(1e-14));
  CHECK(std::abs(integrate(w.grid()) - exact) <= 1e-6);

  Domain c(-5.0, 5.0, 2001, Boundary::torus);
  TemperingWeight wc(c, 0.5, 0.5);
  CHECK(std::abs(integrate(wc.grid()) - oracle::psi_integral_circle(10.0, 0.5, 0.5)) <= 5e-6);
}

TEST_CASE("trapezoid rule is second order") {
  auto err = [](std::size_t n) {
    Domain d(0.0, 2.0, n, Boundary::truncate);
    auto f = GridFunction::from(d, [](double x) { return std::exp(x); });
    return std::abs(integrate(f) - (std::exp(2.0) - 1.0));
  };
  const double ratio = err(101) / err(201);
  CHECK(ratio == doctest::Approx(4.0).epsilon(0.01));
}

TEST_CASE("tempering weight values") {
  Domain d(-5.0, 5.0, 2001, Boundary::truncate);
  TemperingWeight w(d, 0.5, 0.5);
  CHECK(w(0.0) == doctest::Approx(0.5));
  CHECK(w(2.0) == doctest::Approx(0.5 * std::exp(-1.0)));
  CHECK(w(2.0) == doctest::Approx(0.183940).epsilon(1e-6));
  CHECK_THROWS_AS(w(6.0), DomainError);
  CHECK_THROWS_AS(TemperingWeight(d, 1.0, 0.5), DomainError);
  CHECK_THROWS_AS(TemperingWeight(d, 0.5, 0.0), DomainError);
  Domain off(-5.0, 5.0, 2000, Boundary::truncate);
  CHECK_THROWS_AS(TemperingWeight(off, 0.5, 0.5), DomainError);
}

TEST_CASE("tempering weight on the circle is periodic and bounded by its peak") {
  Domain d(-5.0, 5.0, 2001, Boundary::torus);
  TemperingWeight w(d, 0.5, 0.5);
  CHECK(w(0.0) == doctest::Approx(0.5));
  CHECK(w(4.9) == doctest::Approx(w(-5.1)));
  CHECK(w(-5.0) == doctest::Approx(w(5.0)));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int i = 0; i < 200; ++i) {
    const double x = u(rng);
    CHECK(w(x) > 0.0);
    CHECK(w(x) <= 0.5 + 1e-15);
  }
}

TEST_CASE("Simpson rule") {
  auto cubic = [](double x) { return x * x * x - 2.0 * x + 1.0; };
  for (std::size_t k : {2u, 3u, 4u, 5u, 9u}) {
    std::vector<double> f(k + 1);
    const double h = 2.0 / static_cast<double>(k);
    for (std::size_t j = 0; j <= k; ++j) f[j] = cubic(h * static_cast<double>(j));
    CHECK(simpson(f, h) == doctest::Approx(2.0).epsilon(1e-13));
  }
  std::vector<double> two{1.0, 3.0};
  CHECK(simpson(two, 0.5) == doctest::Approx(1.0));
  CHECK(simpson(std::vector<double>{4.0}, 0.1) == 0.0);

  auto err = [](std::size_t k) {
    std::vector<double> f(k + 1);
    const double h = 1.0 / static_cast<double>(k);
    for (std::size_t j = 0; j <= k; ++j) f[j] = std::exp(h * static_cast<double>(j));
    return std::abs(simpson(f, h) - (std::exp(1.0) - 1.0));
  };
  CHECK(err(20) / err(40) == doctest::Approx(16.0).epsilon(0.02));
}
