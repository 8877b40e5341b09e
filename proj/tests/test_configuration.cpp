#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "branchlab/configuration.hpp"
#include "oracles.hpp"

using namespace branchlab;

namespace {

struct Setup {
  Domain d;
  TemperingWeight w;
  BranchingKernel k;
};

Setup pure_death(std::size_t n = 11) {
  Domain d(-5.0, 5.0, n, Boundary::torus);
  return {d, TemperingWeight(d, 0.5, 0.5),
          BranchingKernel(OffspringLaw::pure_death(d), DispersalKernel::at_parent(d))};
}

Setup reference(std::size_t n = 201) {
  Domain d(-5.0, 5.0, n, Boundary::torus);
  TemperingWeight w(d, 0.5, 0.5);
  auto rate = GridFunction::from(d, [&](double x) { return -std::log1p(-w(x)); });
  return {d, w,
          BranchingKernel(OffspringLaw::poisson_count(rate), DispersalKernel::uniform_radius(d, 1.0))};
}

TestFunction scaled_psi(const Setup& s, double c) {
  auto th = GridFunction::from(s.d, [&](double x) { return c * s.w(x); });
  return make_test_function(th, s.k, s.w);
}

Configuration random_config(const TemperingWeight& w, std::mt19937_64& rng, int max_size) {
  std::uniform_int_distribution<int> n(0, max_size);
  std::uniform_real_distribution<double> x(-5.0, 5.0);
  std::vector<double> pos(n(rng));
  for (auto& p : pos) p = x(rng);
  return Configuration(w, pos);
}

}  // namespace

TEST_CASE("tempering sum") {
  Domain d(-5.0, 5.0, 2001, Boundary::truncate);
  TemperingWeight w(d, 0.5, 0.5);
  CHECK(tempering_sum(Configuration::empty(w), w) == 0.0);
  CHECK(tempering_sum(Configuration(w, {0.0}), w) == doctest::Approx(0.5));
  CHECK(tempering_sum(Configuration(w, {0.0, 2.0}), w) == doctest::Approx(0.683940).epsilon(1e-6));
  CHECK(Configuration(w, {0.0, 2.0}).psi_sum() == doctest::Approx(0.5 + 0.5 * std::exp(-1.0)));
  CHECK_THROWS_AS(Configuration(w, {6.0}), DomainError);
  CHECK_THROWS_AS(Configuration(w, std::vector<double>(11, 0.0), 10), CapError);
}

TEST_CASE("product functional") {
  Domain d(-5.0, 5.0, 2001, Boundary::truncate);
  TemperingWeight w(d, 0.5, 0.5);
  const auto six = GridFunction::constant(d, 0.6);
  CHECK(product_functional(Configuration::empty(w), six) == 1.0);
  CHECK(product_functional(Configuration(w, {0.0, 2.0}), six) == doctest::Approx(0.36));
  auto phi = GridFunction::from(d, [&](double x) { return 1.0 - 0.8 * w(x); });
  CHECK(product_functional(Configuration(w, {0.0}), phi) == doctest::Approx(0.6));
  CHECK_THROWS_AS(product_functional(Configuration(w, {0.0}), GridFunction::constant(d, 0.0)), DomainError);
}

TEST_CASE("branching property") {
  const auto s = reference();
  const auto f = scaled_psi(s, 0.7);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    const auto a = random_config(s.w, rng, 10);
    const auto b = random_config(s.w, rng, 10);
    const auto joined = a.merged(b, s.w);
    CHECK(joined.size() == a.size() + b.size());
    CHECK(joined.psi_sum() == doctest::Approx(a.psi_sum() + b.psi_sum()));
    CHECK(product_functional(joined, f.phi()) ==
          doctest::Approx(product_functional(a, f.phi()) * product_functional(b, f.phi())).epsilon(1e-13));
  }
}

TEST_CASE("generator for pure death") {
  const auto s = pure_death();
  const auto f = make_test_function(GridFunction::constant(s.d, 0.4), s.k, s.w, Admission::oracle);
  CHECK(apply_L(Configuration::empty(s.w), f, s.k) == 0.0);
  CHECK(apply_L(Configuration(s.w, {1.3}), f, s.k) == doctest::Approx(0.4));
  // Two particles: 2 * 0.6 * 0.4.
  CHECK(apply_L(Configuration(s.w, {1.3, -2.0}), f, s.k) == doctest::Approx(0.48));
}

TEST_CASE("generator against a literal sum over offspring counts") {
  Domain d(-5.0, 5.0, 101, Boundary::torus);
  TemperingWeight w(d, 0.5, 0.5);
  auto law = [](double x) {
    const double q = 0.1 + 0.05 * std::cos(x);
    return std::vector<double>{0.6 - q, 0.3, q, 0.1};
  };
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < d.size(); ++i) rows.push_back(law(d.node(i)));
  BranchingKernel k(OffspringLaw::finite_table(d, rows), DispersalKernel::at_parent(d));
  auto phi_fn = [](double x) { return 0.7 + 0.2 * std::sin(x); };
  auto phi = GridFunction::from(d, phi_fn);
  const auto image = apply_phi(k, phi);
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> node(0, d.size() - 2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> pos(1 + trial % 6);
    for (auto& p : pos) p = d.node(node(rng));
    const Configuration g(w, pos);
    const double ref = oracle::generator_at_parent(pos, phi_fn, law);
    CHECK(apply_L(g, d, phi.values(), image.values()) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("generator bound over random configurations") {
  const auto s = reference();
  const auto f = scaled_psi(s, 0.8);
  const double bound = generator_bound(0.5, 0.8);
  CHECK(bound == doctest::Approx(oracle::generator_bound(0.5, 0.8)));
  CHECK(bound == doctest::Approx(1.839397).epsilon(1e-6));
  CHECK(std::isinf(generator_bound(0.5, 0.0)));
  std::mt19937_64 rng(99);
  for (int i = 0; i < 100; ++i) {
    const auto g = random_config(s.w, rng, 60);
    CHECK(std::abs(apply_L(g, f, s.k)) <= bound);
  }
}

TEST_CASE("Kolmogorov equation for pure death") {
  const auto s = pure_death();
  const auto f = make_test_function(GridFunction::constant(s.d, 0.4), s.k, s.w, Admission::oracle);
  const auto tr = ode_solve(s.k, f, 2.0, 1e-3);
  const Configuration g(s.w, {0.0, 2.0});
  auto series = functional_series(g, tr, s.k);
  CHECK(kolmogorov_residual(series, 0) == 0.0);
  CHECK(kolmogorov_residual(series, 1000) <= 1e-10);
  const double phi1 = oracle::pure_death_phi(0.6, 1.0);
  CHECK(series.value[1000] == doctest::Approx(phi1 * phi1).epsilon(1e-10));
  CHECK(series.generator[1000] == doctest::Approx(2.0 * phi1 * (1.0 - phi1)).epsilon(1e-10));
  CHECK(kolmogorov_residual(g, tr, s.k, 2.0) <= 1e-10);
}

TEST_CASE("Kolmogorov residual is second order in dt on the reference kernel") {
  const auto s = reference(101);
  const auto f = scaled_psi(s, 0.8);
  const Configuration g(s.w, {-1.5, -0.5, 0.3, 1.2, 2.0});
  const double r1 = kolmogorov_residual(g, ode_solve(s.k, f, 1.0, 2e-2), s.k, 1.0);
  const double r2 = kolmogorov_residual(g, ode_solve(s.k, f, 1.0, 1e-2), s.k, 1.0);
  CHECK(r1 <= 1e-6);
  CHECK(r2 <= r1);
}

TEST_CASE("resolvent for pure death") {
  const auto s = pure_death();
  const auto f = make_test_function(GridFunction::constant(s.d, 0.4), s.k, s.w, Admission::oracle);
  const auto tr = ode_solve(s.k, f, 20.0, 1e-3);
  const auto series = functional_series(Configuration(s.w, {0.0}), tr, s.k);
  for (double lambda : {2.0, 5.0, 10.0}) {
    const auto v = resolvent(series, lambda, 1e-7);
    const double exact = 1.0 / lambda - 0.4 / (lambda + 1.0);
    CHECK(v.horizon >= v.required_horizon);
    CHECK(v.tail_bound <= 1e-7);
    CHECK(std::abs(v.value - exact) <= v.tail_bound + 1e-9);
    const auto id = resolvent_identity(series, 1, lambda, 1e-7, 0.5, 0.8);
    CHECK(id.residual <= id.tail_bound + 1e-9);
  }
  CHECK(resolvent(series, 2.0, 1e-7).value == doctest::Approx(0.366667).epsilon(1e-6));
  const auto short_tr = ode_solve(s.k, f, 5.0, 1e-2);
  CHECK_THROWS_AS(resolvent(functional_series(Configuration(s.w, {0.0}), short_tr, s.k), 2.0, 1e-7),
                  HorizonError);
  CHECK(resolvent_horizon(2.0, 1e-7) == doctest::Approx(std::log(1e7)));
  CHECK(resolvent_horizon(10.0, 1e-7) == 12.0);
}

TEST_CASE("resolvent of the stationary solution") {
  const auto s = reference(51);
  const auto one = make_test_function(GridFunction::constant(s.d, 0.0), s.k, s.w, Admission::boundary);
  const auto tr = ode_solve(s.k, one, 17.0, 1e-3);
  const auto series = functional_series(Configuration(s.w, {0.0, 1.0}), tr, s.k);
  for (double lambda : {2.0, 5.0}) {
    const auto v = resolvent(series, lambda, 1e-7);
    CHECK(std::abs(v.value + v.tail_bound - 1.0 / lambda) <= 1e-9);
    const auto id = resolvent_identity(series, 2, lambda, 1e-7, 0.5, 0.0);
    CHECK(id.generator_integral == 0.0);
    CHECK(id.residual <= id.tail_bound + 1e-9);
  }
}

TEST_CASE("resolvent identity and convergence on the reference kernel") {
  const auto s = reference(101);
  const auto f = scaled_psi(s, 0.8);
  const auto tr = ode_solve(s.k, f, 17.0, 1e-2);
  const auto series = functional_series(Configuration(s.w, {-1.5, -0.5, 0.3, 1.2, 2.0}), tr, s.k);
  for (double lambda : {2.0, 5.0, 10.0}) {
    const auto id = resolvent_identity(series, 5, lambda, 1e-7, 0.5, f.c_phi());
    CHECK(id.residual <= 1e-5);
    CHECK(id.tail_bound <= 1e-7);
    CHECK(id.converges);
    CHECK(id.convergence_gap <= id.convergence_bound);
    CHECK(id.convergence_bound == doctest::Approx(generator_bound(0.5, f.c_phi()) / (lambda - 1.0)));
  }
}

TEST_CASE("functional bounds along the reference flow") {
  const auto s = reference(101);
  const auto f = scaled_psi(s, 0.8);
  const auto rep = assess_assumptions(s.k, s.w);
  const auto tr = ode_solve(s.k, f, 3.0, 1e-2);
  std::mt19937_64 rng(17);
  for (int i = 0; i < 10; ++i) {
    const auto g = random_config(s.w, rng, 20);
    const auto series = functional_series(g, tr, s.k);
    const auto b = check_functional_bounds(series, g.psi_sum(), f.c_phi(), 0.5, rep.n_star, rep.m);
    CHECK(b.applicable);
    CHECK(b.holds());
  }
  CHECK(generator_lipschitz_constant(0.6, 1.0, 0.5, 1.0) ==
        doctest::Approx(2.0 * 1.6 / (std::numbers::e * 0.5) + 16.0 / std::pow(std::numbers::e * 0.5, 2)));
}
