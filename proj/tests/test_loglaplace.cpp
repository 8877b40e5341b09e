#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include "branchlab/loglaplace.hpp"
#include "oracles.hpp"

using namespace branchlab;

namespace {

struct Setup {
  Domain d;
  TemperingWeight w;
  BranchingKernel k;
};

Setup pure_death(std::size_t n = 101) {
  Domain d(-5.0, 5.0, n, Boundary::torus);
  return {d, TemperingWeight(d, 0.5, 0.5),
          BranchingKernel(OffspringLaw::pure_death(d), DispersalKernel::at_parent(d))};
}

Setup riccati(std::size_t n = 101) {
  Domain d(-5.0, 5.0, n, Boundary::torus);
  return {d, TemperingWeight(d, 0.5, 0.5),
          BranchingKernel(OffspringLaw::binary_split(GridFunction::constant(d, 0.3)),
                          DispersalKernel::at_parent(d))};
}

Setup reference(std::size_t n = 201) {
  Domain d(-5.0, 5.0, n, Boundary::torus);
  TemperingWeight w(d, 0.5, 0.5);
  auto rate = GridFunction::from(d, [&](double x) { return -std::log1p(-w(x)); });
  return {d, w,
          BranchingKernel(OffspringLaw::poisson_count(rate), DispersalKernel::uniform_radius(d, 1.0))};
}

TestFunction constant_phi(const Setup& s, double phi, Admission a = Admission::oracle) {
  return make_test_function(GridFunction::constant(s.d, 1.0 - phi), s.k, s.w, a);
}

TestFunction scaled_psi(const Setup& s, double c, Admission a = Admission::strict) {
  auto th = GridFunction::from(s.d, [&](double x) { return c * s.w(x); });
  return make_test_function(th, s.k, s.w, a);
}

double sup_error(const Trajectory& tr, double (*exact)(double, double), double phi0) {
  double e = 0.0;
  for (std::size_t j = 0; j < tr.time_count(); ++j) {
    const double ref = exact(phi0, tr.time(j));
    for (double v : tr.at(j)) e = std::max(e, std::abs(v - ref));
  }
  return e;
}

double riccati_exact(double phi0, double t) { return oracle::riccati_phi(phi0, 0.3, t); }

}  // namespace

TEST_CASE("test function admission") {
  const auto ref = reference();
  const auto f = scaled_psi(ref, 0.8);
  CHECK(f.c_phi() == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(f.in_class());

  const auto pd = pure_death();
  CHECK_THROWS_AS(scaled_psi(pd, 1.0), ValidationError);
  CHECK_THROWS_AS(scaled_psi(pd, 1.0, Admission::boundary), ValidationError);
  CHECK_NOTHROW(scaled_psi(pd, 1.0, Admission::oracle));

  const auto one = make_test_function(GridFunction::constant(ref.d, 0.0), ref.k, ref.w, Admission::boundary);
  CHECK(one.c_phi() == 0.0);
  CHECK_FALSE(one.in_class());
  CHECK_THROWS_AS(make_test_function(GridFunction::constant(ref.d, 0.0), ref.k, ref.w), ValidationError);
  CHECK_THROWS_AS(make_test_function(GridFunction::constant(ref.d, 1.5), ref.k, ref.w, Admission::oracle),
                  ValidationError);
}

TEST_CASE("g round trip and its bounds") {
  const auto ref = reference();
  const auto f = scaled_psi(ref, 0.6);
  const auto g = f.g(ref.w);
  const auto back = make_test_function_from_g(g, ref.k, ref.w);
  for (std::size_t i = 0; i < ref.d.size(); ++i) {
    CHECK(back.phi()[i] == doctest::Approx(f.phi()[i]).epsilon(1e-14));
    CHECK(f.phi()[i] >= 1.0 - ref.w.grid()[i]);
    CHECK(g[i] <= -std::log(0.5) / 0.5 + 1e-12);
  }
}

TEST_CASE("pure death closed form, both solvers") {
  const auto s = pure_death();
  const auto f = constant_phi(s, 0.6);
  const auto ode = ode_solve(s.k, f, 5.0, 1e-3);
  CHECK(sup_error(ode, oracle::pure_death_phi, 0.6) <= 1e-8);
  CHECK(ode.at(ode.index_of(1.0))[7] == doctest::Approx(oracle::kPureDeathOne).epsilon(1e-12));
  const auto pic = picard_solve(s.k, f, 5.0, 1e-8, 200, 1e-3);
  CHECK(sup_error(pic, oracle::pure_death_phi, 0.6) <= 1e-6);
  CHECK(fixed_point_residual(s.k, pic) <= 2e-8);
}

TEST_CASE("Riccati closed form, both solvers") {
  const auto s = riccati();
  const auto f = constant_phi(s, 0.6);
  const auto ode = ode_solve(s.k, f, 2.0, 1e-3);
  CHECK(sup_error(ode, riccati_exact, 0.6) <= 1e-8);
  CHECK(std::abs(ode.at(ode.index_of(1.0))[50] - oracle::kRiccatiOne) <= 1e-6);
  const auto pic = picard_solve(s.k, f, 2.0, 1e-10, 200, 1e-3);
  CHECK(sup_error(pic, riccati_exact, 0.6) <= 1e-6);
  CHECK(std::abs(pic.at(pic.index_of(1.0))[50] - oracle::kRiccatiOne) <= 1e-6);
  CHECK(std::abs(pic.at(pic.index_of(0.5))[50] - oracle::kRiccatiHalf) <= 1e-6);
  CHECK(std::abs(pic.at(pic.index_of(2.0))[50] - oracle::kRiccatiTwo) <= 1e-6);
}

TEST_CASE("stationary solution and zero horizon") {
  const auto s = reference();
  const auto one = make_test_function(GridFunction::constant(s.d, 0.0), s.k, s.w, Admission::boundary);
  for (auto tr : {ode_solve(s.k, one, 1.0, 1e-2), picard_solve(s.k, one, 1.0, 1e-10, 200, 1e-2)}) {
    for (std::size_t j = 0; j < tr.time_count(); ++j)
      for (double v : tr.at(j)) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
    const auto b = check_bounds(tr, s.k, s.w, 1.05);
    CHECK(b.holds());
  }
  const auto f = scaled_psi(s, 0.8);
  const auto zero = ode_solve(s.k, f, 0.0, 1e-3);
  CHECK(zero.time_count() == 1);
  CHECK(trajectory_distance(zero, picard_solve(s.k, f, 0.0, 1e-10, 200, 1e-3)) == 0.0);
  for (std::size_t i = 0; i < s.d.size(); ++i) CHECK(zero.at(0)[i] == f.phi()[i]);
}

TEST_CASE("time grid") {
  CHECK(step_count(1.0, 1e-3) == 1000);
  CHECK(step_count(0.0, 1e-3) == 0);
  CHECK(step_count(1.0, 0.3) == 4);
  const auto s = pure_death(11);
  const auto tr = ode_solve(s.k, constant_phi(s, 0.6), 1.0, 0.3);
  CHECK(tr.t_end() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(tr.index_of(0.4), DomainError);
}

TEST_CASE("RK4 leaves [0,1] for a huge step") {
  const auto s = riccati(11);
  CHECK_THROWS_AS(ode_solve(s.k, constant_phi(s, 0.0), 10.0, 5.0), StabilityError);
}

TEST_CASE("Picard reports non-convergence") {
  const auto s = reference(51);
  CHECK_THROWS_AS(picard_solve(s.k, scaled_psi(s, 0.8), 1.0, 1e-14, 1, 1e-2), ConvergenceError);
}

TEST_CASE("solvers agree on the reference kernel") {
  const auto s = reference();
  const auto f = scaled_psi(s, 0.8);
  const auto ode = ode_solve(s.k, f, 2.0, 1e-2);
  const auto pic = picard_solve(s.k, f, 2.0, 1e-10, 200, 1e-2);
  CHECK(trajectory_distance(ode, pic) <= 1e-5);
  CHECK(fixed_point_residual(s.k, pic) <= 2e-10);
  for (const auto& w : pic.windows()) {
    CHECK(w.contraction <= 0.5 + 1e-12);
    CHECK(w.iterations <= w.iteration_bound);
  }
}

TEST_CASE("flow composition") {
  const auto s = reference();
  const auto f = scaled_psi(s, 0.8);
  const double tol = 1e-10, dt = 1e-2;
  const auto direct = picard_solve(s.k, f, 3.0, tol, 200, dt);
  const auto ode_direct = ode_solve(s.k, f, 3.0, dt);
  CHECK(trajectory_distance(extend_flow(s.k, direct, 0.0), direct) == 0.0);
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> cut(1, 299);
  for (int trial = 0; trial < 5; ++trial) {
    const double t1 = cut(rng) * dt;
    const auto head = picard_solve(s.k, f, t1, tol, 200, dt);
    const auto joined = extend_flow(s.k, head, 3.0 - t1);
    CHECK(joined.steps() == direct.steps());
    CHECK(trajectory_distance(joined, direct) <= 2.0 * tol);
    const auto ode_joined = extend_flow(s.k, ode_solve(s.k, f, t1, dt), 3.0 - t1);
    CHECK(trajectory_distance(ode_joined, ode_direct) <= 1e-14);
  }
  CHECK_THROWS_AS(extend_flow(s.k, direct, 0.005), DomainError);
}

TEST_CASE("pure death flow composition against the closed form") {
  const auto s = pure_death();
  const auto f = constant_phi(s, 0.6);
  const double tol = 1e-10;
  const auto two = extend_flow(s.k, picard_solve(s.k, f, 1.0, tol, 200, 1e-3), 1.0);
  CHECK(std::abs(two.at(two.steps())[3] - oracle::kPureDeathTwo) <= 2.0 * tol + 1e-9);
  CHECK(trajectory_distance(two, picard_solve(s.k, f, 2.0, tol, 200, 1e-3)) <= 2.0 * tol);
}

TEST_CASE("flow preserves order") {
  const auto s = reference();
  const auto lo = scaled_psi(s, 0.9);
  const auto hi = scaled_psi(s, 0.3);
  const auto a = ode_solve(s.k, lo, 2.0, 1e-2);
  const auto b = ode_solve(s.k, hi, 2.0, 1e-2);
  for (std::size_t j = 0; j < a.time_count(); ++j)
    for (std::size_t i = 0; i < s.d.size(); ++i) CHECK(a.at(j)[i] <= b.at(j)[i] + 1e-15);
}

TEST_CASE("trajectory bounds") {
  const auto s = reference();
  const auto rep = assess_assumptions(s.k, s.w);
  const auto tr = ode_solve(s.k, scaled_psi(s, 0.8), 2.0, 1e-2);
  const auto b = check_bounds(tr, s.k, s.w, rep.m);
  CHECK(b.holds());
  CHECK(b.samples > 0);

  const auto pd = pure_death();
  const auto f = scaled_psi(pd, 0.8, Admission::oracle);
  const auto pt = ode_solve(pd.k, f, 2.0, 1e-3);
  const auto pb = check_bounds(pt, pd.k, pd.w, 1.0);
  CHECK(pb.holds());
  CHECK(std::abs(pb.lower) <= 1e-12);
}

TEST_CASE("subcritical decay") {
  const auto pd = pure_death();
  const auto a = decay_check(ode_solve(pd.k, constant_phi(pd, 0.6), 5.0, 1e-3), 0.0);
  CHECK_FALSE(a.skipped);
  CHECK(a.holds);
  CHECK(a.max_excess <= 1e-9);
  REQUIRE(a.exponent);
  CHECK(*a.exponent == doctest::Approx(-1.0).epsilon(1e-6));

  const auto rc = riccati();
  const auto b = decay_check(ode_solve(rc.k, constant_phi(rc, 0.6), 5.0, 1e-3), 0.6);
  CHECK(b.holds);
  REQUIRE(b.exponent);
  CHECK(*b.exponent <= -0.4);

  const auto c = decay_check(ode_solve(rc.k, constant_phi(rc, 0.6), 1.0, 1e-2), 1.0);
  CHECK(c.skipped);
  CHECK_FALSE(c.reason.empty());
}

TEST_CASE("trajectory csv") {
  const auto s = reference(11);
  const auto tr = ode_solve(s.k, scaled_psi(s, 0.8), 0.1, 0.05);
  std::ostringstream os;
  write_trajectory_csv(os, tr, s.w);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "t,x,phi,theta,g");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 3 * 11);
  CHECK(os.str().find('\r') == std::string::npos);
  std::istringstream again(os.str());
  std::getline(again, line);
  std::getline(again, line);
  CHECK(line.substr(0, 2) == "0,");
}
