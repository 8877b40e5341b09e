#include "branchlab/configuration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "branchlab/error.hpp"
#include "branchlab/quadrature.hpp"

namespace branchlab {

Configuration::Configuration(const TemperingWeight& w, std::vector<double> positions,
                             std::size_t cap)
    : domain_(w.domain()), positions_(std::move(positions)) {
  if (positions_.size() > cap) {
    throw CapError("configuration has " + std::to_string(positions_.size()) +
                   " particles, above the cap of " + std::to_string(cap));
  }
  for (double& x : positions_) {
    x = domain_.reduce(x);
    psi_sum_ += w(x);
  }
}

Configuration Configuration::merged(const Configuration& other, const TemperingWeight& w,
                                    std::size_t cap) const {
  std::vector<double> all(positions_.begin(), positions_.end());
  all.insert(all.end(), other.positions_.begin(), other.positions_.end());
  return Configuration(w, std::move(all), cap);
}

double tempering_sum(const Configuration& g, const TemperingWeight& w) {
  double s = 0.0;
  for (double x : g.positions()) s += w(x);
  return s;
}

double product_functional(const Configuration& g, const Domain& d, std::span<const double> phi) {
  double p = 1.0;
  for (double x : g.positions()) {
    const double v = interpolate(d, phi, x);
    if (!(v > 0.0)) {
      throw DomainError("phi <= 0 at particle x = " + std::to_string(x));
    }
    p *= v;
  }
  return p;
}

double product_functional(const Configuration& g, const GridFunction& phi) {
  return product_functional(g, phi.domain(), phi.values());
}

double apply_L(const Configuration& g, const Domain& d, std::span<const double> phi,
               std::span<const double> image) {
  const auto pos = g.positions();
  const std::size_t n = pos.size();
  if (n == 0) return 0.0;
  std::vector<double> f(n), jump(n);
  for (std::size_t i = 0; i < n; ++i) {
    f[i] = interpolate(d, phi, pos[i]);
    jump[i] = interpolate(d, image, pos[i]) - f[i];
  }
  // F(gamma \ x_i) as prefix times suffix products, valid when some phi vanish.
  std::vector<double> suffix(n + 1, 1.0);
  for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] * f[i];
  double prefix = 1.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += prefix * suffix[i + 1] * jump[i];
    prefix *= f[i];
  }
  return sum;
}

double apply_L(const Configuration& g, const TestFunction& phi, const BranchingKernel& k) {
  const auto image = branchlab::apply_phi(k, phi.phi());
  return apply_L(g, phi.phi().domain(), phi.phi().values(), image.values());
}

double generator_bound(double delta_star, double c) {
  if (!(c > 0.0)) return std::numeric_limits<double>::infinity();
  return 2.0 / (std::numbers::e * delta_star * c);
}

std::vector<FunctionalSeries> functional_series(std::span<const Configuration> configs,
                                                const Trajectory& traj, const BranchingKernel& k) {
  const Domain& d = traj.domain();
  std::vector<FunctionalSeries> out(configs.size());
  for (auto& s : out) {
    s.dt = traj.dt();
    s.value.resize(traj.time_count());
    s.generator.resize(traj.time_count());
  }
  std::vector<double> image(d.size());
  for (std::size_t j = 0; j < traj.time_count(); ++j) {
    const auto phi = traj.at(j);
    k.apply_phi(phi, image);
    for (std::size_t c = 0; c < configs.size(); ++c) {
      out[c].value[j] = product_functional(configs[c], d, phi);
      out[c].generator[j] = apply_L(configs[c], d, phi, image);
    }
  }
  return out;
}

FunctionalSeries functional_series(const Configuration& g, const Trajectory& traj,
                                   const BranchingKernel& k) {
  return functional_series(std::span<const Configuration>(&g, 1), traj, k).front();
}

double kolmogorov_residual(const FunctionalSeries& s, std::size_t j) {
  if (j > s.steps()) throw DomainError("time index beyond the series");
  if (j == 0) return 0.0;
  const double integral = simpson(std::span<const double>(s.generator).first(j + 1), s.dt);
  return std::abs(s.value[j] - s.value[0] - integral);
}

double kolmogorov_residual(const Configuration& g, const Trajectory& traj,
                           const BranchingKernel& k, double t) {
  const std::size_t j = traj.index_of(t);
  if (j == 0) return 0.0;
  const auto s = functional_series(g, traj, k);
  return kolmogorov_residual(s, j);
}

double resolvent_horizon(double lambda, double tail_tol) {
  if (!(lambda > 1.0)) throw DomainError("resolvent requires lambda > 1");
  if (!(tail_tol > 0.0 && tail_tol < 1.0)) throw DomainError("tail tolerance must lie in (0, 1)");
  return std::max(12.0, std::log(1.0 / tail_tol) / (lambda - 1.0));
}

namespace {

struct Discounted {
  std::size_t steps;
  double horizon;
  double required;
};

Discounted discount_grid(const FunctionalSeries& s, double lambda, double tail_tol) {
  const double required = resolvent_horizon(lambda, tail_tol);
  const auto steps = static_cast<std::size_t>(std::ceil(required / s.dt - 1e-9));
  if (steps > s.steps()) {
    throw HorizonError("trajectory ends at t = " + std::to_string(s.dt * s.steps()) +
                           " but the resolvent needs T_max = " + std::to_string(required),
                       required);
  }
  return {steps, s.dt * steps, required};
}

double discounted_integral(std::span<const double> f, double lambda, double dt, std::size_t steps) {
  std::vector<double> g(steps + 1);
  for (std::size_t j = 0; j <= steps; ++j) g[j] = std::exp(-lambda * dt * j) * f[j];
  return simpson(g, dt);
}

}  // namespace

ResolventValue resolvent(const FunctionalSeries& s, double lambda, double tail_tol) {
  const auto grid = discount_grid(s, lambda, tail_tol);
  ResolventValue r;
  r.lambda = lambda;
  r.horizon = grid.horizon;
  r.required_horizon = grid.required;
  r.value = discounted_integral(s.value, lambda, s.dt, grid.steps);
  r.tail_bound = std::exp(-lambda * grid.horizon) / lambda;
  return r;
}

ResolventIdentity resolvent_identity(const FunctionalSeries& s, std::size_t particles,
                                     double lambda, double tail_tol, double delta_star,
                                     double c_phi) {
  ResolventIdentity id;
  id.value = resolvent(s, lambda, tail_tol);
  const auto grid = discount_grid(s, lambda, tail_tol);
  const double T = grid.horizon;
  id.generator_integral = discounted_integral(s.generator, lambda, s.dt, grid.steps);
  const double f0 = s.value.front();
  id.residual = std::abs(id.generator_integral - (lambda * id.value.value - f0));

  const double gen = generator_bound(delta_star, c_phi);
  double lf_tail = static_cast<double>(particles) * std::exp(-lambda * T) / lambda;
  if (std::isfinite(gen)) {
    lf_tail = std::min(lf_tail, gen * std::exp(-(lambda - 1.0) * T) / (lambda - 1.0));
  }
  id.tail_bound = lambda * id.value.tail_bound + lf_tail;

  id.convergence_gap = std::max(std::abs(lambda * id.value.value - f0),
                                std::abs(lambda * (id.value.value + id.value.tail_bound) - f0));
  id.convergence_bound = gen / (lambda - 1.0);
  id.converges = id.convergence_gap <= id.convergence_bound + 1e-9;
  return id;
}

double FunctionalBoundReport::worst() const noexcept {
  return std::min({generator, lipschitz, generator_lipschitz, exponential});
}

double generator_lipschitz_constant(double n_star, double m, double delta_star, double c) {
  const double a = std::numbers::e * delta_star * c;
  return 2.0 * (n_star * m + 1.0) / a + 16.0 / (a * a);
}

FunctionalBoundReport check_functional_bounds(const FunctionalSeries& s, double psi_sum,
                                              double c_phi, double delta_star, double n_star,
                                              double m) {
  FunctionalBoundReport rep;
  const double inf = std::numeric_limits<double>::infinity();
  rep.generator = rep.lipschitz = rep.generator_lipschitz = rep.exponential = inf;
  if (!(c_phi > 0.0)) {
    rep.applicable = false;
    return rep;
  }
  const double gen = generator_bound(delta_star, c_phi);
  const double lip = generator_lipschitz_constant(n_star, m, delta_star, c_phi);
  const std::size_t count = s.value.size();
  for (std::size_t j = 0; j < count; ++j) {
    const double t = s.dt * j;
    rep.generator = std::min(rep.generator, gen * std::exp(t) - std::abs(s.generator[j]));
    rep.exponential =
        std::min(rep.exponential, 1.0 - s.value[j] * std::exp(c_phi * std::exp(-t) * psi_sum));
  }
  constexpr std::size_t lags[] = {1, 2, 5};
  for (std::size_t j = 0; j < count; j += 10) {
    const double t = s.dt * j;
    for (std::size_t lag : lags) {
      if (j + lag >= count) continue;
      const double u = s.dt * lag;
      rep.lipschitz = std::min(rep.lipschitz, gen * u * std::exp(t + u) -
                                                  std::abs(s.value[j + lag] - s.value[j]));
      rep.generator_lipschitz =
          std::min(rep.generator_lipschitz,
                   lip * u * std::exp(2.0 * (t + u)) - std::abs(s.generator[j + lag] - s.generator[j]));
      ++rep.samples;
    }
  }
  return rep;
}

}  // namespace branchlab
