#include "branchlab/states.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "branchlab/error.hpp"
#include "branchlab/quadrature.hpp"

namespace branchlab {

InitialState InitialState::deterministic(Configuration gamma) {
  return InitialState(Kind::deterministic, std::move(gamma), std::nullopt);
}

InitialState InitialState::poisson(GridFunction intensity) {
  for (std::size_t i = 0; i < intensity.size(); ++i) {
    if (intensity[i] < 0.0) {
      throw ValidationError("Poisson intensity is negative at node " + std::to_string(i));
    }
  }
  return InitialState(Kind::poisson, std::nullopt, std::move(intensity));
}

const Domain& InitialState::domain() const noexcept {
  return kind_ == Kind::deterministic ? gamma_->domain() : rho_->domain();
}

const Configuration& InitialState::configuration() const {
  if (kind_ != Kind::deterministic) throw DomainError("initial state is not deterministic");
  return *gamma_;
}

const GridFunction& InitialState::intensity() const {
  if (kind_ != Kind::poisson) throw DomainError("initial state is not a Poisson process");
  return *rho_;
}

double InitialState::expected_size() const noexcept {
  return kind_ == Kind::deterministic ? static_cast<double>(gamma_->size()) : integrate(*rho_);
}

namespace {

void require_positive(const Domain& d, std::span<const double> phi) {
  const std::size_t n = d.is_torus() ? d.size() - 1 : d.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(phi[i] > 0.0)) {
      throw DomainError("Laplace functional needs phi > 0; phi = " + std::to_string(phi[i]) +
                        " at node " + std::to_string(i));
    }
  }
}

double poisson_exponent(const GridFunction& rho, std::span<const double> f) {
  const Domain& d = rho.domain();
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) s += d.weight(i) * f[i] * rho[i];
  return s;
}

}  // namespace

double laplace_functional(const InitialState& mu0, const Domain& d, std::span<const double> phi) {
  if (!(d == mu0.domain())) throw DomainError("state and function live on different domains");
  if (mu0.kind() == InitialState::Kind::deterministic) {
    return product_functional(mu0.configuration(), d, phi);
  }
  require_positive(d, phi);
  std::vector<double> theta(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) theta[i] = 1.0 - phi[i];
  return std::exp(-poisson_exponent(mu0.intensity(), theta));
}

double laplace_functional(const InitialState& mu0, const GridFunction& phi) {
  return laplace_functional(mu0, phi.domain(), phi.values());
}

double generator_expectation(const InitialState& mu0, const Domain& d,
                             std::span<const double> phi, std::span<const double> image) {
  if (mu0.kind() == InitialState::Kind::deterministic) {
    return apply_L(mu0.configuration(), d, phi, image);
  }
  std::vector<double> jump(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) jump[i] = image[i] - phi[i];
  return poisson_exponent(mu0.intensity(), jump) * laplace_functional(mu0, d, phi);
}

StateSeries evolve(const InitialState& mu0, const Trajectory& traj, const BranchingKernel& k,
                   std::string id) {
  const Domain& d = traj.domain();
  StateSeries s;
  s.id = std::move(id);
  s.dt = traj.dt();
  s.value.resize(traj.time_count());
  s.generator.resize(traj.time_count());
  std::vector<double> image(d.size());
  for (std::size_t j = 0; j < traj.time_count(); ++j) {
    const auto phi = traj.at(j);
    k.apply_phi(phi, image);
    s.value[j] = laplace_functional(mu0, d, phi);
    s.generator[j] = generator_expectation(mu0, d, phi, image);
  }
  return s;
}

StateTrajectory evolve(const InitialState& mu0, std::span<const Trajectory* const> trajs,
                       const BranchingKernel& k, std::span<const std::string> ids) {
  if (trajs.size() != ids.size()) throw DomainError("one id per registered trajectory required");
  StateTrajectory st;
  for (std::size_t i = 0; i < trajs.size(); ++i) st.series.push_back(evolve(mu0, *trajs[i], k, ids[i]));
  return st;
}

void write_state_csv(std::ostream& os, const StateTrajectory& st, std::size_t time_stride) {
  time_stride = std::max<std::size_t>(time_stride, 1);
  char buf[128];
  os << "t,functional_id,value\n";
  for (const auto& s : st.series) {
    for (std::size_t j = 0; j < s.value.size(); ++j) {
      if (j % time_stride != 0 && j != s.steps()) continue;
      std::snprintf(buf, sizeof buf, "%.17g,", s.time(j));
      os << buf << s.id;
      std::snprintf(buf, sizeof buf, ",%.17g\n", s.value[j]);
      os << buf;
    }
  }
}

double fpe_residual(const StateSeries& s, std::size_t k) {
  if (k > s.steps()) throw DomainError("time index beyond the state series");
  if (k == 0) return 0.0;
  const double integral = simpson(std::span<const double>(s.generator).first(k + 1), s.dt);
  return std::abs(s.value[k] - s.value[0] - integral);
}

double fpe_residual(const InitialState& mu0, const Trajectory& traj, const BranchingKernel& k,
                    double t) {
  const std::size_t j = traj.index_of(t);
  if (j == 0) return 0.0;
  return fpe_residual(evolve(mu0, traj, k), j);
}

LaplaceIdentity laplace_identity(const StateSeries& s, double lambda, double tail_tol,
                                 double expected_size) {
  const double required = resolvent_horizon(lambda, tail_tol);
  const auto steps = static_cast<std::size_t>(std::ceil(required / s.dt - 1e-9));
  if (steps > s.steps()) {
    throw HorizonError("state series ends at t = " + std::to_string(s.time(s.steps())) +
                           " but the transform needs T_max = " + std::to_string(required),
                       required);
  }
  std::vector<double> a(steps + 1), b(steps + 1);
  for (std::size_t j = 0; j <= steps; ++j) {
    const double w = std::exp(-lambda * s.time(j));
    a[j] = w * s.value[j];
    b[j] = w * s.generator[j];
  }
  LaplaceIdentity id;
  id.lambda = lambda;
  id.transform = simpson(a, s.dt);
  id.generator_route = (s.value.front() + simpson(b, s.dt)) / lambda;
  id.residual = std::abs(id.transform - id.generator_route);
  const double T = s.time(steps);
  id.tail_bound = std::exp(-lambda * T) / lambda * (1.0 + expected_size / lambda);
  return id;
}

ExtinctionReport extinction_diagnostic(const StateSeries& s, double n_star, double expected_size,
                                       double initial_gap) {
  ExtinctionReport rep;
  if (!(n_star < 1.0)) {
    rep.skipped = true;
    rep.reason = "n_* >= 1: extinction is not guaranteed";
    return rep;
  }
  rep.rate = 1.0 - n_star;
  rep.final_gap = 1.0 - s.value.back();
  rep.max_excess = -std::numeric_limits<double>::infinity();
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  std::size_t used = 0;
  for (std::size_t j = 0; j < s.value.size(); ++j) {
    const double t = s.time(j);
    const double gap = 1.0 - s.value[j];
    const double envelope = expected_size * initial_gap * std::exp(-rep.rate * t);
    rep.max_excess = std::max(rep.max_excess, gap - envelope);
    if (j > 0 && s.value[j] < s.value[j - 1] - 1e-12) rep.monotone = false;
    if (gap > 0.0) {
      const double y = std::log(gap);
      st += t;
      sy += y;
      stt += t * t;
      sty += t * y;
      ++used;
    }
  }
  rep.within_envelope = rep.max_excess <= 1e-9;
  if (used >= 2) {
    const double n = static_cast<double>(used);
    const double denom = n * stt - st * st;
    if (denom > 0.0) rep.exponent = (n * sty - st * sy) / denom;
  }
  return rep;
}

}  // namespace branchlab
