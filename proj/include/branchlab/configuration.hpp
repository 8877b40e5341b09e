#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "branchlab/kernel.hpp"
#include "branchlab/loglaplace.hpp"
#include "branchlab/space.hpp"

namespace branchlab {

inline constexpr std::size_t kDefaultParticleCap = 10000;

/// Finite multiset of particle positions with its cached Psi(gamma).
class Configuration {
 public:
  /// Positions are reduced onto the window; throws CapError above `cap`.
  Configuration(const TemperingWeight& w, std::vector<double> positions,
                std::size_t cap = kDefaultParticleCap);
  static Configuration empty(const TemperingWeight& w) { return Configuration(w, {}); }

  std::span<const double> positions() const noexcept { return positions_; }
  std::size_t size() const noexcept { return positions_.size(); }
  bool is_empty() const noexcept { return positions_.empty(); }
  double psi_sum() const noexcept { return psi_sum_; }
  const Domain& domain() const noexcept { return domain_; }

  /// Disjoint union.
  Configuration merged(const Configuration& other, const TemperingWeight& w,
                       std::size_t cap = kDefaultParticleCap) const;

 private:
  Domain domain_;
  std::vector<double> positions_;
  double psi_sum_ = 0.0;
};

double tempering_sum(const Configuration& g, const TemperingWeight& w);

/// prod_{x in gamma} phi(x), phi interpolated; throws DomainError where phi <= 0.
double product_functional(const Configuration& g, const GridFunction& phi);
double product_functional(const Configuration& g, const Domain& d, std::span<const double> phi);

/// L F^phi(gamma) = sum_x F^phi(gamma \ x) ((Phi phi)(x) - phi(x)), with the
/// image Phi phi supplied on the grid.
double apply_L(const Configuration& g, const Domain& d, std::span<const double> phi,
               std::span<const double> image);
double apply_L(const Configuration& g, const TestFunction& phi, const BranchingKernel& k);

/// 2 / (e delta_star c); infinite when c = 0.
double generator_bound(double delta_star, double c);

/// F^{phi_t}(gamma) and L F^{phi_t}(gamma) along a trajectory.
struct FunctionalSeries {
  double dt = 0.0;
  std::vector<double> value;
  std::vector<double> generator;

  std::size_t steps() const noexcept { return value.empty() ? 0 : value.size() - 1; }
};

std::vector<FunctionalSeries> functional_series(std::span<const Configuration> configs,
                                                const Trajectory& traj, const BranchingKernel& k);
FunctionalSeries functional_series(const Configuration& g, const Trajectory& traj,
                                   const BranchingKernel& k);

/// |F(t_j) - F(0) - int_0^{t_j} LF ds| with Simpson quadrature.
double kolmogorov_residual(const FunctionalSeries& s, std::size_t j);
double kolmogorov_residual(const Configuration& g, const Trajectory& traj,
                           const BranchingKernel& k, double t);

/// T = max(12, log(1/tail_tol)/(lambda - 1)).
double resolvent_horizon(double lambda, double tail_tol);

struct ResolventValue {
  double lambda = 0.0;
  double value = 0.0;      // Simpson part over [0, horizon]
  double horizon = 0.0;    // grid time actually used, >= the required horizon
  double required_horizon = 0.0;
  double tail_bound = 0.0; // e^{-lambda horizon} / lambda
};

/// int_0^T e^{-lambda t} F^{phi_t}(gamma) dt; HorizonError when the series is too short.
ResolventValue resolvent(const FunctionalSeries& s, double lambda, double tail_tol);

struct ResolventIdentity {
  ResolventValue value;
  double generator_integral = 0.0;  // int_0^T e^{-lambda t} LF dt
  double residual = 0.0;            // |generator_integral - (lambda value - F(0))|
  double tail_bound = 0.0;          // certified size of the neglected tails
  double convergence_gap = 0.0;     // |lambda (value + tail) - F(0)|, tail taken as worst case
  double convergence_bound = 0.0;   // 2 / ((lambda - 1) e delta_star c)
  bool converges = true;
};

/// `gen_rate` bounds |LF^{phi_t}| by gen_rate e^{t}; infinite when unavailable.
ResolventIdentity resolvent_identity(const FunctionalSeries& s, std::size_t particles,
                                     double lambda, double tail_tol, double delta_star,
                                     double c_phi);

struct FunctionalBoundReport {
  // Each margin is (bound - observed); negative means violated.
  double generator = 0.0;             // 2 e^t/(e delta c) - |LF_t|
  double lipschitz = 0.0;             // 2 u e^{t+u}/(e delta c) - |F_{t+u} - F_t|
  double generator_lipschitz = 0.0;   // C u e^{2(t+u)} - |LF_{t+u} - LF_t|
  double exponential = 0.0;           // 1 - F_t exp(c e^{-t} Psi)
  std::size_t samples = 0;
  bool applicable = true;             // false when c_phi = 0

  double worst() const noexcept;
  bool holds(double slack = 1e-9) const noexcept { return !applicable || worst() >= -slack; }
};

/// 2 (n_* m + 1)/(e delta c) + 16/(e delta c)^2.
double generator_lipschitz_constant(double n_star, double m, double delta_star, double c);

/// Samples every tenth grid time with lags {dt, 2dt, 5dt}.
FunctionalBoundReport check_functional_bounds(const FunctionalSeries& s, double psi_sum,
                                              double c_phi, double delta_star, double n_star,
                                              double m);

}  // namespace branchlab
