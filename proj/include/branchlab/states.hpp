#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "branchlab/configuration.hpp"
#include "branchlab/kernel.hpp"
#include "branchlab/loglaplace.hpp"
#include "branchlab/space.hpp"

namespace branchlab {

/// mu_0: a fixed configuration or a Poisson point process on the window.
class InitialState {
 public:
  enum class Kind { deterministic, poisson };

  static InitialState deterministic(Configuration gamma);
  /// Intensity rho >= 0 on the grid, integrated by the trapezoid rule.
  static InitialState poisson(GridFunction intensity);

  Kind kind() const noexcept { return kind_; }
  const Domain& domain() const noexcept;
  const Configuration& configuration() const;
  const GridFunction& intensity() const;
  /// E |gamma_0|.
  double expected_size() const noexcept;

 private:
  InitialState(Kind kind, std::optional<Configuration> gamma, std::optional<GridFunction> rho)
      : kind_(kind), gamma_(std::move(gamma)), rho_(std::move(rho)) {}

  Kind kind_;
  std::optional<Configuration> gamma_;
  std::optional<GridFunction> rho_;
};

/// mu_0(F^phi); throws DomainError where phi <= 0 is met.
double laplace_functional(const InitialState& mu0, const GridFunction& phi);
double laplace_functional(const InitialState& mu0, const Domain& d, std::span<const double> phi);

/// mu_0(L F^phi) given the grid image Phi phi.
double generator_expectation(const InitialState& mu0, const Domain& d,
                             std::span<const double> phi, std::span<const double> image);

/// mu_{t_k}(F^phi) and mu_{t_k}(L F^phi) along one trajectory.
struct StateSeries {
  std::string id;
  double dt = 0.0;
  std::vector<double> value;
  std::vector<double> generator;

  std::size_t steps() const noexcept { return value.empty() ? 0 : value.size() - 1; }
  double time(std::size_t k) const noexcept { return dt * static_cast<double>(k); }
};

StateSeries evolve(const InitialState& mu0, const Trajectory& traj, const BranchingKernel& k,
                   std::string id = "phi");

/// Registered test functions evolved from one initial state.
struct StateTrajectory {
  std::vector<StateSeries> series;
};

StateTrajectory evolve(const InitialState& mu0, std::span<const Trajectory* const> trajs,
                       const BranchingKernel& k, std::span<const std::string> ids);

/// CSV `t,functional_id,value`, every `time_stride`-th time.
void write_state_csv(std::ostream& os, const StateTrajectory& st, std::size_t time_stride = 1);

/// |mu_t(F) - mu_0(F) - int_0^t mu_s(LF) ds| with Simpson quadrature.
double fpe_residual(const StateSeries& s, std::size_t k);
double fpe_residual(const InitialState& mu0, const Trajectory& traj, const BranchingKernel& k,
                    double t);

struct LaplaceIdentity {
  double lambda = 0.0;
  double transform = 0.0;        // int_0^T e^{-lambda s} mu_s(F) ds
  double generator_route = 0.0;  // (mu_0(F) + int_0^T e^{-lambda s} mu_s(LF) ds) / lambda
  double residual = 0.0;
  double tail_bound = 0.0;
};

/// Both routes to mu_0(F^phi_lambda); their difference is quadrature plus tail.
LaplaceIdentity laplace_identity(const StateSeries& s, double lambda, double tail_tol,
                                 double expected_size);

struct ExtinctionReport {
  bool skipped = false;
  std::string reason;
  double rate = 0.0;          // 1 - n_*
  double final_gap = 0.0;     // 1 - mu_T(F^phi)
  double max_excess = 0.0;    // max_k gap_k - envelope_k
  bool monotone = true;
  bool within_envelope = true;
  std::optional<double> exponent;
};

/// Envelope 1 - mu_t(F^phi) <= E|gamma_0| ||1 - phi_0|| e^{-(1 - n_*) t}.
ExtinctionReport extinction_diagnostic(const StateSeries& s, double n_star, double expected_size,
                                       double initial_gap);

}  // namespace branchlab
