#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "branchlab/kernel.hpp"
#include "branchlab/space.hpp"

namespace branchlab {

/// How strictly make_test_function enforces membership of C_psi(X).
enum class Admission {
  strict,    ///< c psi <= theta <= 1 - delta with c > 0
  boundary,  ///< additionally admits c = 0 (e.g. the stationary phi = 1)
  oracle,    ///< any phi in [0, 1]; for closed-form comparison runs only
};

/// phi = 1 - theta on the grid, with its tightest coefficient c_phi.
class TestFunction {
 public:
  const GridFunction& phi() const noexcept { return phi_; }
  const GridFunction& theta() const noexcept { return theta_; }
  /// g = -log(phi) / psi; throws DomainError where phi = 0.
  GridFunction g(const TemperingWeight& w) const;
  double c_phi() const noexcept { return c_phi_; }
  /// True when every condition of C_psi(X) holds.
  bool in_class() const noexcept { return in_class_; }
  Admission admission() const noexcept { return admission_; }

 private:
  friend TestFunction make_test_function(const GridFunction&, const BranchingKernel&,
                                         const TemperingWeight&, Admission);
  TestFunction(GridFunction phi, GridFunction theta) : phi_(std::move(phi)), theta_(std::move(theta)) {}

  GridFunction phi_;
  GridFunction theta_;
  double c_phi_ = 0.0;
  bool in_class_ = false;
  Admission admission_ = Admission::strict;
};

/// Builds a test function from theta = 1 - phi.
TestFunction make_test_function(const GridFunction& theta, const BranchingKernel& k,
                                const TemperingWeight& w, Admission admission = Admission::strict);
/// Builds a test function from g, phi = exp(-g psi).
TestFunction make_test_function_from_g(const GridFunction& g, const BranchingKernel& k,
                                       const TemperingWeight& w,
                                       Admission admission = Admission::strict);

enum class Method { picard, ode };

struct SolverSettings {
  Method method = Method::ode;
  double dt = 1e-3;
  double tol = 1e-10;      // Picard only
  int max_iter = 200;      // Picard only
};

/// Per-window record of a Picard solve.
struct PicardWindow {
  double t_begin = 0.0;
  double length = 0.0;
  double contraction = 0.0;  // n_* (1 - e^{-length})
  int iterations = 0;
  int iteration_bound = 0;
  double first_step = 0.0;   // sup |K phi0 - phi0| over the window
  double final_step = 0.0;
};

/// phi_t on a uniform time grid t_k = k dt, k = 0..steps.
class Trajectory {
 public:
  Trajectory(Domain domain, SolverSettings settings, std::size_t steps, double c_phi,
             bool in_class);

  const Domain& domain() const noexcept { return domain_; }
  const SolverSettings& settings() const noexcept { return settings_; }
  Method method() const noexcept { return settings_.method; }
  double dt() const noexcept { return settings_.dt; }
  std::size_t steps() const noexcept { return steps_; }
  std::size_t time_count() const noexcept { return steps_ + 1; }
  double time(std::size_t k) const noexcept { return static_cast<double>(k) * settings_.dt; }
  double t_end() const noexcept { return time(steps_); }
  double c_phi() const noexcept { return c_phi_; }
  bool in_class() const noexcept { return in_class_; }

  std::span<const double> at(std::size_t k) const;
  std::span<double> at(std::size_t k);
  GridFunction slice(std::size_t k) const;
  /// Index of grid time t; throws DomainError when t is not on the grid.
  std::size_t index_of(double t) const;

  const std::vector<PicardWindow>& windows() const noexcept { return windows_; }
  void add_window(const PicardWindow& w) { windows_.push_back(w); }

  /// Appends `tail` (which must start at this trajectory's final state).
  void append(const Trajectory& tail);

 private:
  Domain domain_;
  SolverSettings settings_;
  std::size_t steps_;
  double c_phi_;
  bool in_class_;
  std::vector<double> data_;
  std::vector<PicardWindow> windows_;
};

/// Number of uniform steps for horizon t with nominal step dt; the step is
/// shrunk so the grid ends exactly at t.
std::size_t step_count(double t, double dt);

/// Fixed point of (K phi)_t = phi0 e^{-t} + int_0^t e^{-(t-s)} Phi phi_s ds.
/// The time integral treats Phi phi_s as piecewise linear on the grid and
/// integrates the exponential exactly. Windows are chained so that each has
/// contraction factor at most 1/2.
Trajectory picard_solve(const BranchingKernel& k, const TestFunction& phi0, double t_end,
                        double tol, int max_iter, double dt);
/// Classical RK4 on d phi/dt = -phi + Phi phi; no clamping.
Trajectory ode_solve(const BranchingKernel& k, const TestFunction& phi0, double t_end, double dt);
/// Continues the solution by `extra` time units with the trajectory's own solver.
Trajectory extend_flow(const BranchingKernel& k, const Trajectory& traj, double extra);

/// sup over the grid of |K phi - phi| for the discrete Picard map.
double fixed_point_residual(const BranchingKernel& k, const Trajectory& traj);
/// sup_k,x |a_k(x) - b_k(x)| over the common time grid.
double trajectory_distance(const Trajectory& a, const Trajectory& b);

struct BoundReport {
  // Each margin is (right side - left side); the inequality holds when it is >= 0.
  double lower = 0.0;      // theta_t - c_phi e^{-t} psi
  double upper = 0.0;      // psi - theta_t
  double theta_rate = 0.0; // (a) 2 u psi - |theta_{t+u} - theta_t|
  double g_rate = 0.0;     // (b) 2 u / delta_star - |g_{t+u} - g_t|
  double phi_rate = 0.0;   // (c) 2 u n_* m psi - |Phi phi_{t+u} - Phi phi_t|
  bool g_defined = true;
  std::size_t samples = 0;

  double worst() const noexcept;
  bool holds(double slack = 1e-9) const noexcept { return worst() >= -slack; }
};

/// Sampling: every tenth grid time, lags u in {dt, 2 dt, 5 dt}.
BoundReport check_bounds(const Trajectory& traj, const BranchingKernel& k,
                         const TemperingWeight& w, double m);

struct DecayReport {
  bool skipped = false;
  std::string reason;
  double rate = 0.0;               // 1 - n_*
  double max_excess = 0.0;         // max_k ||1-phi_k|| - envelope_k
  bool holds = true;
  std::optional<double> exponent;  // least-squares slope of log ||1 - phi_t||
};

DecayReport decay_check(const Trajectory& traj, double n_star);

/// CSV `t,x,phi,theta,g` with 17 significant digits; every `time_stride`-th
/// time and every `node_stride`-th node.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const TemperingWeight& w,
                          std::size_t time_stride = 1, std::size_t node_stride = 1);

}  // namespace branchlab
