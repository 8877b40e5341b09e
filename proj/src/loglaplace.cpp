#include "branchlab/loglaplace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "branchlab/error.hpp"

namespace branchlab {

namespace {

constexpr double kUpperTolerance = 1e-12;
// Windows longer than this are split further; it bounds Picard memory only.
constexpr std::size_t kMaxWindowSteps = 2048;

// Weights of int_0^dt e^{-(dt-s)} l(s) ds for l linear between two nodes:
// decay * left_state + left * Phi_k + right * Phi_{k+1}.
struct StepWeights {
  double decay;
  double left;
  double right;
};

StepWeights exponential_trapezoid(double dt) {
  const double one_minus_decay = -std::expm1(-dt);
  double right;
  if (dt < 0.5) {
    // (dt - (1 - e^{-dt})) / dt = sum_{n>=2} (-1)^n dt^{n-1} / n!
    double term = dt / 2.0;
    right = 0.0;
    for (int n = 2; n < 40 && std::abs(term) > 1e-18 * std::abs(right + 1e-300); ++n) {
      right += term;
      term *= -dt / static_cast<double>(n + 1);
    }
  } else {
    right = 1.0 - one_minus_decay / dt;
  }
  return {std::exp(-dt), one_minus_decay - right, right};
}

std::string node_label(const Domain& d, std::size_t i) {
  std::ostringstream os;
  os << "node " << i << " (x = " << d.node(i) << ")";
  return os.str();
}

std::size_t effective_nodes(const Domain& d) { return d.is_torus() ? d.size() - 1 : d.size(); }

double sup_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
  return s;
}

}  // namespace

// ---------------------------------------------------------------- TestFunction

GridFunction TestFunction::g(const TemperingWeight& w) const {
  const Domain& d = theta_.domain();
  std::vector<double> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(phi_[i] > 0.0)) throw DomainError("g is undefined where phi = 0, " + node_label(d, i));
    out[i] = -std::log1p(-theta_[i]) / w.grid()[i];
  }
  return GridFunction(d, std::move(out));
}

TestFunction make_test_function(const GridFunction& theta, const BranchingKernel& k,
                                const TemperingWeight& w, Admission admission) {
  const Domain& d = theta.domain();
  if (!(d == k.domain()) || !(d == w.domain())) {
    throw DomainError("test function, kernel and weight must share one domain");
  }
  std::vector<double> phi(d.size());
  double c = std::numeric_limits<double>::infinity();
  bool positive = true;
  bool below_death = true;
  std::size_t first_bad = d.size();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double th = theta[i];
    if (th < 0.0 || th > 1.0) {
      throw ValidationError("theta outside [0, 1] at " + node_label(d, i));
    }
    phi[i] = 1.0 - th;
    c = std::min(c, th / w.grid()[i]);
    if (!(th > 0.0)) positive = false;
    if (th > 1.0 - k.law().death_probability(i) + kUpperTolerance) {
      if (below_death) first_bad = i;
      below_death = false;
    }
  }
  const bool member = positive && below_death && c > 0.0;
  if (admission != Admission::oracle) {
    if (!below_death) {
      throw ValidationError("theta exceeds 1 - delta(x) at " + node_label(d, first_bad));
    }
    if (admission == Admission::strict && !member) {
      throw ValidationError("theta must be positive with c_phi > 0 (use boundary admission for phi = 1)");
    }
  }
  TestFunction f(GridFunction(d, std::move(phi)), theta);
  f.c_phi_ = c;
  f.in_class_ = member;
  f.admission_ = admission;
  return f;
}

TestFunction make_test_function_from_g(const GridFunction& g, const BranchingKernel& k,
                                       const TemperingWeight& w, Admission admission) {
  const Domain& d = g.domain();
  if (!(d == w.domain())) throw DomainError("g and weight must share one domain");
  std::vector<double> theta(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (g[i] < 0.0) throw ValidationError("g must be non-negative, " + node_label(d, i));
    theta[i] = -std::expm1(-g[i] * w.grid()[i]);
  }
  return make_test_function(GridFunction(d, std::move(theta)), k, w, admission);
}

// ------------------------------------------------------------------ Trajectory

Trajectory::Trajectory(Domain domain, SolverSettings settings, std::size_t steps, double c_phi,
                       bool in_class)
    : domain_(domain),
      settings_(settings),
      steps_(steps),
      c_phi_(c_phi),
      in_class_(in_class),
      data_((steps + 1) * domain.size(), 0.0) {}

std::span<const double> Trajectory::at(std::size_t k) const {
  if (k > steps_) throw DomainError("time index out of range");
  return {data_.data() + k * domain_.size(), domain_.size()};
}

std::span<double> Trajectory::at(std::size_t k) {
  if (k > steps_) throw DomainError("time index out of range");
  return {data_.data() + k * domain_.size(), domain_.size()};
}

GridFunction Trajectory::slice(std::size_t k) const {
  auto s = at(k);
  return GridFunction(domain_, std::vector<double>(s.begin(), s.end()));
}

std::size_t Trajectory::index_of(double t) const {
  if (!(t >= 0.0)) throw DomainError("time must be non-negative");
  const double s = t / settings_.dt;
  const double k = std::round(s);
  if (std::abs(s - k) > 1e-6 || k > static_cast<double>(steps_)) {
    throw DomainError("time " + std::to_string(t) + " is not on the trajectory grid");
  }
  return static_cast<std::size_t>(k);
}

void Trajectory::append(const Trajectory& tail) {
  if (!(tail.domain_ == domain_) || std::abs(tail.dt() - dt()) > 1e-15 * dt()) {
    throw DomainError("appended trajectory uses a different grid");
  }
  const double offset = t_end();
  data_.insert(data_.end(), tail.data_.begin() + static_cast<std::ptrdiff_t>(domain_.size()),
               tail.data_.end());
  for (auto w : tail.windows_) {
    w.t_begin += offset;
    windows_.push_back(w);
  }
  steps_ += tail.steps_;
}

std::size_t step_count(double t, double dt) {
  if (!std::isfinite(t) || t < 0.0) throw DomainError("horizon must be finite and non-negative");
  if (!std::isfinite(dt) || !(dt > 0.0)) throw DomainError("time step must be positive");
  if (t == 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(t / dt - 1e-9));
}

// --------------------------------------------------------------------- solvers

namespace {

Trajectory picard_from(const BranchingKernel& k, std::span<const double> start,
                       std::size_t steps, const SolverSettings& s, double c_phi, bool member) {
  const Domain& d = k.domain();
  const std::size_t n = d.size();
  if (!(s.tol > 0.0)) throw DomainError("Picard tolerance must be positive");
  if (s.max_iter < 1) throw DomainError("Picard needs at least one iteration");
  Trajectory traj(d, s, steps, c_phi, member);
  std::copy(start.begin(), start.end(), traj.at(0).begin());
  if (steps == 0) return traj;

  const double n_star = k.n_star();
  std::size_t window_steps = steps;
  if (n_star > 0.5) {
    const double t_window = -std::log1p(-0.5 / n_star);
    window_steps = static_cast<std::size_t>(std::floor(t_window / s.dt + 1e-9));
    if (window_steps == 0) {
      throw DomainError("time step exceeds the Picard contraction window " +
                        std::to_string(t_window));
    }
  }
  window_steps = std::min({window_steps, steps, kMaxWindowSteps});

  const StepWeights wts = exponential_trapezoid(s.dt);
  std::vector<double> iterate, next, image;
  for (std::size_t begin = 0; begin < steps; begin += window_steps) {
    const std::size_t len = std::min(window_steps, steps - begin);
    const std::size_t count = (len + 1) * n;
    iterate.assign(count, 0.0);
    next.assign(count, 0.0);
    image.assign(count, 0.0);
    auto first = traj.at(begin);
    for (std::size_t j = 0; j <= len; ++j) std::copy(first.begin(), first.end(), iterate.begin() + j * n);

    PicardWindow rec;
    rec.t_begin = traj.time(begin);
    rec.length = static_cast<double>(len) * s.dt;
    rec.contraction = n_star * -std::expm1(-rec.length);
    bool converged = false;
    double step = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= s.max_iter; ++it) {
      for (std::size_t j = 0; j <= len; ++j) {
        k.apply_phi(std::span<const double>(iterate.data() + j * n, n),
                    std::span<double>(image.data() + j * n, n));
      }
      std::copy(first.begin(), first.end(), next.begin());
      for (std::size_t j = 0; j < len; ++j) {
        const double* prev = next.data() + j * n;
        const double* pl = image.data() + j * n;
        const double* pr = pl + n;
        double* out = next.data() + (j + 1) * n;
        for (std::size_t i = 0; i < n; ++i) {
          out[i] = wts.decay * prev[i] + wts.left * pl[i] + wts.right * pr[i];
        }
      }
      step = sup_distance(next, iterate);
      iterate.swap(next);
      if (it == 1) rec.first_step = step;
      rec.iterations = it;
      if (step < s.tol) {
        converged = true;
        break;
      }
    }
    rec.final_step = step;
    if (rec.first_step < s.tol) {
      rec.iteration_bound = 1;
    } else if (rec.contraction <= 0.0) {
      rec.iteration_bound = 2;
    } else {
      rec.iteration_bound =
          static_cast<int>(std::ceil(std::log(s.tol / rec.first_step) / std::log(rec.contraction))) + 1;
    }
    if (!converged) {
      throw ConvergenceError("Picard iteration did not reach tol " + std::to_string(s.tol) +
                                 " within " + std::to_string(s.max_iter) +
                                 " iterations; final step " + std::to_string(step),
                             step);
    }
    for (std::size_t j = 1; j <= len; ++j) {
      std::copy(iterate.begin() + j * n, iterate.begin() + (j + 1) * n,
                traj.at(begin + j).begin());
    }
    traj.add_window(rec);
  }
  return traj;
}

void require_unit_interval(std::span<const double> v, double t) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0.0 && v[i] <= 1.0)) {
      throw StabilityError("RK4 stage left [0, 1] near t = " + std::to_string(t) + " at node " +
                           std::to_string(i) + " (value " + std::to_string(v[i]) +
                           "); use a smaller dt");
    }
  }
}

Trajectory ode_from(const BranchingKernel& k, std::span<const double> start, std::size_t steps,
                    const SolverSettings& s, double c_phi, bool member) {
  const Domain& d = k.domain();
  const std::size_t n = d.size();
  Trajectory traj(d, s, steps, c_phi, member);
  std::copy(start.begin(), start.end(), traj.at(0).begin());
  std::vector<double> stage(n), image(n), k1(n), k2(n), k3(n), k4(n);
  const double dt = s.dt;
  auto rhs = [&](std::span<const double> phi, std::vector<double>& out, double t) {
    require_unit_interval(phi, t);
    k.apply_phi(phi, image);
    for (std::size_t i = 0; i < n; ++i) out[i] = image[i] - phi[i];
  };
  for (std::size_t j = 0; j < steps; ++j) {
    const auto y = traj.at(j);
    const double t = traj.time(j);
    rhs(y, k1, t);
    for (std::size_t i = 0; i < n; ++i) stage[i] = y[i] + 0.5 * dt * k1[i];
    rhs(stage, k2, t + 0.5 * dt);
    for (std::size_t i = 0; i < n; ++i) stage[i] = y[i] + 0.5 * dt * k2[i];
    rhs(stage, k3, t + 0.5 * dt);
    for (std::size_t i = 0; i < n; ++i) stage[i] = y[i] + dt * k3[i];
    rhs(stage, k4, t + dt);
    auto out = traj.at(j + 1);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    d.wrap(out);
    require_unit_interval(out, t + dt);
  }
  return traj;
}

SolverSettings settings_for(Method method, double t, double dt, double tol, int max_iter) {
  const std::size_t steps = step_count(t, dt);
  SolverSettings s;
  s.method = method;
  s.dt = steps == 0 ? dt : t / static_cast<double>(steps);
  s.tol = tol;
  s.max_iter = max_iter;
  return s;
}

void require_same_domain(const BranchingKernel& k, const TestFunction& phi0) {
  if (!(k.domain() == phi0.phi().domain())) {
    throw DomainError("kernel and initial function live on different domains");
  }
}

}  // namespace

Trajectory picard_solve(const BranchingKernel& k, const TestFunction& phi0, double t_end,
                        double tol, int max_iter, double dt) {
  require_same_domain(k, phi0);
  const auto s = settings_for(Method::picard, t_end, dt, tol, max_iter);
  return picard_from(k, phi0.phi().values(), step_count(t_end, dt), s, phi0.c_phi(),
                     phi0.in_class());
}

Trajectory ode_solve(const BranchingKernel& k, const TestFunction& phi0, double t_end, double dt) {
  require_same_domain(k, phi0);
  const auto s = settings_for(Method::ode, t_end, dt, 0.0, 0);
  return ode_from(k, phi0.phi().values(), step_count(t_end, dt), s, phi0.c_phi(),
                  phi0.in_class());
}

Trajectory extend_flow(const BranchingKernel& k, const Trajectory& traj, double extra) {
  if (!(k.domain() == traj.domain())) throw DomainError("kernel and trajectory domains differ");
  if (!std::isfinite(extra) || extra < 0.0) throw DomainError("extension must be non-negative");
  const double ratio = extra / traj.dt();
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-6) {
    throw DomainError("extension is not a whole number of time steps");
  }
  const auto steps = static_cast<std::size_t>(rounded);
  Trajectory out = traj;
  if (steps == 0) return out;
  const auto& s = traj.settings();
  const auto start = traj.at(traj.steps());
  Trajectory tail = s.method == Method::picard
                        ? picard_from(k, start, steps, s, traj.c_phi(), traj.in_class())
                        : ode_from(k, start, steps, s, traj.c_phi(), traj.in_class());
  out.append(tail);
  return out;
}

double fixed_point_residual(const BranchingKernel& k, const Trajectory& traj) {
  const std::size_t n = traj.domain().size();
  const StepWeights wts = exponential_trapezoid(traj.dt());
  std::vector<double> mapped(traj.at(0).begin(), traj.at(0).end());
  std::vector<double> left(n), right(n), step(n);
  k.apply_phi(traj.at(0), left);
  double worst = 0.0;
  for (std::size_t j = 0; j < traj.steps(); ++j) {
    k.apply_phi(traj.at(j + 1), right);
    for (std::size_t i = 0; i < n; ++i) {
      mapped[i] = wts.decay * mapped[i] + wts.left * left[i] + wts.right * right[i];
    }
    worst = std::max(worst, sup_distance(mapped, traj.at(j + 1)));
    left.swap(right);
  }
  return worst;
}

double trajectory_distance(const Trajectory& a, const Trajectory& b) {
  if (!(a.domain() == b.domain()) || a.steps() != b.steps() ||
      std::abs(a.dt() - b.dt()) > 1e-12 * a.dt()) {
    throw DomainError("trajectories live on different grids");
  }
  double worst = 0.0;
  for (std::size_t j = 0; j < a.time_count(); ++j) worst = std::max(worst, sup_distance(a.at(j), b.at(j)));
  return worst;
}

// ---------------------------------------------------------------------- checks

double BoundReport::worst() const noexcept {
  double w = std::min({lower, upper, theta_rate, phi_rate});
  if (g_defined) w = std::min(w, g_rate);
  return w;
}

BoundReport check_bounds(const Trajectory& traj, const BranchingKernel& k,
                         const TemperingWeight& w, double m) {
  const Domain& d = traj.domain();
  if (!(d == w.domain()) || !(d == k.domain())) throw DomainError("domains differ");
  const std::size_t n = effective_nodes(d);
  const auto psi = w.grid().values();
  const double c = traj.c_phi();
  const double n_star = k.n_star();
  const double delta_star = w.delta_star();

  BoundReport rep;
  rep.lower = rep.upper = std::numeric_limits<double>::infinity();
  rep.theta_rate = rep.g_rate = rep.phi_rate = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < traj.time_count(); ++j) {
    const auto phi = traj.at(j);
    const double floor = c * std::exp(-traj.time(j));
    for (std::size_t i = 0; i < n; ++i) {
      const double theta = 1.0 - phi[i];
      rep.lower = std::min(rep.lower, theta - floor * psi[i]);
      rep.upper = std::min(rep.upper, psi[i] - theta);
      if (!(phi[i] > 0.0)) rep.g_defined = false;
    }
  }

  std::map<std::size_t, std::vector<double>> images;
  auto image_of = [&](std::size_t j) -> const std::vector<double>& {
    auto it = images.find(j);
    if (it == images.end()) {
      std::vector<double> out(d.size());
      k.apply_phi(traj.at(j), out);
      it = images.emplace(j, std::move(out)).first;
    }
    return it->second;
  };
  auto g_at = [&](double phi, std::size_t i) { return -std::log(phi) / psi[i]; };

  constexpr std::size_t lags[] = {1, 2, 5};
  for (std::size_t j = 0; j < traj.time_count(); j += 10) {
    for (std::size_t lag : lags) {
      if (j + lag > traj.steps()) continue;
      const double u = static_cast<double>(lag) * traj.dt();
      const auto a = traj.at(j);
      const auto b = traj.at(j + lag);
      const auto& pa = image_of(j);
      const auto& pb = image_of(j + lag);
      for (std::size_t i = 0; i < n; ++i) {
        rep.theta_rate = std::min(rep.theta_rate, 2.0 * u * psi[i] - std::abs(b[i] - a[i]));
        rep.phi_rate = std::min(rep.phi_rate, 2.0 * u * n_star * m * psi[i] - std::abs(pb[i] - pa[i]));
        if (rep.g_defined) {
          rep.g_rate = std::min(rep.g_rate, 2.0 * u / delta_star - std::abs(g_at(b[i], i) - g_at(a[i], i)));
        }
      }
      ++rep.samples;
    }
    images.erase(images.begin(), images.lower_bound(j + 1));
  }
  if (rep.samples == 0) rep.theta_rate = rep.g_rate = rep.phi_rate = 0.0;
  return rep;
}

DecayReport decay_check(const Trajectory& traj, double n_star) {
  DecayReport rep;
  if (!(n_star < 1.0)) {
    rep.skipped = true;
    rep.reason = "n_* >= 1: no subcritical decay guarantee";
    return rep;
  }
  rep.rate = 1.0 - n_star;
  const std::size_t n = effective_nodes(traj.domain());
  auto gap = [&](std::size_t j) {
    const auto phi = traj.at(j);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s = std::max(s, 1.0 - phi[i]);
    return s;
  };
  const double gap0 = gap(0);
  rep.max_excess = -std::numeric_limits<double>::infinity();
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  std::size_t used = 0;
  for (std::size_t j = 0; j < traj.time_count(); ++j) {
    const double t = traj.time(j);
    const double gj = gap(j);
    rep.max_excess = std::max(rep.max_excess, gj - gap0 * std::exp(-rep.rate * t));
    if (gj > 0.0) {
      const double y = std::log(gj);
      st += t;
      sy += y;
      stt += t * t;
      sty += t * y;
      ++used;
    }
  }
  rep.holds = rep.max_excess <= 1e-9;
  if (used >= 2) {
    const double nn = static_cast<double>(used);
    const double denom = nn * stt - st * st;
    if (denom > 0.0) rep.exponent = (nn * sty - st * sy) / denom;
  }
  return rep;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const TemperingWeight& w,
                          std::size_t time_stride, std::size_t node_stride) {
  time_stride = std::max<std::size_t>(time_stride, 1);
  node_stride = std::max<std::size_t>(node_stride, 1);
  const Domain& d = traj.domain();
  const auto psi = w.grid().values();
  char buf[160];
  os << "t,x,phi,theta,g\n";
  for (std::size_t j = 0; j < traj.time_count(); ++j) {
    if (j % time_stride != 0 && j != traj.steps()) continue;
    const auto phi = traj.at(j);
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (i % node_stride != 0 && i + 1 != d.size()) continue;
      const double theta = 1.0 - phi[i];
      const double g = phi[i] > 0.0 ? -std::log1p(-theta) / psi[i]
                                    : std::numeric_limits<double>::infinity();
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", traj.time(j), d.node(i),
                    phi[i], theta, g);
      os << buf;
    }
  }
}

}  // namespace branchlab
