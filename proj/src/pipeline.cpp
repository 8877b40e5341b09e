#include "branchlab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "branchlab/error.hpp"

namespace branchlab {

using nlohmann::json;

namespace {

constexpr double kKolmogorovTolerance = 1e-6;
constexpr double kFpeTolerance = 1e-6;
constexpr double kResolventTolerance = 1e-5;
constexpr double kBoundSlack = 1e-9;
constexpr double kSigmaLimit = 4.0;

double check_tol(const RunSettings& r) { return std::min(r.tol, 1e-12); }

double grid_ceil(double t, double dt) {
  return std::ceil(t / dt - 1e-9) * dt;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

double z_score(double mean, double se, double ref) {
  const double diff = mean - ref;
  if (se > 0.0) return diff / se;
  return std::abs(diff) <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity();
}

json order_json(double coarse, double fine) {
  json j;
  j["residual_dt"] = coarse;
  j["residual_half_dt"] = fine;
  const bool noise = coarse < kOrderNoiseFloor;
  j["below_noise_floor"] = noise;
  j["ratio"] = fine > 0.0 ? json(coarse / fine) : json(nullptr);
  const bool second = fine > 0.0 && std::abs(coarse / fine - 4.0) <= 0.4;
  // A ratio above 4 means the time stepping is exact and only quadrature error is left.
  const bool faster = fine == 0.0 || coarse / fine > 4.4;
  j["second_order"] = second;
  j["pass"] = noise || second || faster;
  return j;
}

json estimate_json(const Estimate& e) {
  return json{{"mean", e.mean}, {"se", e.se}, {"replicas", e.replicas}, {"cap_hits", e.cap_hits}};
}

const char* method_name(Method m) { return m == Method::picard ? "picard" : "ode"; }

}  // namespace

// ------------------------------------------------------------------- workspace

Workspace::Workspace(const Scenario& s)
    : s_(s),
      assumptions_(assess_assumptions(s.kernel, s.weight)),
      phi0_(make_test_function(s.theta0, s.kernel, s.weight, s.admission)),
      horizon_(0.0) {
  double h = std::max(s.run.t_end, s.run.check_time);
  for (double t : s.run.mc_times) h = std::max(h, t);
  for (double l : s.run.lambdas) h = std::max(h, resolvent_horizon(l, s.run.tail_tol));
  horizon_ = grid_ceil(h, s.run.dt);
}

const Trajectory& Workspace::trajectory() {
  if (!main_) {
    const auto& r = s_.run;
    main_ = r.solver == Method::picard
                ? picard_solve(s_.kernel, phi0_, horizon_, r.tol, r.max_iter, r.dt)
                : ode_solve(s_.kernel, phi0_, horizon_, r.dt);
  }
  return *main_;
}

const Trajectory& Workspace::picard_check(int halvings) {
  auto it = picard_.find(halvings);
  if (it == picard_.end()) {
    const auto& r = s_.run;
    const double dt = r.dt / std::pow(2.0, halvings);
    it = picard_
             .emplace(halvings, picard_solve(s_.kernel, phi0_, grid_ceil(r.check_time, r.dt),
                                             check_tol(r), r.max_iter, dt))
             .first;
  }
  return it->second;
}

const std::vector<FunctionalSeries>& Workspace::probe_series() {
  if (!probes_) probes_ = functional_series(s_.probes, trajectory(), s_.kernel);
  return *probes_;
}

const StateSeries& Workspace::state_series() {
  if (!state_) state_ = evolve(s_.initial, trajectory(), s_.kernel);
  return *state_;
}

SimSpec Workspace::sim_spec() const {
  SimSpec spec;
  spec.replicas = s_.run.replicas;
  spec.t_end = s_.run.t_end;
  spec.seed = s_.run.seed;
  spec.cap = s_.run.cap;
  return spec;
}

// -------------------------------------------------------------------- sections

json assumptions_json(const AssumptionReport& r) {
  json j;
  j["n_star"] = r.n_star;
  j["death_margin"] = r.death_margin;
  j["death_margin_node"] = r.death_margin_node;
  j["m"] = r.m;
  j["m_node"] = r.m_node;
  j["subcritical"] = r.subcritical;
  j["max_truncated_mass"] = r.max_truncated_mass;
  j["continuity_checkable"] = r.continuity_checkable;
  j["violations"] = r.violations;
  j["ok"] = r.ok();
  return j;
}

json bounds_section(Workspace& ws) {
  const auto& s = ws.scenario();
  const auto& a = ws.assumptions();
  const auto& phi0 = ws.phi0();
  const auto& traj = ws.trajectory();
  const bool applicable = phi0.in_class();
  json j;
  j["in_class"] = applicable;
  j["c_phi"] = phi0.c_phi();
  j["m"] = a.m;

  const auto b = check_bounds(traj, s.kernel, s.weight, a.m);
  j["trajectory"] = {{"lower", b.lower},
                     {"upper", b.upper},
                     {"theta_rate", b.theta_rate},
                     {"g_rate", b.g_defined ? json(b.g_rate) : json(nullptr)},
                     {"phi_rate", b.phi_rate},
                     {"g_defined", b.g_defined},
                     {"samples", b.samples},
                     {"worst", b.worst()},
                     {"applicable", applicable},
                     {"pass", !applicable || b.holds(kBoundSlack)}};

  const auto d = decay_check(traj, a.n_star);
  j["decay"] = {{"skipped", d.skipped},
                {"reason", d.reason},
                {"rate", d.rate},
                {"max_excess", d.max_excess},
                {"exponent", optional_number(d.exponent)},
                {"pass", d.skipped || d.holds}};

  const auto& pic = ws.picard_check(0);
  json windows = json::array();
  for (const auto& w : pic.windows()) {
    windows.push_back({{"t_begin", w.t_begin},
                       {"length", w.length},
                       {"contraction", w.contraction},
                       {"iterations", w.iterations},
                       {"iteration_bound", w.iteration_bound}});
  }
  const double tol = check_tol(s.run);
  const double fpr = fixed_point_residual(s.kernel, pic);
  j["picard"] = {{"tol", tol},
                 {"windows", windows},
                 {"fixed_point_residual", fpr},
                 {"pass", fpr <= 2.0 * tol}};

  const std::size_t half = pic.steps() / 2;
  auto composed = picard_solve(s.kernel, phi0, pic.time(half), tol, s.run.max_iter, pic.dt());
  composed = extend_flow(s.kernel, composed, pic.t_end() - pic.time(half));
  const double gap = trajectory_distance(composed, pic);
  j["semigroup"] = {{"split", pic.time(half)},
                    {"t_end", pic.t_end()},
                    {"distance", gap},
                    {"limit", 2.0 * tol},
                    {"pass", gap <= 2.0 * tol}};

  const auto& series = ws.probe_series();
  json functional = json::array();
  json branching = json::array();
  const std::size_t last = traj.steps();
  const auto phi_end = traj.slice(last);
  for (std::size_t p = 0; p < s.probes.size(); ++p) {
    const auto& probe = s.probes[p];
    const auto fb = check_functional_bounds(series[p], probe.psi_sum(), phi0.c_phi(),
                                            s.weight.delta_star(), a.n_star, a.m);
    const bool ok_here = applicable && fb.applicable;
    functional.push_back({{"probe", p},
                          {"particles", probe.size()},
                          {"generator", fb.generator},
                          {"lipschitz", fb.lipschitz},
                          {"generator_lipschitz", fb.generator_lipschitz},
                          {"exponential", fb.exponential},
                          {"samples", fb.samples},
                          {"applicable", ok_here},
                          {"pass", !ok_here || fb.holds(kBoundSlack)}});

    const auto pos = probe.positions();
    const std::size_t cut = pos.size() / 2;
    const Configuration left(s.weight, {pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(cut)});
    const Configuration right(s.weight, {pos.begin() + static_cast<std::ptrdiff_t>(cut), pos.end()});
    double defect = 0.0;
    for (const auto& phi : {phi0.phi(), phi_end}) {
      if (phi.min() <= 0.0) continue;
      defect = std::max(defect, std::abs(product_functional(probe, phi) -
                                         product_functional(left, phi) * product_functional(right, phi)));
    }
    branching.push_back({{"probe", p}, {"defect", defect}, {"pass", defect <= 1e-12}});
  }
  j["functional"] = functional;
  j["branching"] = branching;
  return j;
}

json kolmogorov_section(Workspace& ws) {
  const auto& s = ws.scenario();
  const auto& traj = ws.trajectory();
  const auto& series = ws.probe_series();
  const auto coarse = functional_series(s.probes, ws.picard_check(0), s.kernel);
  const auto fine = functional_series(s.probes, ws.picard_check(1), s.kernel);
  const double tc = ws.picard_check(0).t_end();
  json j;
  j["check_time"] = tc;
  j["tolerance"] = kKolmogorovTolerance;
  j["solver"] = method_name(s.run.solver);
  json probes = json::array();
  for (std::size_t p = 0; p < s.probes.size(); ++p) {
    const double main_tc = kolmogorov_residual(series[p], traj.index_of(tc));
    const double main_end = kolmogorov_residual(series[p], traj.index_of(grid_ceil(s.run.t_end, s.run.dt)));
    const double r1 = kolmogorov_residual(coarse[p], coarse[p].steps());
    const double r2 = kolmogorov_residual(fine[p], fine[p].steps());
    auto order = order_json(r1, r2);
    const bool pass = std::max(main_tc, r1) <= kKolmogorovTolerance && order["pass"].get<bool>();
    probes.push_back({{"probe", p},
                      {"particles", s.probes[p].size()},
                      {"residual_check_time", main_tc},
                      {"residual_t_end", main_end},
                      {"picard_order", order},
                      {"pass", pass}});
  }
  j["probes"] = probes;
  return j;
}

json fpe_section(Workspace& ws) {
  const auto& s = ws.scenario();
  const auto& traj = ws.trajectory();
  const auto& st = ws.state_series();
  const auto coarse = evolve(s.initial, ws.picard_check(0), s.kernel);
  const auto fine = evolve(s.initial, ws.picard_check(1), s.kernel);
  const double tc = ws.picard_check(0).t_end();
  const double main_tc = fpe_residual(st, traj.index_of(tc));
  const double main_end = fpe_residual(st, traj.index_of(grid_ceil(s.run.t_end, s.run.dt)));
  const double r1 = fpe_residual(coarse, coarse.steps());
  const double r2 = fpe_residual(fine, fine.steps());
  auto order = order_json(r1, r2);
  json j;
  j["initial_state"] = s.initial.kind() == InitialState::Kind::poisson ? "poisson" : "deterministic";
  j["expected_size"] = s.initial.expected_size();
  j["check_time"] = tc;
  j["tolerance"] = kFpeTolerance;
  j["residual_check_time"] = main_tc;
  j["residual_t_end"] = main_end;
  j["picard_order"] = order;
  j["pass"] = std::max(main_tc, r1) <= kFpeTolerance && order["pass"].get<bool>();

  json laplace = json::array();
  for (double l : s.run.lambdas) {
    const auto id = laplace_identity(st, l, s.run.tail_tol, s.initial.expected_size());
    laplace.push_back({{"lambda", l},
                       {"transform", id.transform},
                       {"generator_route", id.generator_route},
                       {"residual", id.residual},
                       {"tail_bound", id.tail_bound},
                       {"pass", id.residual <= id.tail_bound + 1e-8}});
  }
  j["laplace_identity"] = laplace;
  return j;
}

json resolvent_section(Workspace& ws) {
  const auto& s = ws.scenario();
  const auto& series = ws.probe_series();
  const auto& phi0 = ws.phi0();
  const double c = phi0.in_class() ? phi0.c_phi() : 0.0;
  json j;
  j["tail_tol"] = s.run.tail_tol;
  j["tolerance"] = kResolventTolerance;
  json lambdas = json::array();
  for (double l : s.run.lambdas) {
    json probes = json::array();
    for (std::size_t p = 0; p < s.probes.size(); ++p) {
      const auto id = resolvent_identity(series[p], s.probes[p].size(), l, s.run.tail_tol,
                                         s.weight.delta_star(), c);
      const bool pass = id.residual <= kResolventTolerance && id.tail_bound <= s.run.tail_tol &&
                        id.converges;
      probes.push_back({{"probe", p},
                        {"value", id.value.value},
                        {"horizon", id.value.horizon},
                        {"required_horizon", id.value.required_horizon},
                        {"value_tail_bound", id.value.tail_bound},
                        {"generator_integral", id.generator_integral},
                        {"residual", id.residual},
                        {"tail_bound", id.tail_bound},
                        {"convergence_gap", id.convergence_gap},
                        {"convergence_bound", std::isfinite(id.convergence_bound)
                                                  ? json(id.convergence_bound)
                                                  : json(nullptr)},
                        {"pass", pass}});
    }
    lambdas.push_back({{"lambda", l}, {"probes", probes}});
  }
  j["lambdas"] = lambdas;
  return j;
}

json mc_section(Workspace& ws) {
  const auto& s = ws.scenario();
  const auto& traj = ws.trajectory();
  const auto& st = ws.state_series();
  const auto model = ws.model();
  const auto spec = ws.sim_spec();
  json j;
  j["replicas"] = spec.replicas;
  j["seed"] = spec.seed;
  j["cap"] = spec.cap;

  std::vector<double> times = s.run.mc_times;
  std::sort(times.begin(), times.end());
  json functional = json::array();
  if (!times.empty()) {
    const auto est = estimate_functional(model, spec, ws.phi0().phi(), times);
    for (std::size_t i = 0; i < times.size(); ++i) {
      const double ref = st.value[traj.index_of(times[i])];
      const double z = z_score(est[i].mean, est[i].se, ref);
      json e = estimate_json(est[i]);
      e["t"] = times[i];
      e["solver"] = ref;
      e["z"] = std::isfinite(z) ? json(z) : json(nullptr);
      e["pass"] = std::abs(z) <= kSigmaLimit;
      functional.push_back(e);
    }
  }
  j["functional"] = functional;

  const double tc = grid_ceil(s.run.check_time, s.run.dt);
  const auto gen = estimate_generator(model, spec, ws.phi0(), tc);
  const double ref = st.generator[traj.index_of(tc)];
  const double z = z_score(gen.mean, gen.se, ref);
  json g = estimate_json(gen);
  g["t"] = tc;
  g["closed_form"] = ref;
  g["z"] = std::isfinite(z) ? json(z) : json(nullptr);
  g["pass"] = std::abs(z) <= kSigmaLimit;
  j["generator"] = g;
  return j;
}

json extinction_section(Workspace& ws) {
  const auto& s = ws.scenario();
  const auto& a = ws.assumptions();
  const auto& st = ws.state_series();
  const double gap0 = ws.phi0().theta().max();
  const auto d = extinction_diagnostic(st, a.n_star, s.initial.expected_size(), gap0);
  json j;
  j["n_star"] = a.n_star;
  j["subcritical"] = a.subcritical;
  j["state"] = {{"skipped", d.skipped},
                {"reason", d.reason},
                {"rate", d.rate},
                {"horizon", st.time(st.steps())},
                {"final_gap", d.final_gap},
                {"max_excess", d.max_excess},
                {"monotone", d.monotone},
                {"within_envelope", d.within_envelope},
                {"exponent", optional_number(d.exponent)},
                {"expected_size", s.initial.expected_size()},
                {"initial_gap", gap0},
                {"pass", d.skipped || d.within_envelope}};

  const double t = grid_ceil(s.run.t_end, s.run.dt);
  if (t > 0.0) {
    const auto zero = make_test_function(GridFunction::constant(s.domain, 1.0), s.kernel, s.weight,
                                         Admission::oracle);
    const auto flow = ode_solve(s.kernel, zero, t, s.run.dt);
    const double ref = laplace_functional(s.initial, flow.slice(flow.steps()));
    const auto est = extinction_prob(ws.model(), ws.sim_spec(), t);
    const double z = z_score(est.mean, est.se, ref);
    json e = estimate_json(est);
    e["t"] = t;
    e["solver"] = ref;
    e["z"] = std::isfinite(z) ? json(z) : json(nullptr);
    e["pass"] = std::abs(z) <= kSigmaLimit;
    j["probability"] = e;
  } else {
    j["probability"] = nullptr;
  }
  return j;
}

// ----------------------------------------------------------------- subcommands

namespace {

// Oracle-admission scenarios are closed-form comparison runs and may use
// kernels outside the assumptions; they are reported, not enforced.
AssumptionReport require_assumptions(const Scenario& s) {
  if (s.admission == Admission::oracle) return assess_assumptions(s.kernel, s.weight);
  return check_assumptions(s.kernel, s.weight);
}

}  // namespace

json run_validate(const Scenario& s) {
  const auto r = assess_assumptions(s.kernel, s.weight);
  if (!r.ok()) throw AssumptionError(r);
  return json{{"scenario", s.name}, {"assumptions", assumptions_json(r)}};
}

json run_solve(const Scenario& s, std::ostream* csv) {
  const auto a = require_assumptions(s);
  const auto phi0 = make_test_function(s.theta0, s.kernel, s.weight, s.admission);
  const auto& r = s.run;
  const auto traj = r.solver == Method::picard
                        ? picard_solve(s.kernel, phi0, r.t_end, r.tol, r.max_iter, r.dt)
                        : ode_solve(s.kernel, phi0, r.t_end, r.dt);
  if (csv) write_trajectory_csv(*csv, traj, s.weight, r.csv_time_stride, r.csv_node_stride);
  const auto b = check_bounds(traj, s.kernel, s.weight, a.m);
  const auto d = decay_check(traj, a.n_star);
  json j;
  j["scenario"] = s.name;
  j["solver"] = method_name(r.solver);
  j["steps"] = traj.steps();
  j["dt"] = traj.dt();
  j["t_end"] = traj.t_end();
  j["c_phi"] = phi0.c_phi();
  j["in_class"] = phi0.in_class();
  j["bounds"] = {{"lower", b.lower},       {"upper", b.upper},
                 {"theta_rate", b.theta_rate}, {"g_rate", b.g_defined ? json(b.g_rate) : json(nullptr)},
                 {"phi_rate", b.phi_rate}, {"samples", b.samples},
                 {"pass", !phi0.in_class() || b.holds(kBoundSlack)}};
  j["decay"] = {{"skipped", d.skipped}, {"reason", d.reason}, {"max_excess", d.max_excess},
                {"exponent", optional_number(d.exponent)}, {"pass", d.skipped || d.holds}};
  if (r.solver == Method::picard) {
    j["fixed_point_residual"] = fixed_point_residual(s.kernel, traj);
  }
  return j;
}

json run_simulate(const Scenario& s, std::ostream* replica_csv) {
  require_assumptions(s);
  Workspace ws(s);
  json j;
  j["scenario"] = s.name;
  j["mc_estimates"] = mc_section(ws);
  if (replica_csv) {
    auto spec = ws.sim_spec();
    estimate_functional(ws.model(), spec, ws.phi0().phi(), replica_csv);
  }
  return j;
}

json run_resolvent(const Scenario& s) {
  require_assumptions(s);
  Workspace ws(s);
  return json{{"scenario", s.name}, {"resolvent_residuals", resolvent_section(ws)}};
}

json run_evolve(const Scenario& s, std::ostream* csv) {
  require_assumptions(s);
  Workspace ws(s);
  if (csv) {
    StateTrajectory st;
    st.series.push_back(ws.state_series());
    write_state_csv(*csv, st, s.run.csv_time_stride);
  }
  return json{{"scenario", s.name}, {"fpe_residual", fpe_section(ws)}};
}

json run_report(const Scenario& s) {
  require_assumptions(s);
  Workspace ws(s);
  json j;
  j["scenario"] = s.name;
  j["assumptions"] = assumptions_json(ws.assumptions());
  j["bounds"] = bounds_section(ws);
  j["kolmogorov_residual"] = kolmogorov_section(ws);
  j["fpe_residual"] = fpe_section(ws);
  j["resolvent_residuals"] = resolvent_section(ws);
  j["mc_estimates"] = mc_section(ws);
  j["extinction"] = extinction_section(ws);
  return j;
}

namespace {

void add_check(json& list, bool& ok, const std::string& name, bool pass, json detail = nullptr) {
  list.push_back({{"name", name}, {"pass", pass}, {"detail", std::move(detail)}});
  ok = ok && pass;
}

bool all_pass(const json& arr) {
  return std::all_of(arr.begin(), arr.end(), [](const json& e) { return e["pass"].get<bool>(); });
}

}  // namespace

CheckOutcome run_check(const Scenario& s) {
  CheckOutcome out;
  out.report = run_report(s);
  const json& r = out.report;
  json checks = json::array();
  bool ok = true;
  const auto& b = r["bounds"];
  add_check(checks, ok, "kernel_assumptions", r["assumptions"]["ok"].get<bool>());
  add_check(checks, ok, "trajectory_bounds", b["trajectory"]["pass"].get<bool>(), b["trajectory"]["worst"]);
  add_check(checks, ok, "subcritical_decay", b["decay"]["pass"].get<bool>(), b["decay"]["max_excess"]);
  add_check(checks, ok, "picard_fixed_point", b["picard"]["pass"].get<bool>(),
            b["picard"]["fixed_point_residual"]);
  add_check(checks, ok, "flow_composition", b["semigroup"]["pass"].get<bool>(), b["semigroup"]["distance"]);
  add_check(checks, ok, "functional_bounds", all_pass(b["functional"]));
  add_check(checks, ok, "branching_property", all_pass(b["branching"]));
  add_check(checks, ok, "kolmogorov_residual", all_pass(r["kolmogorov_residual"]["probes"]));
  add_check(checks, ok, "fpe_residual", r["fpe_residual"]["pass"].get<bool>(),
            r["fpe_residual"]["residual_check_time"]);
  add_check(checks, ok, "laplace_identity", all_pass(r["fpe_residual"]["laplace_identity"]));
  bool resolvent_ok = true;
  for (const auto& l : r["resolvent_residuals"]["lambdas"]) resolvent_ok = resolvent_ok && all_pass(l["probes"]);
  add_check(checks, ok, "resolvent_identity", resolvent_ok);
  add_check(checks, ok, "mc_duality", all_pass(r["mc_estimates"]["functional"]));
  add_check(checks, ok, "mc_generator", r["mc_estimates"]["generator"]["pass"].get<bool>(),
            r["mc_estimates"]["generator"]["z"]);
  add_check(checks, ok, "extinction_envelope", r["extinction"]["state"]["pass"].get<bool>(),
            r["extinction"]["state"]["max_excess"]);
  const auto& prob = r["extinction"]["probability"];
  add_check(checks, ok, "extinction_probability", prob.is_null() || prob["pass"].get<bool>(),
            prob.is_null() ? json(nullptr) : prob["z"]);
  out.report["checks"] = checks;
  out.report["ok"] = ok;
  out.ok = ok;
  return out;
}

}  // namespace branchlab
