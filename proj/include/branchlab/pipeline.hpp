#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "branchlab/configuration.hpp"
#include "branchlab/loglaplace.hpp"
#include "branchlab/mc_sim.hpp"
#include "branchlab/scenario.hpp"
#include "branchlab/states.hpp"

namespace branchlab {

/// Residuals below this are treated as rounding noise by the dt-halving checks.
inline constexpr double kOrderNoiseFloor = 1e-11;

/// Lazily computed products shared by the subcommands of one scenario.
class Workspace {
 public:
  explicit Workspace(const Scenario& s);

  const Scenario& scenario() const noexcept { return s_; }
  const AssumptionReport& assumptions() const noexcept { return assumptions_; }
  const TestFunction& phi0() const noexcept { return phi0_; }

  /// Grid horizon covering t_end, the MC times and every resolvent horizon.
  double horizon() const noexcept { return horizon_; }
  const Trajectory& trajectory();
  /// Picard solutions to check_time with steps dt and dt/2.
  const Trajectory& picard_check(int halvings);
  const std::vector<FunctionalSeries>& probe_series();
  const StateSeries& state_series();

  SimModel model() const { return SimModel{s_.kernel, s_.weight, s_.initial}; }
  SimSpec sim_spec() const;

 private:
  const Scenario& s_;
  AssumptionReport assumptions_;
  TestFunction phi0_;
  double horizon_;
  std::optional<Trajectory> main_;
  std::map<int, Trajectory> picard_;
  std::optional<std::vector<FunctionalSeries>> probes_;
  std::optional<StateSeries> state_;
};

nlohmann::json assumptions_json(const AssumptionReport& r);

nlohmann::json bounds_section(Workspace& ws);
nlohmann::json kolmogorov_section(Workspace& ws);
nlohmann::json fpe_section(Workspace& ws);
nlohmann::json resolvent_section(Workspace& ws);
nlohmann::json mc_section(Workspace& ws);
nlohmann::json extinction_section(Workspace& ws);

/// Throws AssumptionError after filling `out` when an assumption fails.
nlohmann::json run_validate(const Scenario& s);
nlohmann::json run_solve(const Scenario& s, std::ostream* csv);
nlohmann::json run_simulate(const Scenario& s, std::ostream* replica_csv);
nlohmann::json run_resolvent(const Scenario& s);
nlohmann::json run_evolve(const Scenario& s, std::ostream* csv);
nlohmann::json run_report(const Scenario& s);

struct CheckOutcome {
  nlohmann::json report;
  bool ok = true;
};

/// Runs every invariant on the scenario; `ok` is false on any violation.
CheckOutcome run_check(const Scenario& s);

}  // namespace branchlab
