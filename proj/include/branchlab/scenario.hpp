#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "branchlab/configuration.hpp"
#include "branchlab/kernel.hpp"
#include "branchlab/loglaplace.hpp"
#include "branchlab/space.hpp"
#include "branchlab/states.hpp"

namespace branchlab {

inline constexpr int kScenarioSchemaVersion = 1;

struct RunSettings {
  double t_end = 5.0;
  double dt = 1e-3;
  double tol = 1e-10;
  int max_iter = 200;
  Method solver = Method::ode;
  std::vector<double> lambdas{2.0, 5.0, 10.0};
  double tail_tol = 1e-7;
  std::size_t replicas = 10000;
  std::uint64_t seed = 0;
  std::size_t cap = kDefaultParticleCap;
  std::vector<double> mc_times{0.5, 1.0, 2.0};
  double check_time = 1.0;   // time of the dt-halving residual checks
  std::size_t csv_time_stride = 100;
  std::size_t csv_node_stride = 1;
};

/// A fully parsed scenario document. Kernel assumptions and test-function
/// admissibility are not checked here.
struct Scenario {
  std::string name;
  Domain domain;
  TemperingWeight weight;
  BranchingKernel kernel;
  GridFunction theta0;
  Admission admission = Admission::strict;
  InitialState initial;
  std::vector<Configuration> probes;
  RunSettings run;
};

/// Throws ParseError on malformed or incomplete documents and DomainError on
/// out-of-range parameters.
Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::filesystem::path& path);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
  std::optional<double> t_end;
  std::optional<std::size_t> replicas;
};

void apply_overrides(Scenario& s, const Overrides& o);

}  // namespace branchlab
