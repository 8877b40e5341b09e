#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>
#include <string>

#include "branchlab/pipeline.hpp"
#include "branchlab/scenario.hpp"
#include "oracles.hpp"

using namespace branchlab;
using nlohmann::json;

namespace {

std::string path(const char* name) { return std::string(BRANCHLAB_SCENARIO_DIR) + "/" + name; }

json minimal() {
  return json::parse(R"({
    "schema_version": 1,
    "name": "tiny",
    "domain": {"lo": -5, "hi": 5, "nodes": 101, "boundary": "torus"},
    "tempering": {"delta_star": 0.5, "alpha": 0.5},
    "kernel": {"offspring": {"kind": "pure_death"}, "dispersal": {"kind": "at_parent"}},
    "initial_function": {"theta": {"form": "constant", "value": 0.4}, "admission": "oracle"},
    "initial_state": {"kind": "deterministic", "positions": [0.0]},
    "run": {"t_end": 2.0, "dt": 0.01, "replicas": 2000, "seed": 3, "lambdas": [2, 5]}
  })");
}

}  // namespace

TEST_CASE("bundled scenarios parse") {
  for (const char* name : {"reference.json", "reference_poisson.json", "pure_death.json", "riccati.json",
                           "binary_invalid.json"}) {
    CHECK_NOTHROW(load_scenario(path(name)));
  }
  const auto ref = load_scenario(path("reference.json"));
  CHECK(ref.domain.size() == 2001);
  CHECK(ref.probes.size() == 4);
  CHECK(ref.initial.configuration().size() == 5);
  CHECK(assess_assumptions(ref.kernel, ref.weight).ok());
  const auto bad = load_scenario(path("binary_invalid.json"));
  CHECK_FALSE(assess_assumptions(bad.kernel, bad.weight).ok());
  CHECK_THROWS_AS(run_validate(bad), AssumptionError);
}

TEST_CASE("parse errors") {
  CHECK_THROWS_AS(load_scenario(path("missing.json")), ParseError);
  auto doc = minimal();
  CHECK_NOTHROW(parse_scenario(doc));
  doc["schema_version"] = 2;
  CHECK_THROWS_AS(parse_scenario(doc), ParseError);
  doc = minimal();
  doc.erase("kernel");
  CHECK_THROWS_AS(parse_scenario(doc), ParseError);
  doc = minimal();
  doc["kernel"]["offspring"]["kind"] = "geometric";
  CHECK_THROWS_AS(parse_scenario(doc), ParseError);
  doc = minimal();
  doc["run"]["dt"] = "small";
  CHECK_THROWS_AS(parse_scenario(doc), ParseError);
  doc = minimal();
  doc["run"]["dt"] = -1.0;
  CHECK_THROWS_AS(parse_scenario(doc), DomainError);
  CHECK_THROWS_AS(parse_scenario(json::array()), ParseError);
  try {
    parse_scenario(json::array());
  } catch (const Error& e) {
    CHECK(e.exit_code() == 2);
  }
}

TEST_CASE("default probes and overrides") {
  auto s = parse_scenario(minimal());
  REQUIRE(s.probes.size() == 1);
  CHECK(s.probes[0].size() == 1);
  CHECK(s.run.solver == Method::ode);
  apply_overrides(s, {99u, 0.02, 1.0, 10u});
  CHECK(s.run.seed == 99u);
  CHECK(s.run.dt == 0.02);
  CHECK(s.run.t_end == 1.0);
  CHECK(s.run.replicas == 10u);
  CHECK_THROWS_AS(apply_overrides(s, {std::nullopt, 0.0, std::nullopt, std::nullopt}), DomainError);
}

TEST_CASE("solve with zero horizon") {
  auto s = parse_scenario(minimal());
  apply_overrides(s, {std::nullopt, std::nullopt, 0.0, std::nullopt});
  std::ostringstream csv;
  const auto j = run_solve(s, &csv);
  CHECK(j["steps"] == 0);
  std::istringstream is(csv.str());
  std::string line;
  int rows = -1;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 101);
  CHECK(csv.str().find("0,-5,0.59999999999999998,0.40000000000000002") != std::string::npos);
}

TEST_CASE("report schema and check outcome") {
  const auto s = parse_scenario(minimal());
  const auto r = run_report(s);
  for (const char* key : {"assumptions", "bounds", "kolmogorov_residual", "fpe_residual", "resolvent_residuals",
                          "mc_estimates", "extinction"}) {
    CHECK(r.contains(key));
  }
  CHECK(r["scenario"] == "tiny");
  const auto c = run_check(s);
  for (const auto& e : c.report["checks"]) {
    INFO(e.dump());
    CHECK(e["pass"].get<bool>());
  }
  CHECK(c.ok);
  CHECK(run_report(s).dump() == r.dump());
}

TEST_CASE("assumption violations stop strict scenarios") {
  auto doc = minimal();
  doc["kernel"]["offspring"] = json{{"kind", "binary"}, {"p", 0.6}};
  doc["initial_function"] = json{{"theta", {{"form", "scaled_psi"}, {"c", 0.5}}}, {"admission", "strict"}};
  const auto s = parse_scenario(doc);
  std::ostringstream csv;
  CHECK_THROWS_AS(run_solve(s, &csv), AssumptionError);
  CHECK_THROWS_AS(run_report(s), AssumptionError);
}
