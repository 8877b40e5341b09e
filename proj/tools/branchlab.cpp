// branchlab: scenario-driven solver, simulator and checker.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "branchlab/error.hpp"
#include "branchlab/kernel.hpp"
#include "branchlab/pipeline.hpp"
#include "branchlab/scenario.hpp"

namespace fs = std::filesystem;
using branchlab::Scenario;
using nlohmann::json;

namespace {

struct Options {
  std::string scenario;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
  std::optional<double> t_end;
  std::optional<std::size_t> replicas;
  bool replica_csv = false;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw branchlab::DomainError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw branchlab::DomainError("cannot write " + path.string());
  return os;
}

int dispatch(const std::string& cmd, const Options& o) {
  Scenario s = branchlab::load_scenario(o.scenario);
  branchlab::apply_overrides(s, {o.seed, o.dt, o.t_end, o.replicas});
  const fs::path out(o.out);
  if (cmd != "validate") fs::create_directories(out);

  if (cmd == "validate") {
    const auto r = branchlab::assess_assumptions(s.kernel, s.weight);
    std::cout << json{{"scenario", s.name}, {"assumptions", branchlab::assumptions_json(r)}}.dump(2)
              << '\n';
    return r.ok() ? 0 : 1;
  }
  if (cmd == "solve") {
    auto csv = open_out(out / "trajectory.csv");
    const auto j = branchlab::run_solve(s, &csv);
    write_json(out / "solve.json", j);
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  if (cmd == "simulate") {
    std::optional<std::ofstream> csv;
    if (o.replica_csv) csv = open_out(out / "replicas.csv");
    const auto j = branchlab::run_simulate(s, csv ? &*csv : nullptr);
    write_json(out / "simulate.json", j);
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  if (cmd == "check") {
    const auto c = branchlab::run_check(s);
    write_json(out / "check.json", c.report);
    for (const auto& e : c.report["checks"]) {
      std::cout << (e["pass"].get<bool>() ? "PASS " : "FAIL ") << e["name"].get<std::string>()
                << '\n';
    }
    return c.ok ? 0 : 1;
  }
  if (cmd == "resolvent") {
    const auto j = branchlab::run_resolvent(s);
    write_json(out / "resolvent.json", j);
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  if (cmd == "evolve") {
    auto csv = open_out(out / "states.csv");
    const auto j = branchlab::run_evolve(s, &csv);
    write_json(out / "evolve.json", j);
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  const auto j = branchlab::run_report(s);
  write_json(out / "report.json", j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"branchlab: log-Laplace solver and branching-process checks"};
  app.require_subcommand(1, 1);
  Options o;
  const char* names[] = {"validate", "solve", "simulate", "check", "resolvent", "evolve", "report"};
  const char* help[] = {"check kernel assumptions",
                        "solve the log-Laplace equation and write trajectory.csv",
                        "Monte Carlo estimates",
                        "run every invariant; nonzero exit on a violation",
                        "resolvent identity residuals",
                        "state evolution and Fokker-Planck residuals",
                        "full JSON summary in report.json"};
  for (int i = 0; i < 7; ++i) {
    auto* sub = app.add_subcommand(names[i], help[i]);
    sub->add_option("--scenario", o.scenario, "scenario JSON file")->required();
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "master seed override");
    sub->add_option("--dt", o.dt, "time step override");
    sub->add_option("--t-end", o.t_end, "horizon override");
    sub->add_option("--replicas", o.replicas, "replica count override");
    if (std::string(names[i]) == "simulate") {
      sub->add_flag("--replica-csv", o.replica_csv, "also write replicas.csv");
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    return dispatch(cmd, o);
  } catch (const branchlab::AssumptionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const branchlab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
