#include "branchlab/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "branchlab/error.hpp"

namespace branchlab {

using nlohmann::json;

namespace {

const json& member(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + " must be an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + " is missing \"" + key + "\"");
  return *it;
}

double number(const json& obj, const char* key, const std::string& where) {
  const json& v = member(obj, key, where);
  if (!v.is_number()) throw ParseError(where + "." + key + " must be a number");
  return v.get<double>();
}

double number_or(const json& obj, const char* key, double fallback, const std::string& where) {
  return obj.contains(key) ? number(obj, key, where) : fallback;
}

std::string text(const json& obj, const char* key, const std::string& where) {
  const json& v = member(obj, key, where);
  if (!v.is_string()) throw ParseError(where + "." + key + " must be a string");
  return v.get<std::string>();
}

std::size_t count(const json& obj, const char* key, const std::string& where) {
  const json& v = member(obj, key, where);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ParseError(where + "." + key + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::vector<double> numbers(const json& v, const std::string& where) {
  if (!v.is_array()) throw ParseError(where + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ParseError(where + " must contain only numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<std::vector<double>> rows(const json& v, const std::string& where) {
  if (!v.is_array()) throw ParseError(where + " must be an array of arrays");
  std::vector<std::vector<double>> out;
  for (const auto& r : v) out.push_back(numbers(r, where));
  return out;
}

/// A number (constant), or an array with one value per node.
GridFunction field(const json& v, const Domain& d, const std::string& where) {
  if (v.is_number()) return GridFunction::constant(d, v.get<double>());
  return GridFunction(d, numbers(v, where));
}

Domain parse_domain(const json& doc) {
  const json& b = member(doc, "domain", "scenario");
  const std::string boundary = text(b, "boundary", "domain");
  Boundary kind;
  if (boundary == "torus") kind = Boundary::torus;
  else if (boundary == "truncate") kind = Boundary::truncate;
  else throw ParseError("domain.boundary must be \"torus\" or \"truncate\"");
  return Domain(number(b, "lo", "domain"), number(b, "hi", "domain"), count(b, "nodes", "domain"), kind);
}

OffspringLaw parse_offspring(const json& b, const Domain& d, const TemperingWeight& w) {
  const std::string where = "kernel.offspring";
  const std::string kind = text(b, "kind", where);
  if (kind == "pure_death") return OffspringLaw::pure_death(d);
  if (kind == "binary") {
    if (b.contains("p_psi_scale")) {
      const double s = number(b, "p_psi_scale", where);
      return OffspringLaw::binary_split(GridFunction::from(d, [&](double x) { return s * w(x); }));
    }
    return OffspringLaw::binary_split(field(member(b, "p", where), d, where + ".p"));
  }
  if (kind == "poisson") {
    const json& rate = member(b, "rate", where);
    if (rate.is_string()) {
      if (rate.get<std::string>() != "saturate") {
        throw ParseError(where + ".rate must be a number, an array or \"saturate\"");
      }
      const double s = number_or(b, "saturation_scale", 1.0, where);
      if (!(s > 0.0 && s <= 1.0)) throw DomainError(where + ".saturation_scale must lie in (0, 1]");
      return OffspringLaw::poisson_count(
          GridFunction::from(d, [&](double x) { return -s * std::log1p(-w(x)); }));
    }
    return OffspringLaw::poisson_count(field(rate, d, where + ".rate"));
  }
  if (kind == "table") {
    if (b.contains("probabilities")) {
      return OffspringLaw::finite_table(d, {numbers(b["probabilities"], where + ".probabilities")});
    }
    return OffspringLaw::finite_table(d, rows(member(b, "rows", where), where + ".rows"));
  }
  throw ParseError(where + ".kind \"" + kind + "\" is not one of pure_death, binary, poisson, table");
}

DispersalKernel parse_dispersal(const json& b, const Domain& d) {
  const std::string where = "kernel.dispersal";
  const std::string kind = text(b, "kind", where);
  if (kind == "at_parent") return DispersalKernel::at_parent(d);
  if (kind == "uniform_radius") return DispersalKernel::uniform_radius(d, number(b, "radius", where));
  if (kind == "table") return DispersalKernel::table_density(d, rows(member(b, "rows", where), where + ".rows"));
  throw ParseError(where + ".kind \"" + kind + "\" is not one of at_parent, uniform_radius, table");
}

Admission parse_admission(const json& b) {
  if (!b.contains("admission")) return Admission::strict;
  const std::string a = text(b, "admission", "initial_function");
  if (a == "strict") return Admission::strict;
  if (a == "boundary") return Admission::boundary;
  if (a == "oracle") return Admission::oracle;
  throw ParseError("initial_function.admission must be strict, boundary or oracle");
}

GridFunction parse_theta(const json& b, const Domain& d, const TemperingWeight& w) {
  const std::string where = "initial_function.theta";
  const json& th = member(b, "theta", "initial_function");
  const std::string form = text(th, "form", where);
  if (form == "scaled_psi") {
    const double c = number(th, "c", where);
    return GridFunction::from(d, [&](double x) { return c * w(x); });
  }
  if (form == "constant") return GridFunction::constant(d, number(th, "value", where));
  if (form == "table") return GridFunction(d, numbers(member(th, "values", where), where + ".values"));
  throw ParseError(where + ".form must be scaled_psi, constant or table");
}

InitialState parse_state(const json& b, const Domain& d, const TemperingWeight& w, std::size_t cap) {
  const std::string where = "initial_state";
  const std::string kind = text(b, "kind", where);
  if (kind == "deterministic") {
    return InitialState::deterministic(
        Configuration(w, numbers(member(b, "positions", where), where + ".positions"), cap));
  }
  if (kind == "poisson") {
    return InitialState::poisson(field(member(b, "intensity", where), d, where + ".intensity"));
  }
  throw ParseError(where + ".kind must be deterministic or poisson");
}

RunSettings parse_run(const json& doc) {
  RunSettings r;
  if (!doc.contains("run")) return r;
  const json& b = doc["run"];
  const std::string where = "run";
  if (!b.is_object()) throw ParseError("run must be an object");
  r.t_end = number_or(b, "t_end", r.t_end, where);
  r.dt = number_or(b, "dt", r.dt, where);
  r.tol = number_or(b, "tol", r.tol, where);
  if (b.contains("max_iter")) r.max_iter = static_cast<int>(count(b, "max_iter", where));
  if (b.contains("solver")) {
    const std::string m = text(b, "solver", where);
    if (m == "picard") r.solver = Method::picard;
    else if (m == "ode") r.solver = Method::ode;
    else throw ParseError("run.solver must be picard or ode");
  }
  if (b.contains("lambdas")) r.lambdas = numbers(b["lambdas"], "run.lambdas");
  r.tail_tol = number_or(b, "tail_tol", r.tail_tol, where);
  if (b.contains("replicas")) r.replicas = count(b, "replicas", where);
  if (b.contains("seed")) {
    if (!b["seed"].is_number_unsigned()) throw ParseError("run.seed must be an unsigned integer");
    r.seed = b["seed"].get<std::uint64_t>();
  }
  if (b.contains("cap")) r.cap = count(b, "cap", where);
  if (b.contains("mc_times")) r.mc_times = numbers(b["mc_times"], "run.mc_times");
  r.check_time = number_or(b, "check_time", r.check_time, where);
  if (b.contains("csv_time_stride")) r.csv_time_stride = count(b, "csv_time_stride", where);
  if (b.contains("csv_node_stride")) r.csv_node_stride = count(b, "csv_node_stride", where);

  if (!(r.t_end >= 0.0) || !std::isfinite(r.t_end)) throw DomainError("run.t_end must be >= 0");
  if (!(r.dt > 0.0)) throw DomainError("run.dt must be positive");
  if (!(r.tol > 0.0)) throw DomainError("run.tol must be positive");
  if (r.replicas < 1) throw DomainError("run.replicas must be at least 1");
  for (double l : r.lambdas) {
    if (!(l > 1.0)) throw DomainError("run.lambdas entries must exceed 1");
  }
  for (double t : r.mc_times) {
    if (!(t >= 0.0)) throw DomainError("run.mc_times entries must be >= 0");
  }
  if (!(r.check_time > 0.0)) throw DomainError("run.check_time must be positive");
  return r;
}

}  // namespace

Scenario parse_scenario(const json& doc) {
  try {
    if (!doc.is_object()) throw ParseError("scenario must be a JSON object");
    const json& version = member(doc, "schema_version", "scenario");
    if (!version.is_number_integer() || version.get<int>() != kScenarioSchemaVersion) {
      throw ParseError("unsupported schema_version (expected " +
                       std::to_string(kScenarioSchemaVersion) + ")");
    }
    const std::string name = doc.contains("name") ? text(doc, "name", "scenario") : "scenario";
    Domain d = parse_domain(doc);
    const json& tb = member(doc, "tempering", "scenario");
    TemperingWeight w(d, number(tb, "delta_star", "tempering"), number(tb, "alpha", "tempering"));
    const json& kb = member(doc, "kernel", "scenario");
    BranchingKernel k(parse_offspring(member(kb, "offspring", "kernel"), d, w),
                      parse_dispersal(member(kb, "dispersal", "kernel"), d));
    const json& fb = member(doc, "initial_function", "scenario");
    RunSettings run = parse_run(doc);
    InitialState mu0 = parse_state(member(doc, "initial_state", "scenario"), d, w, run.cap);

    std::vector<Configuration> probes;
    if (doc.contains("probes")) {
      const json& p = doc["probes"];
      if (!p.is_array()) throw ParseError("probes must be an array of position arrays");
      for (const auto& e : p) probes.emplace_back(w, numbers(e, "probes[]"), run.cap);
    } else if (mu0.kind() == InitialState::Kind::deterministic) {
      probes.push_back(mu0.configuration());
    } else {
      probes.emplace_back(w, std::vector<double>{0.0}, run.cap);
    }
    return Scenario{name,       d,   w, std::move(k), parse_theta(fb, d, w), parse_admission(fb),
                    std::move(mu0), std::move(probes), run};
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed scenario: ") + e.what());
  }
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("scenario file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_scenario(doc);
}

void apply_overrides(Scenario& s, const Overrides& o) {
  if (o.seed) s.run.seed = *o.seed;
  if (o.dt) {
    if (!(*o.dt > 0.0)) throw DomainError("--dt must be positive");
    s.run.dt = *o.dt;
  }
  if (o.t_end) {
    if (!(*o.t_end >= 0.0)) throw DomainError("--t-end must be >= 0");
    s.run.t_end = *o.t_end;
  }
  if (o.replicas) {
    if (*o.replicas < 1) throw DomainError("--replicas must be at least 1");
    s.run.replicas = *o.replicas;
  }
}

}  // namespace branchlab
