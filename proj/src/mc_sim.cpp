#include "branchlab/mc_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <string>

#include "branchlab/error.hpp"
#include "branchlab/parallel.hpp"

namespace branchlab {

std::uint64_t replica_seed(std::uint64_t master, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(master) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

std::vector<double> sample_poisson_process(const GridFunction& rho, Rng& rng) {
  const Domain& d = rho.domain();
  const std::size_t cells = d.size() - 1;
  std::vector<double> mass(cells);
  double total = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    const double right = d.is_torus() && c + 1 == cells ? rho[0] : rho[c + 1];
    mass[c] = 0.5 * d.spacing() * (rho[c] + right);
    total += mass[c];
  }
  std::vector<double> out;
  if (!(total > 0.0)) return out;
  const auto count = std::poisson_distribution<std::size_t>(total)(rng);
  std::discrete_distribution<std::size_t> pick(mass.begin(), mass.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t c = pick(rng);
    const double a = rho[c];
    const double b = d.is_torus() && c + 1 == cells ? rho[0] : rho[c + 1];
    const double u = unit(rng);
    // Inverse CDF of the linear density a + (b - a) s on [0, 1].
    double s = u;
    if (std::abs(b - a) > 1e-14 * std::max(a, b)) {
      s = (-a + std::sqrt(a * a + (b - a) * u * (a + b))) / (b - a);
    }
    out.push_back(d.reduce(d.node(c) + std::clamp(s, 0.0, 1.0) * d.spacing()));
  }
  return out;
}

std::vector<std::vector<double>> simulate_path(std::span<const double> gamma0,
                                               const BranchingKernel& k,
                                               std::span<const double> times, Rng& rng,
                                               std::size_t cap) {
  if (!std::is_sorted(times.begin(), times.end())) throw DomainError("snapshot times must ascend");
  if (!times.empty() && times.front() < 0.0) throw DomainError("snapshot times must be >= 0");
  if (gamma0.size() > cap) {
    throw CapError("initial population " + std::to_string(gamma0.size()) + " exceeds the cap " +
                   std::to_string(cap));
  }
  const auto& law = k.law();
  const auto& dispersal = k.dispersal();
  std::vector<double> pop(gamma0.begin(), gamma0.end());
  std::vector<std::vector<double>> snaps;
  snaps.reserve(times.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double t = 0.0;
  std::size_t next = 0;
  while (next < times.size()) {
    if (pop.empty()) {
      while (next < times.size()) {
        snaps.push_back(pop);
        ++next;
      }
      break;
    }
    const double wait = std::exponential_distribution<double>(static_cast<double>(pop.size()))(rng);
    while (next < times.size() && t + wait > times[next]) {
      snaps.push_back(pop);
      ++next;
    }
    if (next == times.size()) break;
    t += wait;
    auto idx = static_cast<std::size_t>(unit(rng) * static_cast<double>(pop.size()));
    idx = std::min(idx, pop.size() - 1);
    const double x = pop[idx];
    pop[idx] = pop.back();
    pop.pop_back();
    const int children = law.sample_count(x, rng);
    for (int c = 0; c < children; ++c) pop.push_back(dispersal.sample(x, rng));
    if (pop.size() > cap) {
      throw CapError("population reached " + std::to_string(pop.size()) + " above the cap " +
                     std::to_string(cap) + " at t = " + std::to_string(t));
    }
  }
  return snaps;
}

Configuration simulate_once(const Configuration& gamma0, const BranchingKernel& k,
                            const TemperingWeight& w, double t_end, std::uint64_t seed,
                            std::size_t cap) {
  Rng rng(seed);
  const double times[] = {t_end};
  auto snaps = simulate_path(gamma0.positions(), k, times, rng, cap);
  return Configuration(w, std::move(snaps.front()), cap);
}

ReplicaTable run_replicas(const SimModel& model, const SimSpec& spec,
                          std::span<const double> times, const ReplicaFunction& f) {
  if (spec.replicas < 1) throw DomainError("at least one replica is required");
  ReplicaTable table;
  table.times.assign(times.begin(), times.end());
  table.values.assign(times.size(), std::vector<double>(spec.replicas, 0.0));
  table.sizes.assign(times.size(), std::vector<std::size_t>(spec.replicas, 0));
  table.capped.assign(spec.replicas, 0);
  const bool poisson = model.initial.kind() == InitialState::Kind::poisson;
  if (!poisson && model.initial.configuration().size() > spec.cap) {
    throw CapError("initial configuration exceeds the population cap");
  }
  parallel_for(spec.replicas, [&](std::size_t r) {
    Rng rng(replica_seed(spec.seed, r));
    std::vector<double> start;
    if (poisson) {
      start = sample_poisson_process(model.initial.intensity(), rng);
    } else {
      const auto p = model.initial.configuration().positions();
      start.assign(p.begin(), p.end());
    }
    try {
      auto snaps = simulate_path(start, model.kernel, times, rng, spec.cap);
      for (std::size_t j = 0; j < snaps.size(); ++j) {
        table.sizes[j][r] = snaps[j].size();
        Configuration g(model.weight, std::move(snaps[j]), spec.cap);
        table.values[j][r] = f(j, g);
      }
    } catch (const CapError&) {
      table.capped[r] = 1;
    }
  });
  return table;
}

Estimate summarize(const ReplicaTable& table, std::size_t time_index) {
  const auto& v = table.values.at(time_index);
  Estimate e;
  e.cap_hits = static_cast<std::size_t>(std::count(table.capped.begin(), table.capped.end(), 1));
  if (static_cast<double>(e.cap_hits) > 0.01 * static_cast<double>(v.size())) {
    throw ReliabilityError(std::to_string(e.cap_hits) + " of " + std::to_string(v.size()) +
                           " replicas hit the population cap (limit 1%)");
  }
  double sum = 0.0;
  for (std::size_t r = 0; r < v.size(); ++r) {
    if (table.capped[r]) continue;
    sum += v[r];
    ++e.replicas;
  }
  if (e.replicas == 0) throw ReliabilityError("every replica hit the population cap");
  e.mean = sum / static_cast<double>(e.replicas);
  double ss = 0.0;
  for (std::size_t r = 0; r < v.size(); ++r) {
    if (!table.capped[r]) ss += (v[r] - e.mean) * (v[r] - e.mean);
  }
  if (e.replicas > 1) {
    e.se = std::sqrt(ss / static_cast<double>(e.replicas - 1) / static_cast<double>(e.replicas));
  }
  return e;
}

namespace {

void check_time(double t) {
  if (!std::isfinite(t) || t < 0.0) throw DomainError("simulation time must be finite and >= 0");
}

}  // namespace

std::vector<Estimate> estimate_functional(const SimModel& model, const SimSpec& spec,
                                          const GridFunction& phi, std::span<const double> times) {
  for (double t : times) check_time(t);
  const auto table = run_replicas(model, spec, times, [&](std::size_t, const Configuration& g) {
    return product_functional(g, phi);
  });
  std::vector<Estimate> out;
  for (std::size_t j = 0; j < times.size(); ++j) out.push_back(summarize(table, j));
  return out;
}

Estimate estimate_functional(const SimModel& model, const SimSpec& spec, const GridFunction& phi,
                             std::ostream* replica_csv) {
  check_time(spec.t_end);
  const double times[] = {spec.t_end};
  const auto table = run_replicas(model, spec, times, [&](std::size_t, const Configuration& g) {
    return product_functional(g, phi);
  });
  if (replica_csv) {
    char buf[96];
    *replica_csv << "replica,final_size,functional_value\n";
    for (std::size_t r = 0; r < spec.replicas; ++r) {
      if (table.capped[r]) {
        *replica_csv << r << ",cap,nan\n";
        continue;
      }
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g\n", r, table.sizes[0][r], table.values[0][r]);
      *replica_csv << buf;
    }
  }
  return summarize(table, 0);
}

std::vector<Estimate> estimate_generator(const SimModel& model, const SimSpec& spec,
                                         const TestFunction& phi, std::span<const double> times) {
  for (double t : times) check_time(t);
  const auto image = apply_phi(model.kernel, phi.phi());
  const Domain& d = phi.phi().domain();
  const auto table = run_replicas(model, spec, times, [&](std::size_t, const Configuration& g) {
    return apply_L(g, d, phi.phi().values(), image.values());
  });
  std::vector<Estimate> out;
  for (std::size_t j = 0; j < times.size(); ++j) out.push_back(summarize(table, j));
  return out;
}

Estimate estimate_generator(const SimModel& model, const SimSpec& spec, const TestFunction& phi,
                            double t) {
  const double times[] = {t};
  return estimate_generator(model, spec, phi, times).front();
}

Estimate extinction_prob(const SimModel& model, const SimSpec& spec, double t) {
  check_time(t);
  const double times[] = {t};
  const auto table = run_replicas(model, spec, times, [](std::size_t, const Configuration& g) {
    return g.is_empty() ? 1.0 : 0.0;
  });
  Estimate e = summarize(table, 0);
  const double n = static_cast<double>(e.replicas);
  e.se = std::sqrt(e.mean * (1.0 - e.mean) / n);
  return e;
}

Estimate mean_population(const SimModel& model, const SimSpec& spec, double t) {
  check_time(t);
  const double times[] = {t};
  const auto table = run_replicas(model, spec, times, [](std::size_t, const Configuration& g) {
    return static_cast<double>(g.size());
  });
  return summarize(table, 0);
}

}  // namespace branchlab
