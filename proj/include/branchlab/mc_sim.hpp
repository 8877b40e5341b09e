#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "branchlab/configuration.hpp"
#include "branchlab/kernel.hpp"
#include "branchlab/loglaplace.hpp"
#include "branchlab/states.hpp"

namespace branchlab {

struct SimSpec {
  std::size_t replicas = 10000;
  double t_end = 1.0;
  std::uint64_t seed = 0;
  std::size_t cap = kDefaultParticleCap;
};

/// Read-only ingredients shared by every replica.
struct SimModel {
  const BranchingKernel& kernel;
  const TemperingWeight& weight;
  const InitialState& initial;
};

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
  std::size_t replicas = 0;  // replicas that entered the mean
  std::size_t cap_hits = 0;
};

/// Stream seed for replica `index`, a fixed 64-bit mix of (master, index).
std::uint64_t replica_seed(std::uint64_t master, std::uint64_t index);

/// Poisson point process with intensity rho on the window.
std::vector<double> sample_poisson_process(const GridFunction& rho, Rng& rng);

/// Unit-rate branching run from gamma0; positions at each of the ascending
/// `times`. Throws CapError when the population exceeds `cap`.
std::vector<std::vector<double>> simulate_path(std::span<const double> gamma0,
                                               const BranchingKernel& k,
                                               std::span<const double> times, Rng& rng,
                                               std::size_t cap = kDefaultParticleCap);
Configuration simulate_once(const Configuration& gamma0, const BranchingKernel& k,
                            const TemperingWeight& w, double t_end, std::uint64_t seed,
                            std::size_t cap = kDefaultParticleCap);

/// values[t][r] = f(t, gamma_t of replica r); capped[r] marks excluded replicas.
struct ReplicaTable {
  std::vector<double> times;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<std::size_t>> sizes;
  std::vector<char> capped;
};

using ReplicaFunction = std::function<double(std::size_t time_index, const Configuration& gamma)>;

ReplicaTable run_replicas(const SimModel& model, const SimSpec& spec,
                          std::span<const double> times, const ReplicaFunction& f);

/// Mean and standard error over uncapped replicas; ReliabilityError when more
/// than 1% of replicas hit the cap.
Estimate summarize(const ReplicaTable& table, std::size_t time_index);

/// Mean of F^phi(gamma_t) at spec.t_end; optional CSV `replica,final_size,functional_value`.
Estimate estimate_functional(const SimModel& model, const SimSpec& spec, const GridFunction& phi,
                             std::ostream* replica_csv = nullptr);
std::vector<Estimate> estimate_functional(const SimModel& model, const SimSpec& spec,
                                          const GridFunction& phi, std::span<const double> times);

/// Mean of L F^phi(gamma_t).
Estimate estimate_generator(const SimModel& model, const SimSpec& spec, const TestFunction& phi,
                            double t);
std::vector<Estimate> estimate_generator(const SimModel& model, const SimSpec& spec,
                                         const TestFunction& phi, std::span<const double> times);

/// Fraction of replicas with gamma_t empty, binomial standard error.
Estimate extinction_prob(const SimModel& model, const SimSpec& spec, double t);

/// Mean population size at t.
Estimate mean_population(const SimModel& model, const SimSpec& spec, double t);

}  // namespace branchlab
