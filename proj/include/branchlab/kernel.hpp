#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "branchlab/error.hpp"
#include "branchlab/space.hpp"

namespace branchlab {

using Rng = std::mt19937_64;

/// Law of the number of offspring of a particle sitting at a node.
class OffspringLaw {
 public:
  enum class Kind { pure_death, binary_split, poisson_count, finite_table };

  static OffspringLaw pure_death(const Domain& domain);
  /// Zero or two offspring; two with probability p(x).
  static OffspringLaw binary_split(const GridFunction& p);
  static OffspringLaw poisson_count(const GridFunction& rate);
  /// rows[k][i] is P(count = i) at node k; a single row applies everywhere.
  static OffspringLaw finite_table(const Domain& domain, std::vector<std::vector<double>> rows);

  Kind kind() const noexcept { return kind_; }
  const Domain& domain() const noexcept { return domain_; }

  double death_probability(std::size_t node) const;
  double mean(std::size_t node) const;
  /// Probability generating function at node, s in [0, 1].
  double pgf(std::size_t node, double s) const noexcept;
  double max_mean() const noexcept;
  /// Largest count with positive probability, or -1 when unbounded.
  int max_count() const noexcept;
  /// Count probabilities p_0..p_max at a node (FiniteTable only).
  std::span<const double> row(std::size_t node) const;

  /// Draws a count at an off-grid position. Law parameters are linearly
  /// interpolated between the neighbouring nodes.
  int sample_count(double x, Rng& rng) const;

 private:
  OffspringLaw(Kind kind, const Domain& domain) : kind_(kind), domain_(domain) {}
  void check_node(std::size_t node) const;

  Kind kind_;
  Domain domain_;
  std::vector<double> param_;  // p(x) or n(x) per node
  std::size_t width_ = 0;      // table row width
  std::vector<double> table_;  // node-major probability rows
};

/// Probability kernel placing one offspring of a parent at x.
class DispersalKernel {
 public:
  enum class Kind { at_parent, uniform_radius, table_density };

  static DispersalKernel at_parent(const Domain& domain);
  /// Uniform on [x - r, x + r]; in truncate mode the part outside the window
  /// is cut and the rest renormalized.
  static DispersalKernel uniform_radius(const Domain& domain, double radius);
  /// rows[k] is an (unnormalized) density over the nodes for a parent at node k.
  static DispersalKernel table_density(const Domain& domain,
                                       std::vector<std::vector<double>> rows);

  Kind kind() const noexcept { return kind_; }
  const Domain& domain() const noexcept { return domain_; }
  double radius() const noexcept { return radius_; }

  /// out[k] = integral of f against k_{x_k}, f taken piecewise linear.
  void average(std::span<const double> f, std::span<double> out) const;
  double average_at(std::size_t node, std::span<const double> f) const;
  /// Largest fraction of k_x mass removed by truncation before renormalizing.
  double max_truncated_mass() const noexcept;

  double sample(double x, Rng& rng) const;

 private:
  DispersalKernel(Kind kind, const Domain& domain) : kind_(kind), domain_(domain) {}

  Kind kind_;
  Domain domain_;
  double radius_ = 0.0;
  std::vector<double> weights_;  // table_density: normalized node weights, row-major
  std::vector<double> cdf_;      // table_density: per-row cumulative weights
};

class BranchingKernel {
 public:
  BranchingKernel(OffspringLaw law, DispersalKernel dispersal);

  const OffspringLaw& law() const noexcept { return law_; }
  const DispersalKernel& dispersal() const noexcept { return dispersal_; }
  const Domain& domain() const noexcept { return law_.domain(); }
  double n_star() const noexcept { return law_.max_mean(); }

  /// (Phi phi)(x_k) = G_{x_k}(integral of phi dk_{x_k}); out may not alias phi.
  void apply_phi(std::span<const double> phi, std::span<double> out) const;

 private:
  OffspringLaw law_;
  DispersalKernel dispersal_;
};

GridFunction apply_phi(const BranchingKernel& k, const GridFunction& phi);
double mean_offspring(const BranchingKernel& k, std::size_t node);
/// n(x) times the integral of h against k_x.
double first_moment_integral(const BranchingKernel& k, std::size_t node, const GridFunction& h);

struct AssumptionReport {
  double n_star = 0.0;
  /// min over nodes of delta(x) - (1 - psi(x)); negative means (iii) fails.
  double death_margin = 0.0;
  std::size_t death_margin_node = 0;
  /// Smallest m with integral psi dk_x <= m psi(x) at every node.
  double m = 0.0;
  std::size_t m_node = 0;
  bool subcritical = false;
  double max_truncated_mass = 0.0;
  /// Continuity of x -> Phi phi (x) cannot be decided on a grid.
  bool continuity_checkable = false;
  std::vector<std::string> violations;

  bool ok() const noexcept { return violations.empty(); }
};

class AssumptionError : public ValidationError {
 public:
  explicit AssumptionError(AssumptionReport report);
  const AssumptionReport& report() const noexcept { return report_; }

 private:
  AssumptionReport report_;
};

/// Evaluates every checkable kernel assumption without throwing.
AssumptionReport assess_assumptions(const BranchingKernel& k, const TemperingWeight& w);
/// As assess_assumptions, throwing AssumptionError on any violation.
AssumptionReport check_assumptions(const BranchingKernel& k, const TemperingWeight& w);

}  // namespace branchlab
