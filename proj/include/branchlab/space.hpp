#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace branchlab {

enum class Boundary { truncate, torus };

/// Uniform grid on [lo, hi]. In torus mode the circle has circumference
/// hi - lo and node N-1 coincides with node 0; the value stored at the last
/// node is ignored in favour of node 0 by every quadrature and interpolation.
class Domain {
 public:
  Domain(double lo, double hi, std::size_t nodes, Boundary boundary);

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  double length() const noexcept { return hi_ - lo_; }
  std::size_t size() const noexcept { return nodes_; }
  double spacing() const noexcept { return h_; }
  Boundary boundary() const noexcept { return boundary_; }
  bool is_torus() const noexcept { return boundary_ == Boundary::torus; }

  double node(std::size_t i) const noexcept { return lo_ + static_cast<double>(i) * h_; }

  /// Maps x into the window: identity inside [lo, hi] for truncate (throws
  /// DomainError outside), reduction modulo the circumference for torus.
  double reduce(double x) const;

  /// Cell containing x (after reduction) and the fractional offset in it.
  std::pair<std::size_t, double> locate(double x) const;

  /// Quadrature weight of node i for the trapezoid rule.
  double weight(std::size_t i) const noexcept;

  /// In torus mode copies node 0 into the duplicated last node.
  void wrap(std::span<double> values) const noexcept;

  bool operator==(const Domain&) const = default;

 private:
  double lo_;
  double hi_;
  std::size_t nodes_;
  Boundary boundary_;
  double h_;
};

/// Real-valued function sampled at the nodes of a Domain.
class GridFunction {
 public:
  GridFunction(Domain domain, std::vector<double> values);

  static GridFunction constant(const Domain& domain, double value);

  template <class F>
  static GridFunction from(const Domain& domain, F&& f) {
    std::vector<double> v(domain.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(domain.node(i));
    domain.wrap(v);
    return GridFunction(domain, std::move(v));
  }

  const Domain& domain() const noexcept { return domain_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  /// Piecewise-linear interpolation at an arbitrary position.
  double interpolate(double x) const;

  double sup_norm() const noexcept;
  double min() const noexcept;
  double max() const noexcept;

 private:
  Domain domain_;
  std::vector<double> values_;
};

/// Linear interpolation of raw node values on `domain`.
double interpolate(const Domain& domain, std::span<const double> values, double x);

/// Trapezoid rule over the window; torus mode wraps the endpoint.
double integrate(const GridFunction& f);
double integrate(const Domain& domain, std::span<const double> values);

/// psi(x) = (1 - delta_star) exp(-alpha |x|) on the line, or its image-sum
/// periodization (1 - delta_star) cosh(alpha (L/2 - d)) / cosh(alpha L / 2)
/// on the circle, d being the circular distance to 0.
class TemperingWeight {
 public:
  TemperingWeight(const Domain& domain, double delta_star, double alpha);

  double delta_star() const noexcept { return delta_star_; }
  double alpha() const noexcept { return alpha_; }
  const Domain& domain() const noexcept { return domain_; }
  const GridFunction& grid() const noexcept { return grid_; }

  double operator()(double x) const;

 private:
  double closed_form(double x) const noexcept;

  Domain domain_;
  double delta_star_;
  double alpha_;
  GridFunction grid_;
};

double eval_psi(const TemperingWeight& w, double x);

}  // namespace branchlab
