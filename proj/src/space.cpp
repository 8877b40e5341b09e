#include "branchlab/space.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "branchlab/error.hpp"

namespace branchlab {

Domain::Domain(double lo, double hi, std::size_t nodes, Boundary boundary)
    : lo_(lo), hi_(hi), nodes_(nodes), boundary_(boundary), h_(0.0) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    throw NumericInputError("domain bounds must be finite");
  }
  if (!(hi > lo)) throw DomainError("domain requires lo < hi");
  if (nodes < 3) throw DomainError("domain requires at least 3 nodes");
  h_ = (hi - lo) / static_cast<double>(nodes - 1);
}

double Domain::reduce(double x) const {
  if (!std::isfinite(x)) throw NumericInputError("position is not finite");
  if (boundary_ == Boundary::torus) {
    double r = std::fmod(x - lo_, length());
    if (r < 0.0) r += length();
    // fmod can round up to the circumference itself.
    if (r >= length()) r = 0.0;
    return lo_ + r;
  }
  const double slack = 1e-12 * length();
  if (x < lo_ - slack || x > hi_ + slack) {
    throw DomainError("position " + std::to_string(x) + " lies outside the window [" +
                      std::to_string(lo_) + ", " + std::to_string(hi_) + "]");
  }
  return std::clamp(x, lo_, hi_);
}

std::pair<std::size_t, double> Domain::locate(double x) const {
  const double y = reduce(x);
  const double s = (y - lo_) / h_;
  auto cell = static_cast<std::size_t>(std::floor(s));
  if (cell >= nodes_ - 1) cell = nodes_ - 2;
  double frac = s - static_cast<double>(cell);
  frac = std::clamp(frac, 0.0, 1.0);
  return {cell, frac};
}

double Domain::weight(std::size_t i) const noexcept {
  if (boundary_ == Boundary::torus) return i + 1 == nodes_ ? 0.0 : h_;
  return (i == 0 || i + 1 == nodes_) ? 0.5 * h_ : h_;
}

void Domain::wrap(std::span<double> values) const noexcept {
  if (boundary_ == Boundary::torus && values.size() == nodes_) values.back() = values.front();
}

GridFunction::GridFunction(Domain domain, std::vector<double> values)
    : domain_(domain), values_(std::move(values)) {
  if (values_.size() != domain_.size()) {
    throw DomainError("grid function has " + std::to_string(values_.size()) +
                      " values for a domain of " + std::to_string(domain_.size()) + " nodes");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw NumericInputError("grid function value at node " + std::to_string(i) +
                              " is not finite");
    }
  }
  domain_.wrap(values_);
}

GridFunction GridFunction::constant(const Domain& domain, double value) {
  return GridFunction(domain, std::vector<double>(domain.size(), value));
}

double interpolate(const Domain& domain, std::span<const double> values, double x) {
  const auto [cell, frac] = domain.locate(x);
  const double left = values[cell];
  const double right =
      (domain.is_torus() && cell + 2 == domain.size()) ? values[0] : values[cell + 1];
  return left + frac * (right - left);
}

double GridFunction::interpolate(double x) const {
  return branchlab::interpolate(domain_, values_, x);
}

double GridFunction::sup_norm() const noexcept {
  double s = 0.0;
  for (double v : values_) s = std::max(s, std::abs(v));
  return s;
}

double GridFunction::min() const noexcept {
  return *std::min_element(values_.begin(), values_.end());
}

double GridFunction::max() const noexcept {
  return *std::max_element(values_.begin(), values_.end());
}

double integrate(const Domain& domain, std::span<const double> values) {
  if (values.size() != domain.size()) throw DomainError("integrand length does not match domain");
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericInputError("integrand value at node " + std::to_string(i) + " is not finite");
    }
    sum += domain.weight(i) * values[i];
  }
  return sum;
}

double integrate(const GridFunction& f) { return integrate(f.domain(), f.values()); }

TemperingWeight::TemperingWeight(const Domain& domain, double delta_star, double alpha)
    : domain_(domain),
      delta_star_(delta_star),
      alpha_(alpha),
      grid_(GridFunction::constant(domain, 0.0)) {
  if (!std::isfinite(delta_star) || !std::isfinite(alpha)) {
    throw NumericInputError("tempering parameters must be finite");
  }
  if (!(delta_star > 0.0 && delta_star < 1.0)) {
    throw DomainError("delta_star must lie in (0, 1)");
  }
  if (!(alpha > 0.0)) throw DomainError("alpha must be positive");
  // The |x| kink of psi must sit on a node for second-order quadrature.
  if (domain.lo() < 0.0 && domain.hi() > 0.0) {
    const double s = -domain.lo() / domain.spacing();
    if (std::abs(s - std::round(s)) > 1e-9) {
      throw DomainError("x = 0 must be a grid node (use an odd node count on symmetric windows)");
    }
  }
  grid_ = GridFunction::from(domain, [this](double x) { return closed_form(x); });
}

double TemperingWeight::closed_form(double x) const noexcept {
  const double top = 1.0 - delta_star_;
  if (!domain_.is_torus()) return top * std::exp(-alpha_ * std::abs(x));
  const double circ = domain_.length();
  const double d = std::abs(x - circ * std::round(x / circ));
  return top * std::exp(-alpha_ * d) * (1.0 + std::exp(-alpha_ * (circ - 2.0 * d))) /
         (1.0 + std::exp(-alpha_ * circ));
}

double TemperingWeight::operator()(double x) const {
  if (!domain_.is_torus()) domain_.reduce(x);
  else if (!std::isfinite(x)) throw NumericInputError("position is not finite");
  return closed_form(x);
}

double eval_psi(const TemperingWeight& w, double x) { return w(x); }

}  // namespace branchlab
