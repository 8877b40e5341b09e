#include "branchlab/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace branchlab {

namespace {

constexpr double kProbabilityTolerance = 1e-12;
constexpr double kDeathTolerance = 1e-12;
constexpr std::size_t kMaxTableWidth = 256;

void require_node_values(const Domain& d, const GridFunction& f, const char* what) {
  if (!(f.domain() == d)) throw DomainError(std::string(what) + " lives on a different domain");
}

// Value at node j with the torus identification of the last node.
inline double node_value(const Domain& d, std::span<const double> f, std::size_t j) {
  return (d.is_torus() && j + 1 == d.size()) ? f[0] : f[j];
}

}  // namespace

// ---------------------------------------------------------------- OffspringLaw

OffspringLaw OffspringLaw::pure_death(const Domain& domain) {
  return OffspringLaw(Kind::pure_death, domain);
}

OffspringLaw OffspringLaw::binary_split(const GridFunction& p) {
  OffspringLaw law(Kind::binary_split, p.domain());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || p[i] > 1.0) {
      throw DomainError("binary split probability at node " + std::to_string(i) +
                        " is outside [0, 1]");
    }
  }
  law.param_.assign(p.values().begin(), p.values().end());
  return law;
}

OffspringLaw OffspringLaw::poisson_count(const GridFunction& rate) {
  OffspringLaw law(Kind::poisson_count, rate.domain());
  for (std::size_t i = 0; i < rate.size(); ++i) {
    if (rate[i] < 0.0) {
      throw DomainError("Poisson offspring rate at node " + std::to_string(i) + " is negative");
    }
  }
  law.param_.assign(rate.values().begin(), rate.values().end());
  return law;
}

OffspringLaw OffspringLaw::finite_table(const Domain& domain,
                                        std::vector<std::vector<double>> rows) {
  if (rows.size() != 1 && rows.size() != domain.size()) {
    throw DomainError("offspring table needs one row or one row per node");
  }
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.size());
  if (width == 0 || width > kMaxTableWidth) {
    throw DomainError("offspring table rows must have between 1 and 256 entries");
  }
  OffspringLaw law(Kind::finite_table, domain);
  law.width_ = width;
  law.table_.assign(domain.size() * width, 0.0);
  for (std::size_t k = 0; k < domain.size(); ++k) {
    const auto& r = rows.size() == 1 ? rows[0] : rows[k];
    double total = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (!std::isfinite(r[i])) throw NumericInputError("offspring table entry is not finite");
      if (r[i] < 0.0) {
        throw DomainError("offspring table has a negative probability at node " +
                          std::to_string(k));
      }
      law.table_[k * width + i] = r[i];
      total += r[i];
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance) {
      throw DomainError("offspring table row at node " + std::to_string(k) +
                        " does not sum to one");
    }
  }
  return law;
}

void OffspringLaw::check_node(std::size_t node) const {
  if (node >= domain_.size()) throw DomainError("node index out of range");
}

double OffspringLaw::death_probability(std::size_t node) const {
  check_node(node);
  switch (kind_) {
    case Kind::pure_death: return 1.0;
    case Kind::binary_split: return 1.0 - param_[node];
    case Kind::poisson_count: return std::exp(-param_[node]);
    case Kind::finite_table: return table_[node * width_];
  }
  return 1.0;
}

double OffspringLaw::mean(std::size_t node) const {
  check_node(node);
  switch (kind_) {
    case Kind::pure_death: return 0.0;
    case Kind::binary_split: return 2.0 * param_[node];
    case Kind::poisson_count: return param_[node];
    case Kind::finite_table: {
      double m = 0.0;
      for (std::size_t i = 1; i < width_; ++i) m += static_cast<double>(i) * table_[node * width_ + i];
      return m;
    }
  }
  return 0.0;
}

double OffspringLaw::pgf(std::size_t node, double s) const noexcept {
  switch (kind_) {
    case Kind::pure_death: return 1.0;
    case Kind::binary_split: {
      const double p = param_[node];
      return (1.0 - p) + p * s * s;
    }
    case Kind::poisson_count: return std::exp(-param_[node] * (1.0 - s));
    case Kind::finite_table: {
      const double* r = table_.data() + node * width_;
      double acc = 0.0;
      for (std::size_t i = width_; i-- > 0;) acc = acc * s + r[i];
      return acc;
    }
  }
  return 1.0;
}

double OffspringLaw::max_mean() const noexcept {
  double best = 0.0;
  for (std::size_t k = 0; k < domain_.size(); ++k) best = std::max(best, mean(k));
  return best;
}

int OffspringLaw::max_count() const noexcept {
  switch (kind_) {
    case Kind::pure_death: return 0;
    case Kind::binary_split: return 2;
    case Kind::poisson_count: return -1;
    case Kind::finite_table: {
      int top = 0;
      for (std::size_t k = 0; k < domain_.size(); ++k)
        for (std::size_t i = 0; i < width_; ++i)
          if (table_[k * width_ + i] > 0.0) top = std::max(top, static_cast<int>(i));
      return top;
    }
  }
  return 0;
}

std::span<const double> OffspringLaw::row(std::size_t node) const {
  check_node(node);
  if (kind_ != Kind::finite_table) throw DomainError("offspring law has no probability table");
  return {table_.data() + node * width_, width_};
}

int OffspringLaw::sample_count(double x, Rng& rng) const {
  if (kind_ == Kind::pure_death) return 0;
  const auto [cell, frac] = domain_.locate(x);
  const std::size_t right = (domain_.is_torus() && cell + 2 == domain_.size()) ? 0 : cell + 1;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (kind_) {
    case Kind::binary_split: {
      const double p = param_[cell] + frac * (param_[right] - param_[cell]);
      return unit(rng) < p ? 2 : 0;
    }
    case Kind::poisson_count: {
      const double rate = param_[cell] + frac * (param_[right] - param_[cell]);
      if (rate <= 0.0) return 0;
      std::poisson_distribution<int> count(rate);
      return count(rng);
    }
    case Kind::finite_table: {
      const double u = unit(rng);
      double acc = 0.0;
      for (std::size_t i = 0; i < width_; ++i) {
        const double l = table_[cell * width_ + i];
        const double r = table_[right * width_ + i];
        acc += l + frac * (r - l);
        if (u < acc) return static_cast<int>(i);
      }
      // Rounding left u above the accumulated mass.
      for (std::size_t i = width_; i-- > 0;)
        if (table_[cell * width_ + i] > 0.0 || table_[right * width_ + i] > 0.0)
          return static_cast<int>(i);
      return 0;
    }
    case Kind::pure_death: break;
  }
  return 0;
}

// ------------------------------------------------------------- DispersalKernel

DispersalKernel DispersalKernel::at_parent(const Domain& domain) {
  return DispersalKernel(Kind::at_parent, domain);
}

DispersalKernel DispersalKernel::uniform_radius(const Domain& domain, double radius) {
  if (!std::isfinite(radius)) throw NumericInputError("dispersal radius is not finite");
  if (!(radius > 0.0)) throw DomainError("dispersal radius must be positive");
  if (domain.is_torus() && 2.0 * radius >= domain.length()) {
    throw DomainError("dispersal diameter must be shorter than the circle");
  }
  DispersalKernel k(Kind::uniform_radius, domain);
  k.radius_ = radius;
  return k;
}

DispersalKernel DispersalKernel::table_density(const Domain& domain,
                                               std::vector<std::vector<double>> rows) {
  const std::size_t n = domain.size();
  if (rows.size() != n) throw DomainError("dispersal table needs one row per node");
  DispersalKernel k(Kind::table_density, domain);
  k.weights_.assign(n * n, 0.0);
  k.cdf_.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != n) throw DomainError("dispersal table row has the wrong length");
    double mass = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double rho = rows[i][j];
      if (!std::isfinite(rho)) throw NumericInputError("dispersal density is not finite");
      if (rho < 0.0) throw DomainError("dispersal density is negative");
      k.weights_[i * n + j] = domain.weight(j) * rho;
      mass += k.weights_[i * n + j];
    }
    if (!(mass > 0.0)) {
      throw DomainError("dispersal row at node " + std::to_string(i) + " has no mass");
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      k.weights_[i * n + j] /= mass;
      acc += k.weights_[i * n + j];
      k.cdf_[i * n + j] = acc;
    }
  }
  return k;
}

void DispersalKernel::average(std::span<const double> f, std::span<double> out) const {
  const Domain& d = domain_;
  const std::size_t n = d.size();
  if (f.size() != n || out.size() != n) throw DomainError("dispersal input length mismatch");
  switch (kind_) {
    case Kind::at_parent:
      std::copy(f.begin(), f.end(), out.begin());
      break;
    case Kind::uniform_radius: {
      std::vector<double> cumulative(n, 0.0);
      for (std::size_t j = 1; j < n; ++j) {
        cumulative[j] = cumulative[j - 1] +
                        0.5 * d.spacing() * (node_value(d, f, j - 1) + node_value(d, f, j));
      }
      // Nodes are equally spaced, so x_i -/+ r sit at a fixed fractional
      // index offset from i.
      const auto cells = static_cast<long>(n - 1);
      const double h = d.spacing();
      const double period = cumulative.back();
      const double reach = radius_ / h;
      const double lo_cell = std::floor(-reach);
      const double lo_frac = -reach - lo_cell;
      const double hi_cell = std::floor(reach);
      const double hi_frac = reach - hi_cell;
      auto primitive = [&](long cell, double frac) {
        double shift = 0.0;
        if (d.is_torus()) {
          long q = cell / cells;
          if (cell - q * cells < 0) --q;
          cell -= q * cells;
          shift = static_cast<double>(q) * period;
        } else if (cell < 0) {
          return 0.0;
        } else if (cell >= cells) {
          return period;
        }
        const auto c = static_cast<std::size_t>(cell);
        const double fl = node_value(d, f, c);
        const double fr = node_value(d, f, c + 1);
        return shift + cumulative[c] + h * frac * (fl + 0.5 * frac * (fr - fl));
      };
      for (std::size_t i = 0; i < n; ++i) {
        const auto base = static_cast<long>(i);
        const long ca = base + static_cast<long>(lo_cell);
        const long cb = base + static_cast<long>(hi_cell);
        double width = 2.0 * radius_;
        if (!d.is_torus()) {
          const double sa = std::max(0.0, static_cast<double>(ca) + lo_frac);
          const double sb = std::min(static_cast<double>(cells), static_cast<double>(cb) + hi_frac);
          width = (sb - sa) * h;
        }
        out[i] = (primitive(cb, hi_frac) - primitive(ca, lo_frac)) / width;
      }
      break;
    }
    case Kind::table_density:
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        const double* w = weights_.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) acc += w[j] * f[j];
        out[i] = acc;
      }
      break;
  }
  d.wrap(out);
}

double DispersalKernel::average_at(std::size_t node, std::span<const double> f) const {
  if (node >= domain_.size()) throw DomainError("node index out of range");
  std::vector<double> out(domain_.size());
  average(f, out);
  return out[node];
}

double DispersalKernel::max_truncated_mass() const noexcept {
  if (kind_ != Kind::uniform_radius || domain_.is_torus()) return 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < domain_.size(); ++i) {
    const double a = std::max(domain_.node(i) - radius_, domain_.lo());
    const double b = std::min(domain_.node(i) + radius_, domain_.hi());
    worst = std::max(worst, 1.0 - (b - a) / (2.0 * radius_));
  }
  return worst;
}

double DispersalKernel::sample(double x, Rng& rng) const {
  switch (kind_) {
    case Kind::at_parent: return domain_.reduce(x);
    case Kind::uniform_radius: {
      std::uniform_real_distribution<double> offset(-radius_, radius_);
      if (domain_.is_torus()) return domain_.reduce(x + offset(rng));
      // Rejection against the window matches the renormalized analytic kernel.
      for (;;) {
        const double y = x + offset(rng);
        if (y >= domain_.lo() && y <= domain_.hi()) return y;
      }
    }
    case Kind::table_density: {
      const auto [cell, frac] = domain_.locate(x);
      std::size_t row = frac < 0.5 ? cell : cell + 1;
      if (domain_.is_torus() && row + 1 == domain_.size()) row = 0;
      const std::size_t n = domain_.size();
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const double u = unit(rng);
      const auto* first = cdf_.data() + row * n;
      const auto* hit = std::upper_bound(first, first + n, u);
      std::size_t j = static_cast<std::size_t>(hit - first);
      if (j >= n) j = n - 1;
      return domain_.node(j);
    }
  }
  return x;
}

// ------------------------------------------------------------- BranchingKernel

BranchingKernel::BranchingKernel(OffspringLaw law, DispersalKernel dispersal)
    : law_(std::move(law)), dispersal_(std::move(dispersal)) {
  if (!(law_.domain() == dispersal_.domain())) {
    throw DomainError("offspring law and dispersal kernel live on different domains");
  }
}

void BranchingKernel::apply_phi(std::span<const double> phi, std::span<double> out) const {
  const std::size_t n = domain().size();
  if (phi.size() != n || out.size() != n) throw DomainError("phi length does not match domain");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(phi[i] >= 0.0 && phi[i] <= 1.0)) {
      throw DomainError("phi(x) at node " + std::to_string(i) + " = " + std::to_string(phi[i]) +
                        " is outside [0, 1]");
    }
  }
  dispersal_.average(phi, out);
  for (std::size_t i = 0; i < n; ++i) {
    // The average of values in [0, 1] can leave it only through rounding.
    const double s = std::clamp(out[i], 0.0, 1.0);
    out[i] = std::clamp(law_.pgf(i, s), law_.death_probability(i), 1.0);
  }
  domain().wrap(out);
}

GridFunction apply_phi(const BranchingKernel& k, const GridFunction& phi) {
  require_node_values(k.domain(), phi, "phi");
  std::vector<double> out(phi.size());
  k.apply_phi(phi.values(), out);
  return GridFunction(phi.domain(), std::move(out));
}

double mean_offspring(const BranchingKernel& k, std::size_t node) { return k.law().mean(node); }

double first_moment_integral(const BranchingKernel& k, std::size_t node, const GridFunction& h) {
  require_node_values(k.domain(), h, "integrand");
  const double n = k.law().mean(node);
  if (n == 0.0) return 0.0;
  return n * k.dispersal().average_at(node, h.values());
}

// ----------------------------------------------------------------- assumptions

AssumptionError::AssumptionError(AssumptionReport report)
    : ValidationError([&] {
        std::ostringstream os;
        os << "kernel assumptions violated:";
        for (const auto& v : report.violations) os << "\n  " << v;
        return os.str();
      }()),
      report_(std::move(report)) {}

AssumptionReport assess_assumptions(const BranchingKernel& k, const TemperingWeight& w) {
  if (!(k.domain() == w.domain())) throw DomainError("kernel and weight live on different domains");
  const Domain& d = k.domain();
  const auto& psi = w.grid();
  AssumptionReport rep;
  rep.n_star = k.n_star();
  rep.subcritical = rep.n_star < 1.0;
  rep.max_truncated_mass = k.dispersal().max_truncated_mass();

  rep.death_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double margin = k.law().death_probability(i) - (1.0 - psi[i]);
    if (margin < rep.death_margin) {
      rep.death_margin = margin;
      rep.death_margin_node = i;
    }
  }
  if (rep.death_margin < -kDeathTolerance) {
    std::ostringstream os;
    os << "(iii) death probability below 1 - psi at node " << rep.death_margin_node
       << " (x = " << d.node(rep.death_margin_node) << "), margin " << rep.death_margin;
    rep.violations.push_back(os.str());
  }

  if (!std::isfinite(rep.n_star)) rep.violations.push_back("(ii) mean offspring count is unbounded");

  std::vector<double> spread(d.size());
  k.dispersal().average(psi.values(), spread);
  rep.m = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double ratio = spread[i] / psi[i];
    if (ratio > rep.m) {
      rep.m = ratio;
      rep.m_node = i;
    }
  }
  if (!std::isfinite(rep.m) || !(rep.m > 0.0)) {
    rep.violations.push_back("(iv) dispersal constant m is not a positive finite number");
  }
  return rep;
}

AssumptionReport check_assumptions(const BranchingKernel& k, const TemperingWeight& w) {
  auto rep = assess_assumptions(k, w);
  if (!rep.ok()) throw AssumptionError(rep);
  return rep;
}

}  // namespace branchlab
