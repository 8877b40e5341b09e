#include "branchlab/quadrature.hpp"

#include <cstddef>

namespace branchlab {

namespace {

double simpson_even(std::span<const double> f, double h) {
  const std::size_t k = f.size() - 1;
  double odd = 0.0, even = 0.0;
  for (std::size_t j = 1; j < k; ++j) (j % 2 ? odd : even) += f[j];
  return h / 3.0 * (f[0] + f[k] + 4.0 * odd + 2.0 * even);
}

}  // namespace

double simpson(std::span<const double> f, double h) {
  if (f.size() < 2) return 0.0;
  const std::size_t k = f.size() - 1;
  if (k == 1) return 0.5 * h * (f[0] + f[1]);
  if (k % 2 == 0) return simpson_even(f, h);
  const double head = k > 3 ? simpson_even(f.first(k - 2), h) : 0.0;
  const auto t = f.last(4);
  return head + 3.0 * h / 8.0 * (t[0] + 3.0 * t[1] + 3.0 * t[2] + t[3]);
}

}  // namespace branchlab
