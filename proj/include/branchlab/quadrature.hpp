#pragma once

#include <span>

namespace branchlab {

/// Composite Simpson rule on equally spaced samples f_0..f_K; an odd K uses
/// the 3/8 rule on the last three cells and K = 1 falls back to the trapezoid.
double simpson(std::span<const double> f, double h);

}  // namespace branchlab
