#pragma once

#include <functional>
#include <vector>

#include "flowlab/linalg.hpp"
#include "flowlab/parallel.hpp"

namespace flowlab {

using VectorFn = std::function<std::vector<double>(const std::vector<double>&)>;
using ScalarFn = std::function<double(const std::vector<double>&)>;

// Central-difference oracles used to verify every analytic derivative in
// the repo. Default eps balances truncation against rounding at 64 bit.
inline constexpr double kFdEps = 1e-5;

// J[i][j] = d fn_i / d x_j; fn must map R^D -> R^D.
SquareMatrix finite_diff_jacobian(const VectorFn& fn, const std::vector<double>& x0,
                                  double eps = kFdEps, par::Exec mode = par::Exec::Serial);

std::vector<double> finite_diff_gradient(const ScalarFn& fn, const std::vector<double>& x0,
                                         double eps = kFdEps);

// (fn(x+eps e_j) - 2 fn(x) + fn(x-eps e_j)) / eps^2 per coordinate.
std::vector<double> finite_diff_hessian_diag(const ScalarFn& fn, const std::vector<double>& x0,
                                             double eps = kFdEps);

}  // namespace flowlab
