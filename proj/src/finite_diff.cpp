#include "flowlab/finite_diff.hpp"

#include "flowlab/errors.hpp"

namespace flowlab {

SquareMatrix finite_diff_jacobian(const VectorFn& fn, const std::vector<double>& x0, double eps,
                                  par::Exec mode) {
  const std::size_t d = x0.size();
  SquareMatrix jac(d);
  par::for_each(d, mode, [&](std::size_t j) {
    std::vector<double> xp = x0;
    std::vector<double> xm = x0;
    xp[j] += eps;
    xm[j] -= eps;
    const std::vector<double> fp = fn(xp);
    const std::vector<double> fm = fn(xm);
    if (fp.size() != d || fm.size() != d) {
      throw ShapeMismatch("finite_diff_jacobian requires fn: R^D -> R^D");
    }
    for (std::size_t i = 0; i < d; ++i) jac(i, j) = (fp[i] - fm[i]) / (2.0 * eps);
  });
  return jac;
}

std::vector<double> finite_diff_gradient(const ScalarFn& fn, const std::vector<double>& x0, double eps) {
  const std::size_t d = x0.size();
  std::vector<double> grad(d);
  std::vector<double> x = x0;
  for (std::size_t j = 0; j < d; ++j) {
    const double saved = x[j];
    x[j] = saved + eps;
    const double fp = fn(x);
    x[j] = saved - eps;
    const double fm = fn(x);
    x[j] = saved;
    grad[j] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

std::vector<double> finite_diff_hessian_diag(const ScalarFn& fn, const std::vector<double>& x0, double eps) {
  const std::size_t d = x0.size();
  std::vector<double> diag(d);
  const double f0 = fn(x0);
  std::vector<double> x = x0;
  for (std::size_t j = 0; j < d; ++j) {
    const double saved = x[j];
    x[j] = saved + eps;
    const double fp = fn(x);
    x[j] = saved - eps;
    const double fm = fn(x);
    x[j] = saved;
    diag[j] = (fp - 2.0 * f0 + fm) / (eps * eps);
  }
  return diag;
}

}  // namespace flowlab
