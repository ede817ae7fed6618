#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace flowlab {

class Rng;

// Dense row-major square matrix; used for 1x1-convolution kernels and
// finite-difference Jacobians, so orders stay small.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t order) : n_(order), a_(order * order, 0.0) {}
  SquareMatrix(std::size_t order, std::vector<double> entries);

  static SquareMatrix identity(std::size_t order);
  // Haar-ish random rotation (QR of a Gaussian draw, det forced to +1).
  static SquareMatrix random_rotation(std::size_t order, Rng& rng);

  std::size_t order() const { return n_; }
  double& operator()(std::size_t r, std::size_t c) { return a_[r * n_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return a_[r * n_ + c]; }
  double* data() { return a_.data(); }
  const double* data() const { return a_.data(); }
  std::span<const double> flat() const { return {a_.data(), a_.size()}; }

  double row_sum(std::size_t r) const;

 private:
  std::size_t n_ = 0;
  std::vector<double> a_;
};

struct LogAbsDet {
  double log_abs = 0.0;
  int sign = 1;  // +-1
};

// Partial-pivoting LU. Throws SingularMatrix when a pivot magnitude
// drops below 1e-12.
LogAbsDet lu_logabsdet(const SquareMatrix& m);
SquareMatrix mat_inverse(const SquareMatrix& m);

SquareMatrix mat_mul(const SquareMatrix& a, const SquareMatrix& b);
void mat_vec(const SquareMatrix& a, const double* x, double* y);
// y = A^T x
void mat_tvec(const SquareMatrix& a, const double* x, double* y);

}  // namespace flowlab
