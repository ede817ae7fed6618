#include "flowlab/linalg.hpp"

#include <cmath>
#include <string>

#include "flowlab/errors.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {
namespace {

constexpr double kPivotTolerance = 1e-12;

// In-place factorization with row pivoting; returns permutation sign.
int lu_decompose(SquareMatrix& a, std::vector<std::size_t>& perm) {
  const std::size_t n = a.order();
  perm.resize(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  int sign = 1;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    double best = std::fabs(a(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      const double v = std::fabs(a(i, k));
      if (v > best) {
        best = v;
        pivot = i;
      }
    }
    if (best < kPivotTolerance) {
      throw SingularMatrix("pivot " + std::to_string(best) + " below tolerance at column " +
                           std::to_string(k));
    }
    if (pivot != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(pivot, j));
      std::swap(perm[k], perm[pivot]);
      sign = -sign;
    }
    const double inv = 1.0 / a(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      a(i, k) *= inv;
      const double f = a(i, k);
      for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= f * a(k, j);
    }
  }
  return sign;
}

}  // namespace

SquareMatrix::SquareMatrix(std::size_t order, std::vector<double> entries) : n_(order), a_(std::move(entries)) {
  if (a_.size() != n_ * n_) {
    throw ShapeMismatch("square matrix of order " + std::to_string(n_) + " needs " +
                        std::to_string(n_ * n_) + " entries, got " + std::to_string(a_.size()));
  }
}

SquareMatrix SquareMatrix::identity(std::size_t order) {
  SquareMatrix m(order);
  for (std::size_t i = 0; i < order; ++i) m(i, i) = 1.0;
  return m;
}

SquareMatrix SquareMatrix::random_rotation(std::size_t order, Rng& rng) {
  // Gram-Schmidt QR of a Gaussian matrix, columns sign-fixed.
  SquareMatrix q(order);
  std::vector<std::vector<double>> cols(order, std::vector<double>(order));
  for (auto& col : cols)
    for (auto& v : col) v = rng.normal();
  for (std::size_t j = 0; j < order; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < order; ++i) dot += cols[j][i] * cols[k][i];
      for (std::size_t i = 0; i < order; ++i) cols[j][i] -= dot * cols[k][i];
    }
    double norm = 0.0;
    for (double v : cols[j]) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-8) {
      // Degenerate draw; fall back to a basis vector.
      for (auto& v : cols[j]) v = 0.0;
      cols[j][j] = 1.0;
      norm = 1.0;
    }
    for (auto& v : cols[j]) v /= norm;
  }
  for (std::size_t j = 0; j < order; ++j)
    for (std::size_t i = 0; i < order; ++i) q(i, j) = cols[j][i];
  // Force det = +1 so the kernel starts volume-neutral.
  if (lu_logabsdet(q).sign < 0) {
    for (std::size_t i = 0; i < order; ++i) q(i, 0) = -q(i, 0);
  }
  return q;
}

double SquareMatrix::row_sum(std::size_t r) const {
  double s = 0.0;
  for (std::size_t j = 0; j < n_; ++j) s += (*this)(r, j);
  return s;
}

LogAbsDet lu_logabsdet(const SquareMatrix& m) {
  SquareMatrix a = m;
  std::vector<std::size_t> perm;
  int sign = lu_decompose(a, perm);
  double log_abs = 0.0;
  for (std::size_t i = 0; i < a.order(); ++i) {
    const double d = a(i, i);
    if (d < 0.0) sign = -sign;
    log_abs += std::log(std::fabs(d));
  }
  return {log_abs, sign};
}

SquareMatrix mat_inverse(const SquareMatrix& m) {
  const std::size_t n = m.order();
  SquareMatrix a = m;
  std::vector<std::size_t> perm;
  lu_decompose(a, perm);
  SquareMatrix inv(n);
  std::vector<double> col(n);
  for (std::size_t j = 0; j < n; ++j) {
    // Solve A x = e_j using the factorization: forward then back substitution.
    for (std::size_t i = 0; i < n; ++i) col[i] = perm[i] == j ? 1.0 : 0.0;
    for (std::size_t i = 1; i < n; ++i) {
      double s = col[i];
      for (std::size_t k = 0; k < i; ++k) s -= a(i, k) * col[k];
      col[i] = s;
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = col[ii];
      for (std::size_t k = ii + 1; k < n; ++k) s -= a(ii, k) * col[k];
      col[ii] = s / a(ii, ii);
    }
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
  }
  return inv;
}

SquareMatrix mat_mul(const SquareMatrix& a, const SquareMatrix& b) {
  const std::size_t n = a.order();
  if (b.order() != n) throw ShapeMismatch("matrix product order mismatch");
  SquareMatrix c(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const double f = a(i, k);
      for (std::size_t j = 0; j < n; ++j) c(i, j) += f * b(k, j);
    }
  return c;
}

void mat_vec(const SquareMatrix& a, const double* x, double* y) {
  const std::size_t n = a.order();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a(i, j) * x[j];
    y[i] = s;
  }
}

void mat_tvec(const SquareMatrix& a, const double* x, double* y) {
  const std::size_t n = a.order();
  for (std::size_t j = 0; j < n; ++j) y[j] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i];
    for (std::size_t j = 0; j < n; ++j) y[j] += a(i, j) * xi;
  }
}

}  // namespace flowlab
