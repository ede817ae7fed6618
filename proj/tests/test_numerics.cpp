#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "flowlab/errors.hpp"
#include "flowlab/finite_diff.hpp"
#include "flowlab/linalg.hpp"
#include "flowlab/rng.hpp"
#include "flowlab/tensor.hpp"
#include "flowlab/tensor_io.hpp"

using namespace flowlab;

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.batch() == 2);
  CHECK(t.example_size() == 12);
  CHECK(t.example_shape() == Shape{3, 4});
  CHECK(t.all_finite());
  t[5] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeMismatch);
}

TEST_CASE("lu_logabsdet identity and analytic cases") {
  auto id3 = lu_logabsdet(SquareMatrix::identity(3));
  CHECK(id3.log_abs == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(id3.sign == 1);

  SquareMatrix diag(2, {2.0, 0.0, 0.0, 3.0});
  auto d = lu_logabsdet(diag);
  CHECK(d.log_abs == doctest::Approx(std::log(6.0)).epsilon(1e-10));
  CHECK(d.sign == 1);

  SquareMatrix swap(2, {0.0, 1.0, 1.0, 0.0});
  auto s = lu_logabsdet(swap);
  CHECK(s.log_abs == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.sign == -1);

  SquareMatrix singular(2, {1.0, 2.0, 2.0, 4.0});
  CHECK_THROWS_AS(lu_logabsdet(singular), SingularMatrix);
}

TEST_CASE("logabsdet is additive over products") {
  Rng rng(101);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 2 + rng.next_u64() % 5;
    SquareMatrix a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        a(i, j) = rng.normal() * 0.4;
        b(i, j) = rng.normal() * 0.4;
      }
      a(i, i) += 2.0;  // keep both well-conditioned
      b(i, i) += 2.0;
    }
    const double sum = lu_logabsdet(a).log_abs + lu_logabsdet(b).log_abs;
    const double prod = lu_logabsdet(mat_mul(a, b)).log_abs;
    CHECK(prod == doctest::Approx(sum).epsilon(0).scale(1).epsilon(1e-8));
  }
}

TEST_CASE("mat_inverse") {
  SquareMatrix id4 = SquareMatrix::identity(4);
  SquareMatrix inv_id = mat_inverse(id4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(inv_id(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));

  SquareMatrix diag(2, {2.0, 0.0, 0.0, 4.0});
  SquareMatrix invd = mat_inverse(diag);
  CHECK(invd(0, 0) == doctest::Approx(0.5));
  CHECK(invd(1, 1) == doctest::Approx(0.25));
  CHECK(invd(0, 1) == doctest::Approx(0.0));

  // residual oracle on a random well-conditioned 5x5
  Rng rng(7);
  SquareMatrix m(5);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) m(i, j) = rng.normal() * 0.3;
    m(i, i) += 2.0;
  }
  SquareMatrix inv = mat_inverse(m);
  SquareMatrix prod = mat_mul(m, inv);
  double worst = 0.0;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) worst = std::max(worst, std::fabs(prod(i, j) - (i == j ? 1.0 : 0.0)));
  CHECK(worst < 1e-8);

  SquareMatrix singular(3);
  CHECK_THROWS_AS(mat_inverse(singular), SingularMatrix);
}

TEST_CASE("finite difference jacobian") {
  const VectorFn identity_fn = [](const std::vector<double>& x) { return x; };
  SquareMatrix j = finite_diff_jacobian(identity_fn, {0.3, -0.7, 1.2});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::fabs(j(i, k) - (i == k ? 1.0 : 0.0)) < 1e-9);

  // linear map recovers the matrix
  Rng rng(11);
  SquareMatrix u(4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 4; ++k) u(i, k) = rng.normal();
  const VectorFn linear = [&](const std::vector<double>& x) {
    std::vector<double> y(4);
    mat_vec(u, x.data(), y.data());
    return y;
  };
  SquareMatrix ju = finite_diff_jacobian(linear, {0.1, 0.2, -0.4, 0.9}, 1e-5);
  double worst = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 4; ++k) worst = std::max(worst, std::fabs(ju(i, k) - u(i, k)));
  CHECK(worst < 1e-6);
}

TEST_CASE("finite difference hessian diagonal") {
  const ScalarFn quad = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return -0.5 * s;
  };
  auto h = finite_diff_hessian_diag(quad, {0.4, -1.1, 0.0});
  for (double v : h) CHECK(v == doctest::Approx(-1.0).epsilon(1e-4));

  const double sigma2 = 4.0;
  const ScalarFn scaled = [&](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return -0.5 * s / sigma2;
  };
  auto hs = finite_diff_hessian_diag(scaled, {1.0, 2.0});
  for (double v : hs) CHECK(v == doctest::Approx(-0.25).epsilon(1e-4));
}

TEST_CASE("rng determinism and stream independence") {
  Rng a(42), b(42);
  for (int i = 0; i < 10000; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c(42), d(43);
  int differ = 0;
  for (int i = 0; i < 64; ++i) differ += c.next_u64() != d.next_u64();
  CHECK(differ > 60);

  Rng parent(9);
  Rng c0 = parent.child(0), c1 = parent.child(1), c0b = parent.child(0);
  CHECK(c0.next_u64() == c0b.next_u64());
  CHECK(c0.next_u64() != c1.next_u64());

  Rng u(5);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }

  // crude moment sanity for the normal sampler
  Rng n(6);
  double sum = 0.0, sum2 = 0.0;
  const int count = 200000;
  for (int i = 0; i < count; ++i) {
    const double v = n.normal();
    sum += v;
    sum2 += v * v;
  }
  CHECK(std::fabs(sum / count) < 0.01);
  CHECK(std::fabs(sum2 / count - 1.0) < 0.02);
}

TEST_CASE("tensor container round trip") {
  Tensor t({2, 3});
  Rng rng(3);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();

  std::stringstream buf;
  write_tensor(buf, t);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "FLT1");

  std::stringstream in(bytes);
  Tensor back = read_tensor(in);
  CHECK(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);

  // writing the loaded tensor reproduces the bytes exactly
  std::stringstream buf2;
  write_tensor(buf2, back);
  CHECK(buf2.str() == bytes);

  std::stringstream bad("XXXX????");
  CHECK_THROWS_AS(read_tensor(bad), BadMagic);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 9));
  CHECK_THROWS_AS(read_tensor(truncated), TruncatedFile);
}
