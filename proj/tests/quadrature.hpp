#pragma once

// Shared test oracle: 2-D normalization check by composite Simpson
// quadrature over a sample-derived box, refined until stable.

#include <cmath>

#include "flowlab/likelihood.hpp"

namespace flowlab::testing {

inline double integrate_density_2d(const FlowModel& model, const Prior& prior, double lo0, double hi0,
                                   double lo1, double hi1, double tol) {
  double prev = -1.0;
  for (std::size_t cells = 64; cells <= 1024; cells *= 2) {
    const std::size_t n0 = cells + 1;
    Tensor grid({n0 * n0, 2});
    const double h0 = (hi0 - lo0) / static_cast<double>(cells);
    const double h1 = (hi1 - lo1) / static_cast<double>(cells);
    for (std::size_t i = 0; i < n0; ++i)
      for (std::size_t j = 0; j < n0; ++j) {
        grid[(i * n0 + j) * 2 + 0] = lo0 + h0 * static_cast<double>(i);
        grid[(i * n0 + j) * 2 + 1] = lo1 + h1 * static_cast<double>(j);
      }
    const auto rows = log_likelihood(model, prior, grid);
    const auto w = [&](std::size_t k, std::size_t n) -> double {
      if (k == 0 || k == n - 1) return 1.0;
      return k % 2 == 1 ? 4.0 : 2.0;
    };
    double acc = 0.0;
    for (std::size_t i = 0; i < n0; ++i)
      for (std::size_t j = 0; j < n0; ++j)
        acc += w(i, n0) * w(j, n0) * std::exp(rows[i * n0 + j].total);
    const double integral = acc * h0 * h1 / 9.0;
    if (prev >= 0.0 && std::fabs(integral - prev) < tol) return integral;
    prev = integral;
  }
  return prev;
}

// Integration box: bounding box of model samples, grown by half its extent
// per side, which comfortably covers the 99.9% mass region.
inline double integrate_model_density(const FlowModel& model, const Prior& prior, Rng& rng) {
  const std::size_t n = 4000;
  Tensor z({n, 2});
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = prior.sample_dim(rng);
  const Tensor x = model.inverse(z);
  double lo0 = 1e300, hi0 = -1e300, lo1 = 1e300, hi1 = -1e300;
  for (std::size_t i = 0; i < n; ++i) {
    lo0 = std::min(lo0, x[i * 2 + 0]);
    hi0 = std::max(hi0, x[i * 2 + 0]);
    lo1 = std::min(lo1, x[i * 2 + 1]);
    hi1 = std::max(hi1, x[i * 2 + 1]);
  }
  const double m0 = 0.5 * (hi0 - lo0) + 0.1, m1 = 0.5 * (hi1 - lo1) + 0.1;
  return integrate_density_2d(model, prior, lo0 - m0, hi0 + m0, lo1 - m1, hi1 + m1, 1e-3);
}

}  // namespace flowlab::testing
