#pragma once

#include <functional>
#include <string>
#include <vector>

#include "flowlab/finite_diff.hpp"
#include "flowlab/likelihood.hpp"
#include "flowlab/model.hpp"
#include "flowlab/moments.hpp"

namespace flowlab {

// alpha_c = prod_k (row sum c of U_k) over the model's 1x1-convolution
// kernels: the per-channel diagonal sensitivity of a constant-volume flow.
// Lives in the convolutions' shared channel space (input channels when the
// model has no convolutions).
struct AlphaCoefficients {
  std::vector<double> alpha;
};

AlphaCoefficients alpha_coeffs(const FlowModel& model);

struct GapPrediction {
  std::vector<double> per_channel;  // -alpha_c^2 (S_q,c - S_p,c) / (2 sigma^2)
  double total = 0.0;
  double sigma_psi = 0.0;
  std::vector<double> alpha;
  std::vector<double> sq, sp;  // the channel variance sums that went in
};

// Curvature x covariance trace for a constant-volume flow with a Gaussian
// prior, under equal means and diagonal covariances.
GapPrediction predict_gap_cv(const AlphaCoefficients& alphas, const DataMoments& moments_q,
                             const DataMoments& moments_p, double sigma_psi);

// Generic second-order estimate of E_q[log p] - E_p[log p] around x0:
// grad^T (mu_q - mu_p) + 1/2 sum_d H_dd (var_q,d - var_p,d), with the
// gradient and diagonal Hessian taken by finite differences. Exact whenever
// log p is quadratic.
double second_order_gap(const FlowModel& model, const Prior& prior, const std::vector<double>& x0,
                        const DataMoments& moments_q, const DataMoments& moments_p,
                        double eps = 1e-3);

struct BoundReport {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool satisfied = false;
  double worst_margin = 0.0;  // max over checks of lhs - rhs
  std::size_t checked = 0;
  std::string note;
};

// log|det J| <= sum_j log||J e_j|| <= D log(max column norm).
BoundReport hadamard_check(const SquareMatrix& jacobian);
// Same check with finite-difference Jacobians at each point of a batch.
BoundReport hadamard_check(const FlowModel& model, const Tensor& points, double eps = kFdEps);

// Residuals of the constant-volume curvature identities at x0: the volume
// term has zero diagonal Hessian, and with zero coupling nets the prior
// term's diagonal Hessian is -alpha_c^2 / sigma_psi^2. The latter is only
// asserted when the coupling nets are exactly zero; otherwise it is
// reported as a diagnostic.
std::vector<BoundReport> hessian_check_cv(const FlowModel& model, const Prior& prior,
                                          const std::vector<double>& x0, double eps = 1e-3);

struct SampleSpec {
  std::function<std::vector<double>(Rng&)> draw;
  std::vector<double> mean;
  double total_variance = 0.0;  // E ||x - mu||^2
};

// Chebyshev-through-Lipschitz bound: P(||f(x) - f(mu)|| >= delta) <=
// L^2 sigma_x^2 / delta^2, checked empirically per delta. Sampled pairs
// that contradict the claimed constant raise InvalidLipschitz.
std::vector<BoundReport> concentration_check(const VectorFn& f, double lipschitz,
                                             const SampleSpec& xdist,
                                             const std::vector<double>& deltas,
                                             std::size_t n_samples, Rng& rng);

struct SweepConfig {
  std::size_t n_train = 2048;
  std::size_t n_eval = 256;
  double noise = 0.1;
  std::size_t couplings = 4;
  std::size_t hidden = 24;
  std::size_t steps = 800;
  double lr = 1e-3;
  std::size_t batch = 128;
  std::uint64_t seed = 7;
  par::Exec exec = par::Exec::Parallel;
};

struct BoundsSweepRow {
  std::size_t dim = 0;
  double mean_prior = 0.0;
  double mean_volume = 0.0;
  double max_volume = 0.0;  // sigmoid parametrization keeps this <= 0
  double lipschitz_hat = 0.0;
  BoundReport peak_bound;  // per-point total <= prior log-mode + D log L_hat
};

// Trains one NVP flow per dimensionality on replicated two-moons data and
// records both likelihood terms plus the peak/volume bound check.
std::vector<BoundsSweepRow> simulate_bounds(const std::vector<std::size_t>& dims, ScaleParam variant,
                                            const SweepConfig& cfg);

// Least-squares slope of y against x; the sweep's trend statistic.
double trend_slope(const std::vector<double>& x, const std::vector<double>& y);

// log(1/M sum_m p(x; theta_m)) via max-shifted log-sum-exp, per example.
std::vector<double> ensemble_loglik(const std::vector<const FlowModel*>& models, const Prior& prior,
                                    const Tensor& x, par::Exec mode = par::Exec::Parallel);

struct CodeStats {
  std::vector<double> mean;    // per latent dimension
  std::vector<double> stddev;  // per latent dimension, 1/(N-1)
  std::vector<double> norm_over_sqrt_d;  // per example
};

CodeStats latent_stats(const FlowModel& model, const Tensor& data,
                       par::Exec mode = par::Exec::Parallel);

// True when every coupling layer's parameters are exactly zero.
bool coupling_nets_zero(const FlowModel& model);

}  // namespace flowlab
