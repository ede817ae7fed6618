#pragma once

#include <span>
#include <string>

#include "flowlab/rng.hpp"

namespace flowlab {

// Zero-mean factorized latent density. All three families are log-concave,
// which is what the curvature argument needs from the prior.
class Prior {
 public:
  enum class Family { Gaussian, Logistic, Laplace };

  static Prior gaussian(double sigma_psi = 1.0);
  static Prior logistic(double scale);
  static Prior laplace(double scale);

  Family family() const { return family_; }
  // Gaussian: standard deviation sigma_psi; Logistic/Laplace: scale.
  double scale() const { return scale_; }
  double variance() const;

  double logprob_dim(double z) const;
  double logprob(std::span<const double> z) const;
  // d log p / d z_j, written per coordinate.
  void dlogprob(std::span<const double> z, std::span<double> out) const;
  double sample_dim(Rng& rng) const;
  void sample(Rng& rng, std::span<double> out) const;
  // Log-density at the mode (z = 0); the peak term of the likelihood bound.
  double log_mode(std::size_t dims) const;

 private:
  Prior(Family family, double scale);
  Family family_;
  double scale_;
};

const char* prior_family_name(Prior::Family family);
Prior make_prior(const std::string& family_name, double scale);

}  // namespace flowlab
