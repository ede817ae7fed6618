#include "flowlab/prior.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "flowlab/errors.hpp"

namespace flowlab {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

Prior::Prior(Family family, double scale) : family_(family), scale_(scale) {
  if (!(scale > 0.0)) throw InvalidConfig("prior scale must be positive");
}

Prior Prior::gaussian(double sigma_psi) { return Prior(Family::Gaussian, sigma_psi); }
Prior Prior::logistic(double scale) { return Prior(Family::Logistic, scale); }
Prior Prior::laplace(double scale) { return Prior(Family::Laplace, scale); }

double Prior::variance() const {
  switch (family_) {
    case Family::Gaussian:
      return scale_ * scale_;
    case Family::Logistic:
      return scale_ * scale_ * std::numbers::pi * std::numbers::pi / 3.0;
    case Family::Laplace:
      return 2.0 * scale_ * scale_;
  }
  return 0.0;
}

double Prior::logprob_dim(double z) const {
  switch (family_) {
    case Family::Gaussian:
      return -0.5 * kLog2Pi - std::log(scale_) - 0.5 * (z / scale_) * (z / scale_);
    case Family::Logistic: {
      const double u = z / scale_;
      return -u - 2.0 * softplus(-u) - std::log(scale_);
    }
    case Family::Laplace:
      return -std::log(2.0 * scale_) - std::fabs(z) / scale_;
  }
  return 0.0;
}

double Prior::logprob(std::span<const double> z) const {
  double s = 0.0;
  for (double v : z) s += logprob_dim(v);
  return s;
}

void Prior::dlogprob(std::span<const double> z, std::span<double> out) const {
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double v = z[i];
    switch (family_) {
      case Family::Gaussian:
        out[i] = -v / (scale_ * scale_);
        break;
      case Family::Logistic:
        out[i] = (-1.0 + 2.0 * sigmoid(-v / scale_)) / scale_;
        break;
      case Family::Laplace:
        out[i] = (v > 0.0 ? -1.0 : v < 0.0 ? 1.0 : 0.0) / scale_;
        break;
    }
  }
}

double Prior::sample_dim(Rng& rng) const {
  switch (family_) {
    case Family::Gaussian:
      return scale_ * rng.normal();
    case Family::Logistic: {
      double u = rng.uniform();
      while (u <= 0.0 || u >= 1.0) u = rng.uniform();
      return scale_ * std::log(u / (1.0 - u));
    }
    case Family::Laplace: {
      double u = rng.uniform();
      while (u <= 0.0 || u >= 1.0) u = rng.uniform();
      return u < 0.5 ? scale_ * std::log(2.0 * u) : -scale_ * std::log(2.0 * (1.0 - u));
    }
  }
  return 0.0;
}

void Prior::sample(Rng& rng, std::span<double> out) const {
  for (double& v : out) v = sample_dim(rng);
}

double Prior::log_mode(std::size_t dims) const { return static_cast<double>(dims) * logprob_dim(0.0); }

const char* prior_family_name(Prior::Family family) {
  switch (family) {
    case Prior::Family::Gaussian:
      return "gaussian";
    case Prior::Family::Logistic:
      return "logistic";
    case Prior::Family::Laplace:
      return "laplace";
  }
  return "?";
}

Prior make_prior(const std::string& family_name, double scale) {
  if (family_name == "gaussian") return Prior::gaussian(scale);
  if (family_name == "logistic") return Prior::logistic(scale);
  if (family_name == "laplace") return Prior::laplace(scale);
  throw InvalidConfig("unknown prior family: " + family_name);
}

}  // namespace flowlab
