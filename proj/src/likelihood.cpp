#include "flowlab/likelihood.hpp"

#include <cmath>

#include "flowlab/errors.hpp"

namespace flowlab {

double bpd_from_nats(double total_nats, std::size_t dims) {
  return -total_nats / (static_cast<double>(dims) * std::numbers::ln2) + 8.0;
}

LikelihoodBreakdown log_likelihood_one(const FlowModel& model, const Prior& prior, const double* x) {
  std::vector<double> z(model.dim());
  LikelihoodBreakdown b;
  model.forward_one(x, z.data(), b.volume_term, nullptr);
  b.prior_term = prior.logprob({z.data(), z.size()});
  b.total = b.prior_term + b.volume_term;
  b.bpd = bpd_from_nats(b.total, model.dim());
  return b;
}

std::vector<LikelihoodBreakdown> log_likelihood(const FlowModel& model, const Prior& prior,
                                                const Tensor& x, par::Exec mode) {
  const std::size_t n = x.batch();
  std::vector<LikelihoodBreakdown> out(n);
  par::for_each(n, mode, [&](std::size_t i) {
    out[i] = log_likelihood_one(model, prior, x.example(i).data());
  });
  return out;
}

namespace {

void check_raw_pixel(double v) {
  if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v)) {
    throw OutOfRange("dequantize expects integer pixel values in 0..255, got " + std::to_string(v));
  }
}

// Keyed independently of any run seed so evaluation noise is shared across
// models (and across training runs being compared).
constexpr std::uint64_t kEvalNoiseKey = 0xF10A11CEDE0A11CEull;

}  // namespace

Tensor dequantize(const Tensor& raw, Rng& rng) {
  Tensor out(raw.shape());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    check_raw_pixel(raw[i]);
    out[i] = (raw[i] + rng.uniform()) / 256.0;
  }
  return out;
}

Tensor dequantize_fixed(const Tensor& raw) {
  Tensor out(raw.shape());
  const std::size_t n = raw.batch();
  const std::size_t d = raw.example_size();
  Rng base(kEvalNoiseKey);
  for (std::size_t e = 0; e < n; ++e) {
    Rng stream = base.child(e);
    const double* src = raw.example(e).data();
    double* dst = out.example(e).data();
    for (std::size_t i = 0; i < d; ++i) {
      check_raw_pixel(src[i]);
      dst[i] = (src[i] + stream.uniform()) / 256.0;
    }
  }
  return out;
}

}  // namespace flowlab
