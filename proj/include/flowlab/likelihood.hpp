#pragma once

#include <vector>

#include "flowlab/model.hpp"
#include "flowlab/prior.hpp"

namespace flowlab {

// The two-term decomposition, per example. total = prior_term + volume_term
// holds exactly; nats everywhere, bits only in the bpd field.
struct LikelihoodBreakdown {
  double prior_term = 0.0;
  double volume_term = 0.0;
  double total = 0.0;
  double bpd = 0.0;
};

// bpd = -total / (D ln 2) + 8; the +8 undoes the x/256 input scaling.
double bpd_from_nats(double total_nats, std::size_t dims);

LikelihoodBreakdown log_likelihood_one(const FlowModel& model, const Prior& prior, const double* x);
std::vector<LikelihoodBreakdown> log_likelihood(const FlowModel& model, const Prior& prior,
                                                const Tensor& x,
                                                par::Exec mode = par::Exec::Parallel);

// (raw + u) / 256 with u ~ U[0,1) per element; raw values must be integers
// in 0..255. Output lands in [raw/256, (raw+1)/256).
Tensor dequantize(const Tensor& raw, Rng& rng);
// Evaluation-time variant: the noise stream is keyed by example index only,
// so likelihoods stay comparable across models and runs.
Tensor dequantize_fixed(const Tensor& raw);

}  // namespace flowlab
