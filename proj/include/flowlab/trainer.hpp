#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowlab/checkpoint.hpp"
#include "flowlab/data.hpp"
#include "flowlab/likelihood.hpp"
#include "flowlab/model.hpp"

namespace flowlab {

struct TrainConfig {
  double lr = 1e-5;
  std::size_t total_steps = 0;
  std::size_t batch = 32;
  double l2 = 0.0;  // image presets use 5e-2
  std::uint64_t seed = 0;
  std::size_t eval_every = 250;
  double eval_fraction = 0.1;  // trailing slice held out for eval BPD
  double clip_norm = 100.0;
  // Steps to execute in this call (0 = run to total_steps). The decay
  // schedule always follows total_steps, so interrupted runs can resume.
  std::size_t run_limit = 0;
  std::string metrics_path;  // CSV written when nonempty
  par::Exec exec = par::Exec::Parallel;
};

struct LossGrad {
  double loss = 0.0;         // -mean total log-likelihood + l2 * ||params||^2
  double mean_total = 0.0;   // mean log-likelihood, nats
  double mean_logdet = 0.0;  // mean volume term
  std::vector<double> grad;
};

// Exact reverse-mode gradient of the penalized negative log-likelihood.
// Per-example work runs in fixed chunks; chunk results combine in index
// order, so the gradient is bit-reproducible for any thread count.
LossGrad loss_and_grad(const FlowModel& model, const Prior& prior, const Tensor& batch, double l2,
                       par::Exec mode = par::Exec::Parallel);

// Scales grad in place when its 2-norm exceeds max_norm; returns the norm.
double clip_gradient(std::vector<double>& grad, double max_norm);

// v <- 0.9 v + 0.1 g^2; p <- p - lr g / sqrt(v + 1e-8)
void rmsprop_step(OptimizerState& state, FlowModel& model, std::span<const double> grad, double lr);

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double train_bpd = 0.0;
  double eval_bpd = 0.0;
  double logdet_mean = 0.0;
};

struct TrainResult {
  std::vector<StepRecord> metrics;
  OptimizerState optimizer;
};

// Runs RMSProp with the halving schedule at 80% and 90% of total steps.
// `resume` continues from a saved optimizer state; schedules are pure
// functions of (seed, step), so a resumed run matches an uninterrupted one.
TrainResult train(FlowModel& model, const Prior& prior, const Dataset& dataset,
                  const TrainConfig& config, const OptimizerState* resume = nullptr);

void write_metrics_csv(const std::string& path, const std::vector<StepRecord>& metrics);

}  // namespace flowlab
