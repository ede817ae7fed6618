#include "flowlab/trainer.hpp"

#include <cmath>
#include <fstream>

#include "flowlab/errors.hpp"

namespace flowlab {
namespace {

constexpr std::size_t kGradChunk = 4;
constexpr std::uint64_t kBatchStream = 0x100000;
constexpr std::uint64_t kNoiseStream = 0x200000;

}  // namespace

LossGrad loss_and_grad(const FlowModel& model, const Prior& prior, const Tensor& batch, double l2,
                       par::Exec mode) {
  const std::size_t n = batch.batch();
  if (n == 0) throw InvalidConfig("loss_and_grad needs a nonempty batch");
  const std::size_t p = model.param_size();
  const std::size_t chunks = par::chunk_count(n, kGradChunk);

  std::vector<std::vector<double>> chunk_grad(chunks);
  std::vector<double> chunk_loss(chunks, 0.0), chunk_total(chunks, 0.0), chunk_logdet(chunks, 0.0);

  par::for_chunks(n, kGradChunk, mode, [&](std::size_t begin, std::size_t end, std::size_t c) {
    chunk_grad[c].assign(p, 0.0);
    std::vector<LayerCache> cache;
    std::vector<double> z(model.dim()), dz(model.dim());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = begin; i < end; ++i) {
      double logdet = 0.0;
      model.forward_one(batch.example(i).data(), z.data(), logdet, &cache);
      const double prior_term = prior.logprob({z.data(), z.size()});
      chunk_loss[c] += -(prior_term + logdet);
      chunk_total[c] += prior_term + logdet;
      chunk_logdet[c] += logdet;
      prior.dlogprob({z.data(), z.size()}, {dz.data(), dz.size()});
      for (double& v : dz) v *= -inv_n;
      model.backward_one(cache, dz.data(), -inv_n, nullptr, chunk_grad[c].data());
    }
  });

  LossGrad out;
  out.grad.assign(p, 0.0);
  double loss_sum = 0.0, total_sum = 0.0, logdet_sum = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    loss_sum += chunk_loss[c];
    total_sum += chunk_total[c];
    logdet_sum += chunk_logdet[c];
    for (std::size_t k = 0; k < p; ++k) out.grad[k] += chunk_grad[c][k];
  }

  std::vector<double> params;
  model.gather_params(params);
  double param_norm2 = 0.0;
  for (std::size_t k = 0; k < p; ++k) {
    param_norm2 += params[k] * params[k];
    out.grad[k] += 2.0 * l2 * params[k];
  }

  out.loss = loss_sum / static_cast<double>(n) + l2 * param_norm2;
  out.mean_total = total_sum / static_cast<double>(n);
  out.mean_logdet = logdet_sum / static_cast<double>(n);

  if (!std::isfinite(out.loss)) throw NonFiniteLoss("loss is not finite: " + std::to_string(out.loss));
  for (double g : out.grad) {
    if (!std::isfinite(g)) throw NonFiniteLoss("gradient contains a non-finite value");
  }
  return out;
}

double clip_gradient(std::vector<double>& grad, double max_norm) {
  double norm2 = 0.0;
  for (double g : grad) norm2 += g * g;
  const double norm = std::sqrt(norm2);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
  }
  return norm;
}

void rmsprop_step(OptimizerState& state, FlowModel& model, std::span<const double> grad, double lr) {
  const std::size_t p = model.param_size();
  if (grad.size() != p) throw ShapeMismatch("gradient length does not match parameter count");
  if (state.accum.empty()) state.accum.assign(p, 0.0);
  if (state.accum.size() != p) throw ShapeMismatch("optimizer state does not match parameter count");
  constexpr double kDecay = 0.9;
  constexpr double kEpsilon = 1e-8;
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    FlowLayer& layer = model.layer(i);
    double* params = layer.param_data();
    const std::size_t off = model.param_offset(i);
    for (std::size_t k = 0; k < layer.param_size(); ++k) {
      const double g = grad[off + k];
      double& v = state.accum[off + k];
      v = kDecay * v + (1.0 - kDecay) * g * g;
      params[k] -= lr * g / std::sqrt(v + kEpsilon);
    }
  }
  model.refresh();
  ++state.step;
}

namespace {

Tensor slice_examples(const Tensor& data, std::size_t begin, std::size_t count) {
  Shape shape = data.example_shape();
  shape.insert(shape.begin(), count);
  Tensor out(shape);
  const std::size_t d = data.example_size();
  std::copy(data.data() + begin * d, data.data() + (begin + count) * d, out.data());
  return out;
}

}  // namespace

TrainResult train(FlowModel& model, const Prior& prior, const Dataset& dataset,
                  const TrainConfig& config, const OptimizerState* resume) {
  const std::size_t n = dataset.count();
  if (n == 0) throw InvalidConfig("train needs a nonempty dataset");
  if (config.batch == 0) throw InvalidConfig("batch size must be >= 1");
  if (!(config.lr > 0.0)) throw InvalidConfig("learning rate must be positive");
  if (config.l2 < 0.0) throw InvalidConfig("l2 coefficient must be nonnegative");

  const std::size_t holdout = static_cast<std::size_t>(static_cast<double>(n) * config.eval_fraction);
  const std::size_t train_n = n - holdout;
  if (train_n == 0) throw InvalidConfig("eval fraction leaves no training data");

  const bool needs_dequant = !dataset.scaled;
  Tensor eval_set;
  if (holdout > 0) {
    eval_set = slice_examples(dataset.data, train_n, holdout);
    if (needs_dequant) eval_set = dequantize_fixed(eval_set);
  }

  TrainResult result;
  if (resume) result.optimizer = *resume;
  if (result.optimizer.accum.empty()) result.optimizer.accum.assign(model.param_size(), 0.0);

  Rng base(config.seed);
  const Shape ex_shape = dataset.data.example_shape();
  const std::size_t ex_size = dataset.data.example_size();

  const auto record = [&](std::size_t step, const LossGrad& lg) {
    StepRecord rec;
    rec.step = step;
    rec.loss = lg.loss;
    rec.train_bpd = bpd_from_nats(lg.mean_total, model.dim());
    rec.logdet_mean = lg.mean_logdet;
    if (holdout > 0) {
      const auto breakdowns = log_likelihood(model, prior, eval_set, config.exec);
      double total = 0.0;
      for (const auto& b : breakdowns) total += b.total;
      rec.eval_bpd = bpd_from_nats(total / static_cast<double>(holdout), model.dim());
    } else {
      rec.eval_bpd = rec.train_bpd;
    }
    result.metrics.push_back(rec);
  };

  Shape batch_shape = ex_shape;
  batch_shape.insert(batch_shape.begin(), config.batch);

  std::size_t executed = 0;
  while (result.optimizer.step < config.total_steps &&
         (config.run_limit == 0 || executed < config.run_limit)) {
    ++executed;
    const std::size_t step = result.optimizer.step;
    double lr = config.lr;
    if (10 * step >= 9 * config.total_steps)
      lr *= 0.25;
    else if (10 * step >= 8 * config.total_steps)
      lr *= 0.5;

    // Batch draw is a pure function of (seed, step); dequantization noise is
    // fixed within an epoch per example and fresh across epochs.
    Rng pick = base.child(kBatchStream + step);
    const std::size_t epoch = step * config.batch / train_n;
    Tensor batch(batch_shape);
    for (std::size_t b = 0; b < config.batch; ++b) {
      const std::size_t idx = static_cast<std::size_t>(pick.next_u64() % train_n);
      const double* src = dataset.data.data() + idx * ex_size;
      double* dst = batch.example(b).data();
      if (needs_dequant) {
        Rng noise = base.child(kNoiseStream + epoch).child(idx);
        for (std::size_t k = 0; k < ex_size; ++k) dst[k] = (src[k] + noise.uniform()) / 256.0;
      } else {
        std::copy(src, src + ex_size, dst);
      }
    }

    LossGrad lg;
    try {
      lg = loss_and_grad(model, prior, batch, config.l2, config.exec);
    } catch (const NonFiniteLoss& e) {
      throw NonFiniteLoss("step " + std::to_string(step) + ": " + e.what());
    }
    const bool record_now = (config.eval_every > 0 && step % config.eval_every == 0) ||
                            step + 1 == config.total_steps;
    if (record_now) record(step, lg);

    clip_gradient(lg.grad, config.clip_norm);
    rmsprop_step(result.optimizer, model, lg.grad, lr);
  }

  if (!config.metrics_path.empty()) write_metrics_csv(config.metrics_path, result.metrics);
  return result;
}

void write_metrics_csv(const std::string& path, const std::vector<StepRecord>& metrics) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.precision(17);
  out << "step,loss,train_bpd,eval_bpd,logdet_mean\n";
  for (const auto& m : metrics) {
    out << m.step << "," << m.loss << "," << m.train_bpd << "," << m.eval_bpd << "," << m.logdet_mean
        << "\n";
  }
  if (!out) throw IoError("metrics CSV write failed");
}

}  // namespace flowlab
