#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "flowlab/errors.hpp"
#include "flowlab/trainer.hpp"

using namespace flowlab;

namespace {

FlowModel make_model(ModelConfig cfg, std::uint64_t seed, double perturb) {
  Rng rng(seed);
  FlowModel model = build_model(cfg, rng);
  if (perturb > 0.0) {
    std::vector<double> p;
    model.gather_params(p);
    for (double& v : p) v += perturb * rng.normal();
    model.scatter_params(p);
  }
  return model;
}

Tensor normal_batch(const Shape& example_shape, std::size_t n, std::uint64_t seed) {
  Shape shape = example_shape;
  shape.insert(shape.begin(), n);
  Tensor t(shape);
  Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

bool grad_close(double analytic, double fd) {
  const double diff = std::fabs(analytic - fd);
  return diff <= 1e-4 * std::max(std::fabs(analytic), std::fabs(fd)) || diff <= 1e-7;
}

}  // namespace

TEST_CASE("zero-init CV loss is the negated prior mean") {
  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::CV;
  cfg.input_shape = {6};
  FlowModel model = make_model(cfg, 1, 0.0);
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    if (auto* conv = dynamic_cast<InvConv1x1*>(&model.layer(i))) {
      conv->set_kernel(SquareMatrix::identity(conv->kernel().order()));
    }
  }
  const Prior prior = Prior::gaussian(1.0);
  Tensor batch = normal_batch({6}, 16, 2);
  const LossGrad lg = loss_and_grad(model, prior, batch, 0.0);
  double expected = 0.0;
  for (std::size_t i = 0; i < 16; ++i) expected -= prior.logprob(batch.example(i));
  expected /= 16.0;
  CHECK(lg.loss == doctest::Approx(expected).epsilon(1e-12));
  CHECK(lg.mean_logdet == 0.0);
}

TEST_CASE("analytic gradients match central differences for every variant") {
  struct Case {
    ModelConfig cfg;
    const char* name;
  };
  std::vector<Case> cases;
  {
    ModelConfig c;
    c.variant = ModelConfig::Variant::CV;
    c.input_shape = {4};
    c.couplings = 2;
    c.hidden = 6;
    cases.push_back({c, "cv flat"});
  }
  {
    ModelConfig c;
    c.variant = ModelConfig::Variant::NvpExp;
    c.input_shape = {4};
    c.couplings = 2;
    c.hidden = 6;
    c.use_invconv = true;
    cases.push_back({c, "nvp-exp flat"});
  }
  {
    ModelConfig c;
    c.variant = ModelConfig::Variant::NvpSigmoid;
    c.input_shape = {4};
    c.couplings = 2;
    c.hidden = 6;
    c.use_invconv = false;
    cases.push_back({c, "nvp-sigmoid flat"});
  }
  {
    ModelConfig c;
    c.variant = ModelConfig::Variant::NvpExp;
    c.input_shape = {2, 2, 2};
    c.blocks = 2;
    c.couplings = 1;
    c.hidden = 4;
    cases.push_back({c, "nvp-exp image with squeeze"});
  }
  {
    ModelConfig c;
    c.variant = ModelConfig::Variant::CV;
    c.input_shape = {2, 2, 4};
    c.couplings = 2;
    c.hidden = 4;
    cases.push_back({c, "cv image"});
  }

  const Prior prior = Prior::gaussian(1.0);
  for (auto& kase : cases) {
    CAPTURE(kase.name);
    FlowModel model = make_model(kase.cfg, 7, 0.1);
    Tensor batch = normal_batch(kase.cfg.input_shape, 3, 8);
    const double l2 = 0.01;
    const LossGrad lg = loss_and_grad(model, prior, batch, l2);

    std::vector<double> params;
    model.gather_params(params);
    const double eps = 1e-5;
    std::size_t worst_idx = 0;
    double worst_diff = 0.0;
    int bad = 0;
    for (std::size_t k = 0; k < params.size(); ++k) {
      const double saved = params[k];
      params[k] = saved + eps;
      model.scatter_params(params);
      const double lp = loss_and_grad(model, prior, batch, l2).loss;
      params[k] = saved - eps;
      model.scatter_params(params);
      const double lm = loss_and_grad(model, prior, batch, l2).loss;
      params[k] = saved;
      const double fd = (lp - lm) / (2.0 * eps);
      if (!grad_close(lg.grad[k], fd)) {
        ++bad;
        if (std::fabs(lg.grad[k] - fd) > worst_diff) {
          worst_diff = std::fabs(lg.grad[k] - fd);
          worst_idx = k;
        }
      }
    }
    model.scatter_params(params);
    CAPTURE(worst_idx);
    CAPTURE(worst_diff);
    CHECK(bad == 0);
  }
}

TEST_CASE("l2 penalty adds 2*lambda*param to every gradient") {
  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::NvpExp;
  cfg.input_shape = {4};
  cfg.couplings = 2;
  cfg.hidden = 6;
  FlowModel model = make_model(cfg, 3, 0.1);
  const Prior prior = Prior::gaussian(1.0);
  Tensor batch = normal_batch({4}, 4, 4);
  const double lambda = 0.05;
  const LossGrad g0 = loss_and_grad(model, prior, batch, 0.0);
  const LossGrad g1 = loss_and_grad(model, prior, batch, lambda);
  std::vector<double> params;
  model.gather_params(params);
  for (std::size_t k = 0; k < params.size(); ++k) {
    CHECK(g1.grad[k] - g0.grad[k] == doctest::Approx(2.0 * lambda * params[k]).epsilon(1e-12));
  }
}

TEST_CASE("rmsprop fixed points and determinism") {
  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::CV;
  cfg.input_shape = {4};
  cfg.couplings = 1;
  cfg.hidden = 4;

  // zero gradient leaves parameters unchanged
  {
    FlowModel model = make_model(cfg, 5, 0.1);
    std::vector<double> before;
    model.gather_params(before);
    OptimizerState opt;
    std::vector<double> zeros(model.param_size(), 0.0);
    rmsprop_step(opt, model, zeros, 1e-2);
    std::vector<double> after;
    model.gather_params(after);
    for (std::size_t k = 0; k < before.size(); ++k) CHECK(before[k] == after[k]);
    CHECK(opt.step == 1);
  }

  // constant gradient: per-parameter step magnitude approaches lr
  {
    FlowModel model = make_model(cfg, 5, 0.1);
    OptimizerState opt;
    std::vector<double> g(model.param_size(), 0.37);
    const double lr = 1e-3;
    std::vector<double> prev;
    model.gather_params(prev);
    for (int it = 0; it < 400; ++it) rmsprop_step(opt, model, g, lr);
    std::vector<double> before;
    model.gather_params(before);
    rmsprop_step(opt, model, g, lr);
    std::vector<double> after;
    model.gather_params(after);
    for (std::size_t k = 0; k < before.size(); ++k) {
      CHECK(std::fabs(before[k] - after[k]) == doctest::Approx(lr).epsilon(1e-3));
    }
  }

  // same seeds, same trajectories, bitwise
  {
    const Prior prior = Prior::gaussian(1.0);
    Tensor batch = normal_batch({4}, 8, 6);
    FlowModel m1 = make_model(cfg, 6, 0.1);
    FlowModel m2 = make_model(cfg, 6, 0.1);
    OptimizerState o1, o2;
    for (int it = 0; it < 20; ++it) {
      auto g1 = loss_and_grad(m1, prior, batch, 0.01);
      auto g2 = loss_and_grad(m2, prior, batch, 0.01);
      rmsprop_step(o1, m1, g1.grad, 1e-3);
      rmsprop_step(o2, m2, g2.grad, 1e-3);
    }
    std::vector<double> p1, p2;
    m1.gather_params(p1);
    m2.gather_params(p2);
    for (std::size_t k = 0; k < p1.size(); ++k) CHECK(p1[k] == p2[k]);
  }
}

TEST_CASE("gradient clipping") {
  std::vector<double> g{3.0, 4.0};
  const double norm = clip_gradient(g, 100.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(g[0] == 3.0);  // below threshold: untouched
  std::vector<double> big{300.0, 400.0};
  clip_gradient(big, 100.0);
  CHECK(std::hypot(big[0], big[1]) == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("training smoke: loss decreases on synthetic data") {
  for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
    Rng rng(seed);
    Dataset data = gen_two_moons(512, 0.08, rng);
    ModelConfig cfg;
    cfg.variant = ModelConfig::Variant::NvpExp;
    cfg.input_shape = {2};
    cfg.couplings = 4;
    cfg.hidden = 16;
    cfg.use_invconv = false;
    FlowModel model = make_model(cfg, seed, 0.0);

    TrainConfig tc;
    tc.lr = 1e-3;
    tc.total_steps = 500;
    tc.batch = 64;
    tc.seed = seed;
    tc.eval_every = 10;
    const TrainResult result = train(model, Prior::gaussian(1.0), data, tc);
    REQUIRE(result.metrics.size() >= 10);
    double early = 0.0, late = 0.0;
    for (int i = 0; i < 5; ++i) {
      early += result.metrics[i].loss;
      late += result.metrics[result.metrics.size() - 1 - i].loss;
    }
    CHECK(late < early);
  }
}

TEST_CASE("zero steps leave the model untouched") {
  Rng rng(20);
  Dataset data = gen_two_moons(64, 0.1, rng);
  ModelConfig cfg;
  cfg.input_shape = {2};
  cfg.variant = ModelConfig::Variant::NvpExp;
  cfg.use_invconv = false;
  FlowModel model = make_model(cfg, 21, 0.1);
  std::vector<double> before;
  model.gather_params(before);
  TrainConfig tc;
  tc.total_steps = 0;
  const TrainResult result = train(model, Prior::gaussian(1.0), data, tc);
  CHECK(result.metrics.empty());
  std::vector<double> after;
  model.gather_params(after);
  for (std::size_t k = 0; k < before.size(); ++k) CHECK(before[k] == after[k]);
}

TEST_CASE("training is deterministic given the seed") {
  Rng rng(30);
  Dataset data = gen_two_moons(256, 0.1, rng);
  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::NvpExp;
  cfg.input_shape = {2};
  cfg.couplings = 3;
  cfg.hidden = 8;
  cfg.use_invconv = false;
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.total_steps = 120;
  tc.batch = 32;
  tc.seed = 99;
  tc.eval_every = 20;

  FlowModel m1 = make_model(cfg, 31, 0.0);
  FlowModel m2 = make_model(cfg, 31, 0.0);
  const TrainResult r1 = train(m1, Prior::gaussian(1.0), data, tc);
  const TrainResult r2 = train(m2, Prior::gaussian(1.0), data, tc);
  REQUIRE(r1.metrics.size() == r2.metrics.size());
  for (std::size_t i = 0; i < r1.metrics.size(); ++i) {
    CHECK(r1.metrics[i].loss == r2.metrics[i].loss);
    CHECK(r1.metrics[i].eval_bpd == r2.metrics[i].eval_bpd);
  }
  std::vector<double> p1, p2;
  m1.gather_params(p1);
  m2.gather_params(p2);
  for (std::size_t k = 0; k < p1.size(); ++k) CHECK(p1[k] == p2[k]);
}

TEST_CASE("resumed training matches an uninterrupted run") {
  Rng rng(40);
  Dataset data = gen_two_moons(256, 0.1, rng);
  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::NvpExp;
  cfg.input_shape = {2};
  cfg.couplings = 2;
  cfg.hidden = 8;
  cfg.use_invconv = false;
  const Prior prior = Prior::gaussian(1.0);

  TrainConfig full;
  full.lr = 1e-3;
  full.total_steps = 80;
  full.batch = 32;
  full.seed = 77;
  full.eval_every = 0;

  FlowModel uninterrupted = make_model(cfg, 41, 0.0);
  train(uninterrupted, prior, data, full);

  FlowModel resumed = make_model(cfg, 41, 0.0);
  TrainConfig half = full;
  half.run_limit = 40;
  const TrainResult first = train(resumed, prior, data, half);
  CHECK(first.optimizer.step == 40);
  train(resumed, prior, data, full, &first.optimizer);

  std::vector<double> p1, p2;
  uninterrupted.gather_params(p1);
  resumed.gather_params(p2);
  for (std::size_t k = 0; k < p1.size(); ++k) CHECK(p1[k] == p2[k]);
}

TEST_CASE("a linear CV model fits an isotropic gaussian's variance") {
  Rng rng(50);
  Dataset data = gen_diag_gaussian(4096, {0.0, 0.0}, {0.25, 0.25}, rng);
  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::CV;
  cfg.input_shape = {2};
  cfg.couplings = 2;
  cfg.hidden = 6;
  FlowModel model = make_model(cfg, 51, 0.0);

  TrainConfig tc;
  tc.lr = 5e-3;
  tc.total_steps = 1200;
  tc.batch = 128;
  tc.seed = 52;
  tc.eval_every = 0;
  train(model, Prior::gaussian(1.0), data, tc);

  // implied variance from model samples
  const std::size_t n = 20000;
  Tensor z({n, 2});
  Rng zr(53);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = zr.normal();
  Tensor x = model.inverse(z);
  double var = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) var += x[i] * x[i];
  var /= static_cast<double>(x.size());
  CHECK(var == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("non-finite batches abort with NonFiniteLoss") {
  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::CV;
  cfg.input_shape = {4};
  FlowModel model = make_model(cfg, 60, 0.1);
  Tensor batch({2, 4});
  batch[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(loss_and_grad(model, Prior::gaussian(1.0), batch, 0.0), NonFiniteLoss);
}

TEST_CASE("metrics CSV has the documented columns") {
  Rng rng(70);
  Dataset data = gen_two_moons(128, 0.1, rng);
  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::NvpExp;
  cfg.input_shape = {2};
  cfg.couplings = 1;
  cfg.hidden = 4;
  cfg.use_invconv = false;
  FlowModel model = make_model(cfg, 71, 0.0);
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.total_steps = 6;
  tc.batch = 16;
  tc.eval_every = 2;
  tc.metrics_path = "test_metrics.csv";
  train(model, Prior::gaussian(1.0), data, tc);
  std::ifstream in("test_metrics.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,loss,train_bpd,eval_bpd,logdet_mean");
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows >= 3);
  in.close();
  std::remove("test_metrics.csv");
}
