#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "flowlab/checkpoint.hpp"
#include "flowlab/errors.hpp"
#include "flowlab/finite_diff.hpp"
#include "flowlab/model.hpp"

using namespace flowlab;

namespace {

Tensor random_batch(const Shape& example_shape, std::size_t n, Rng& rng, double scale = 1.0) {
  Shape shape = example_shape;
  shape.insert(shape.begin(), n);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

// Perturb every parameter so coupling nets stop being identities.
void randomize_params(FlowModel& model, Rng& rng, double scale = 0.1) {
  std::vector<double> params;
  model.gather_params(params);
  for (double& p : params) p += scale * rng.normal();
  model.scatter_params(params);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
  return worst;
}

bool close_rel(double a, double b, double tol) {
  return std::fabs(a - b) <= tol * std::max({1.0, std::fabs(a), std::fabs(b)});
}

VectorFn model_fn(const FlowModel& model) {
  return [&model](const std::vector<double>& v) {
    std::vector<double> z(model.dim());
    double ld = 0.0;
    model.forward_one(v.data(), z.data(), ld, nullptr);
    return z;
  };
}

}  // namespace

TEST_CASE("additive coupling with zero net is the identity") {
  CouplingLayer::Options opts;
  opts.kind = CouplingLayer::Kind::Additive;
  CouplingLayer layer({6}, opts);  // all parameters start at zero
  Rng rng(1);
  Tensor x = random_batch({6}, 4, rng);
  auto r = layer_forward(layer, x);
  CHECK(max_abs_diff(r.y.flat(), x.flat()) == 0.0);
  for (double ld : r.logdet) CHECK(ld == 0.0);
  Tensor back = layer_inverse(layer, r.y);
  CHECK(max_abs_diff(back.flat(), x.flat()) == 0.0);
}

TEST_CASE("affine coupling logdet is the sum of the scales") {
  // constant s = 0.3 over 10 transformed dims -> logdet = 3.0 (clamp off)
  CouplingLayer::Options opts;
  opts.kind = CouplingLayer::Kind::Affine;
  opts.scale_param = ScaleParam::Exp;
  opts.clamp_scale = false;
  CouplingLayer layer({20}, opts);
  // zero net: output equals the last-layer bias; set the s half to 0.3
  const std::size_t out_dim = 20;  // 2 * d with d = 10
  double* b3 = layer.param_data() + layer.param_size() - out_dim;
  for (std::size_t k = 0; k < 10; ++k) b3[k] = 0.3;

  Rng rng(2);
  Tensor x = random_batch({20}, 3, rng);
  auto r = layer_forward(layer, x);
  for (double ld : r.logdet) CHECK(ld == doctest::Approx(3.0).epsilon(1e-12));
  Tensor back = layer_inverse(layer, r.y);
  CHECK(max_abs_diff(back.flat(), x.flat()) < 1e-12);
}

TEST_CASE("invconv logdet is pixels times log|det U|") {
  InvConv1x1 layer({4, 4, 2});
  SquareMatrix u(2, {2.0, 0.0, 0.0, 3.0});
  layer.set_kernel(u);
  Rng rng(3);
  Tensor x = random_batch({4, 4, 2}, 2, rng);
  auto r = layer_forward(layer, x);
  const double expected = 16.0 * std::log(6.0);
  for (double ld : r.logdet) CHECK(ld == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(28.6682).epsilon(1e-4));

  Tensor back = layer_inverse(layer, r.y);
  CHECK(max_abs_diff(back.flat(), x.flat()) < 1e-8);

  SquareMatrix singular(2);
  CHECK_THROWS_AS(layer.set_kernel(singular), SingularMatrix);
}

TEST_CASE("squeeze restores the exact layout on inverse") {
  auto sq = PermutationLayer::squeeze({4, 4, 3});
  CHECK(sq->out_shape() == Shape{2, 2, 12});
  Tensor x({1, 4, 4, 3});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  auto r = layer_forward(*sq, x);
  for (double ld : r.logdet) CHECK(ld == 0.0);
  // every value survives the rearrangement
  std::multiset<double> before(x.flat().begin(), x.flat().end());
  std::multiset<double> after(r.y.flat().begin(), r.y.flat().end());
  CHECK(before == after);
  Tensor back = layer_inverse(*sq, r.y);
  CHECK(max_abs_diff(back.flat(), x.flat()) == 0.0);
}

TEST_CASE("zero-initialized CV model with identity kernels is the identity") {
  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::CV;
  cfg.input_shape = {4, 4, 4};
  cfg.couplings = 2;
  Rng rng(4);
  FlowModel model = build_model(cfg, rng);
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    if (auto* conv = dynamic_cast<InvConv1x1*>(&model.layer(i))) {
      conv->set_kernel(SquareMatrix::identity(conv->kernel().order()));
    }
  }
  Tensor x = random_batch({4, 4, 4}, 3, rng);
  auto fwd = model.forward(x);
  CHECK(max_abs_diff(fwd.z.flat(), x.flat()) == 0.0);
  for (double ld : fwd.logdet) CHECK(ld == 0.0);

  Tensor zeros({2, model.dim()});
  Tensor back = model.inverse(zeros);
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == 0.0);
}

TEST_CASE("CV models report a bitwise constant logdet over a batch") {
  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::CV;
  cfg.input_shape = {4, 4, 4};
  cfg.blocks = 2;
  cfg.couplings = 2;
  cfg.multiscale = true;
  Rng rng(5);
  FlowModel model = build_model(cfg, rng);
  randomize_params(model, rng, 0.2);
  CHECK(model.constant_volume());

  Tensor x = random_batch({4, 4, 4}, 16, rng);
  auto fwd = model.forward(x);
  for (double ld : fwd.logdet) CHECK(ld == fwd.logdet[0]);

  // total logdet equals the sum of the per-layer contributions
  double per_layer_sum = 0.0;
  for (const auto& layer_ld : fwd.per_layer) per_layer_sum += layer_ld[0];
  CHECK(per_layer_sum == doctest::Approx(fwd.logdet[0]).epsilon(1e-12));
}

TEST_CASE("analytic logdet matches the finite-difference Jacobian") {
  struct Case {
    ModelConfig cfg;
    const char* name;
  };
  std::vector<Case> cases;
  {
    ModelConfig c;
    c.variant = ModelConfig::Variant::NvpExp;
    c.input_shape = {6};
    c.couplings = 3;
    c.hidden = 12;
    c.use_invconv = true;
    cases.push_back({c, "nvp-exp flat"});
  }
  {
    ModelConfig c;
    c.variant = ModelConfig::Variant::NvpSigmoid;
    c.input_shape = {8};
    c.couplings = 2;
    c.hidden = 10;
    c.use_invconv = false;
    cases.push_back({c, "nvp-sigmoid flat"});
  }
  {
    ModelConfig c;
    c.variant = ModelConfig::Variant::CV;
    c.input_shape = {2, 2, 2};
    c.blocks = 2;
    c.couplings = 2;
    c.hidden = 6;
    cases.push_back({c, "cv image with squeeze"});
  }
  Rng rng(6);
  for (auto& kase : cases) {
    CAPTURE(kase.name);
    FlowModel model = build_model(kase.cfg, rng);
    randomize_params(model, rng, 0.15);
    for (int rep = 0; rep < 3; ++rep) {
      std::vector<double> x0(model.dim());
      for (double& v : x0) v = rng.normal();
      double ld = 0.0;
      std::vector<double> z(model.dim());
      model.forward_one(x0.data(), z.data(), ld, nullptr);
      const SquareMatrix jac = finite_diff_jacobian(model_fn(model), x0, 1e-5);
      const double fd_ld = lu_logabsdet(jac).log_abs;
      CHECK(close_rel(ld, fd_ld, 1e-4));
    }
  }
}

TEST_CASE("sigmoid parametrization keeps the volume term nonpositive") {
  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::NvpSigmoid;
  cfg.input_shape = {10};
  cfg.couplings = 4;
  cfg.hidden = 16;
  cfg.use_invconv = false;
  Rng rng(7);
  for (int rep = 0; rep < 5; ++rep) {
    FlowModel model = build_model(cfg, rng);
    randomize_params(model, rng, 0.8);
    Tensor x = random_batch({10}, 32, rng);
    auto fwd = model.forward(x);
    for (double ld : fwd.logdet) CHECK(ld <= 0.0);
  }
}

TEST_CASE("bijectivity over random models and variants") {
  Rng rng(8);
  int checked = 0;
  for (int rep = 0; rep < 120; ++rep) {
    ModelConfig cfg;
    switch (rep % 3) {
      case 0:
        cfg.variant = ModelConfig::Variant::CV;
        break;
      case 1:
        cfg.variant = ModelConfig::Variant::NvpExp;
        break;
      default:
        cfg.variant = ModelConfig::Variant::NvpSigmoid;
        break;
    }
    const bool image = rep % 2 == 0;
    cfg.input_shape = image ? Shape{4, 4, 4} : Shape{2 + 2 * (rep % 4)};
    cfg.blocks = 1 + rep % 2;
    cfg.couplings = 1 + rep % 3;
    cfg.hidden = 4 + rep % 9;
    cfg.use_invconv = rep % 4 != 1;
    cfg.multiscale = image && rep % 2 == 0 && cfg.blocks > 1;
    FlowModel model = build_model(cfg, rng);
    randomize_params(model, rng, 0.12);

    Tensor x = random_batch(cfg.input_shape, 4, rng);
    auto fwd = model.forward(x);
    Tensor back = model.inverse(fwd.z);
    CHECK(max_abs_diff(back.flat(), x.flat()) < 1e-6);

    // z -> x -> z round trip as well
    Tensor z = random_batch({model.dim()}, 4, rng);
    Tensor xz = model.inverse(z);
    auto fwd2 = model.forward(xz);
    CHECK(max_abs_diff(fwd2.z.flat(), z.flat()) < 1e-6);
    ++checked;
  }
  CHECK(checked == 120);
}

TEST_CASE("volume-preserving layers report exactly zero logdet") {
  Rng rng(9);
  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::CV;
  cfg.input_shape = {4, 4, 2};
  cfg.blocks = 2;
  cfg.couplings = 2;
  cfg.use_invconv = false;  // permutation mixer: fully volume preserving
  cfg.multiscale = true;
  FlowModel model = build_model(cfg, rng);
  randomize_params(model, rng, 0.4);
  Tensor x = random_batch({4, 4, 2}, 6, rng);
  auto fwd = model.forward(x);
  for (const auto& layer_ld : fwd.per_layer)
    for (double ld : layer_ld) CHECK(ld == 0.0);
}

TEST_CASE("factored parts reassemble in declared order") {
  // Identity-ized multiscale model: z must be a permutation of x and the
  // inverse must restore it bitwise.
  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::CV;
  cfg.input_shape = {8};
  cfg.blocks = 3;
  cfg.couplings = 1;
  cfg.multiscale = true;
  Rng rng(10);
  FlowModel model = build_model(cfg, rng);
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    if (auto* conv = dynamic_cast<InvConv1x1*>(&model.layer(i))) {
      conv->set_kernel(SquareMatrix::identity(conv->kernel().order()));
    }
  }
  CHECK(model.factor_shapes().size() == 2);
  CHECK(model.factor_shapes()[0] == Shape{4});
  CHECK(model.factor_shapes()[1] == Shape{2});

  Tensor x({1, 8});
  for (std::size_t i = 0; i < 8; ++i) x[i] = static_cast<double>(i + 1);
  auto fwd = model.forward(x);
  std::multiset<double> before(x.flat().begin(), x.flat().end());
  std::multiset<double> after(fwd.z.flat().begin(), fwd.z.flat().end());
  CHECK(before == after);
  Tensor back = model.inverse(fwd.z);
  CHECK(max_abs_diff(back.flat(), x.flat()) == 0.0);
}

TEST_CASE("builder structure and parameter count") {
  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::CV;
  cfg.input_shape = {6};
  cfg.blocks = 1;
  cfg.couplings = 2;
  cfg.hidden = 8;
  Rng rng(11);
  FlowModel model = build_model(cfg, rng);
  REQUIRE(model.num_layers() == 4);
  CHECK(std::string(model.layer(0).kind()) == "additive-coupling");
  CHECK(std::string(model.layer(1).kind()) == "invconv");
  CHECK(std::string(model.layer(2).kind()) == "additive-coupling");
  CHECK(std::string(model.layer(3).kind()) == "invconv");

  // dense net: (8*3+8) + (8*8+8) + (3*8+3) per coupling, plus 6x6 kernels
  const std::size_t net_params = (8 * 3 + 8) + (8 * 8 + 8) + (3 * 8 + 3);
  CHECK(model.param_size() == 2 * net_params + 2 * 36);

  CHECK_THROWS_AS(
      [] {
        ModelConfig bad;
        bad.input_shape = {5};  // odd split
        Rng r(0);
        return build_model(bad, r);
      }(),
      InvalidConfig);
  CHECK_THROWS_AS(
      [] {
        ModelConfig bad;
        bad.input_shape = {6};
        bad.couplings = 0;
        Rng r(0);
        return build_model(bad, r);
      }(),
      InvalidConfig);
}

TEST_CASE("grayscale inputs squeeze before the first coupling") {
  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::CV;
  cfg.input_shape = {4, 4, 1};
  cfg.couplings = 1;
  cfg.hidden = 4;
  Rng rng(12);
  FlowModel model = build_model(cfg, rng);
  CHECK(std::string(model.layer(0).kind()) == "squeeze");
  Tensor x = random_batch({4, 4, 1}, 2, rng);
  auto fwd = model.forward(x);
  Tensor back = model.inverse(fwd.z);
  CHECK(max_abs_diff(back.flat(), x.flat()) < 1e-9);
}

TEST_CASE("diagonal partials of a zero-net CV model multiply across flows") {
  // With diagonal kernels the per-channel row-sum product equals the
  // diagonal Jacobian entry everywhere.
  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::CV;
  cfg.input_shape = {2, 2, 4};
  cfg.couplings = 3;
  cfg.hidden = 4;
  Rng rng(13);
  FlowModel model = build_model(cfg, rng);
  std::vector<double> expected(4, 1.0);
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    if (auto* conv = dynamic_cast<InvConv1x1*>(&model.layer(i))) {
      SquareMatrix d(4);
      for (std::size_t c = 0; c < 4; ++c) {
        d(c, c) = 0.6 + rng.uniform();
        expected[c] *= d(c, c);
      }
      conv->set_kernel(d);
    }
  }
  std::vector<double> x0(model.dim());
  for (double& v : x0) v = rng.normal();
  const SquareMatrix jac = finite_diff_jacobian(model_fn(model), x0, 1e-5);
  for (std::size_t d = 0; d < model.dim(); ++d) {
    CHECK(std::fabs(jac(d, d) - expected[d % 4]) < 1e-5);
  }
}

TEST_CASE("checkpoints round trip bit-exactly") {
  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::NvpExp;
  cfg.input_shape = {6};
  cfg.couplings = 2;
  cfg.hidden = 8;
  Rng rng(14);
  FlowModel model = build_model(cfg, rng);
  randomize_params(model, rng, 0.3);

  const std::string path = "test_checkpoint.flw";
  OptimizerState opt;
  opt.accum.assign(model.param_size(), 0.25);
  opt.step = 123;
  checkpoint_save(path, model, cfg, &opt);

  LoadedCheckpoint loaded = checkpoint_load(path);
  CHECK(loaded.config.to_text() == cfg.to_text());
  REQUIRE(loaded.optimizer.has_value());
  CHECK(loaded.optimizer->step == 123);

  std::vector<double> p1, p2;
  model.gather_params(p1);
  loaded.model.gather_params(p2);
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i] == p2[i]);

  const std::string path2 = "test_checkpoint2.flw";
  checkpoint_save(path2, loaded.model, loaded.config, &*loaded.optimizer);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string bytes1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string bytes2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(bytes1 == bytes2);

  // truncation and version mismatch are rejected
  {
    std::ofstream out("test_checkpoint_trunc.flw", std::ios::binary);
    out.write(bytes1.data(), static_cast<std::streamsize>(bytes1.size() / 2));
  }
  CHECK_THROWS_AS(checkpoint_load("test_checkpoint_trunc.flw"), CorruptCheckpoint);
  {
    std::string bad = bytes1;
    bad[4] = 9;  // version field
    std::ofstream out("test_checkpoint_badver.flw", std::ios::binary);
    out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
  }
  CHECK_THROWS_AS(checkpoint_load("test_checkpoint_badver.flw"), VersionMismatch);

  std::remove(path.c_str());
  std::remove(path2.c_str());
  std::remove("test_checkpoint_trunc.flw");
  std::remove("test_checkpoint_badver.flw");
}

TEST_CASE("shape mismatches are rejected") {
  ModelConfig cfg;
  cfg.input_shape = {6};
  Rng rng(15);
  FlowModel model = build_model(cfg, rng);
  Tensor wrong({2, 5});
  CHECK_THROWS_AS(model.forward(wrong), ShapeMismatch);
  CouplingLayer::Options opts;
  CouplingLayer layer({6}, opts);
  CHECK_THROWS_AS(layer_forward(layer, wrong), ShapeMismatch);
}
