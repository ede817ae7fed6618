#pragma once

#include <memory>
#include <string>
#include <vector>

#include "flowlab/coupling_net.hpp"
#include "flowlab/linalg.hpp"
#include "flowlab/tensor.hpp"

namespace flowlab {

enum class ScaleParam { Exp, Sigmoid };

struct LayerCache {
  std::vector<double> x;    // layer input
  std::vector<double> aux;  // variant-specific intermediates
  NetCache net;
};

// One invertible transformation. All interfaces are per example and work
// on flattened spans; shapes are fixed at construction so index maps and
// kernel caches can be precomputed.
class FlowLayer {
 public:
  virtual ~FlowLayer() = default;

  virtual const char* kind() const = 0;
  const Shape& in_shape() const { return in_shape_; }
  const Shape& out_shape() const { return out_shape_; }
  std::size_t in_size() const { return shape_numel(in_shape_); }
  std::size_t out_size() const { return shape_numel(out_shape_); }
  virtual std::size_t factored_size() const { return 0; }

  // y must hold out_size() values; factored only used by factor-out layers.
  virtual void fwd(const double* x, double* y, double* factored, double& logdet,
                   LayerCache* cache) const = 0;
  virtual void inv(const double* y, const double* factored, double* x) const = 0;
  // dx is written (size in_size); dparams accumulated at this layer's offsets.
  virtual void bwd(const LayerCache& cache, const double* dy, const double* dfactored,
                   double dlogdet, double* dx, double* dparams) const = 0;

  virtual std::size_t param_size() const { return 0; }
  virtual double* param_data() { return nullptr; }
  virtual const double* param_data() const { return nullptr; }
  virtual void init_params(Rng&) {}
  // Recompute derived state (kernel inverses etc.) after parameter writes.
  virtual void refresh() {}

  // logdet independent of the input / identically zero.
  virtual bool constant_volume() const = 0;
  virtual bool volume_preserving() const = 0;

 protected:
  FlowLayer(Shape in_shape, Shape out_shape)
      : in_shape_(std::move(in_shape)), out_shape_(std::move(out_shape)) {}
  Shape in_shape_;
  Shape out_shape_;
};

// Coupling over the leading half of the dims (flat) or channels (image),
// conditioned on the trailing half.
class CouplingLayer : public FlowLayer {
 public:
  enum class Kind { Additive, Affine };

  struct Options {
    Kind kind = Kind::Additive;
    ScaleParam scale_param = ScaleParam::Exp;
    std::size_t hidden = 32;
    bool clamp_scale = true;   // exp variant only: s <- tanh(s) * s_max
    double scale_clamp = 5.0;  // s_max
  };

  CouplingLayer(Shape shape, const Options& opts);

  const char* kind() const override;
  void fwd(const double* x, double* y, double* factored, double& logdet,
           LayerCache* cache) const override;
  void inv(const double* y, const double* factored, double* x) const override;
  void bwd(const LayerCache& cache, const double* dy, const double* dfactored, double dlogdet,
           double* dx, double* dparams) const override;

  std::size_t param_size() const override { return net_.param_size(); }
  double* param_data() override { return net_.param_data(); }
  const double* param_data() const override { return net_.param_data(); }
  void init_params(Rng& rng) override { net_.init_params(rng); }

  bool constant_volume() const override { return opts_.kind == Kind::Additive; }
  bool volume_preserving() const override { return opts_.kind == Kind::Additive; }

  const CouplingNet& net() const { return net_; }

 private:
  // effective log-scale and d(effective)/d(raw)
  double effective_scale(double s_raw) const;
  double effective_scale_grad(double s_raw) const;

  Options opts_;
  std::size_t split_ = 0;                  // transformed dims/channels
  std::vector<std::size_t> idx_a_, idx_b_;  // flat indices of the two halves
  CouplingNet net_;
};

// Channel-mixing 1x1 convolution; dense C x C kernel shared across pixels.
// Flat inputs are treated as one pixel with C = D channels.
class InvConv1x1 : public FlowLayer {
 public:
  InvConv1x1(Shape shape);

  const char* kind() const override { return "invconv"; }
  void fwd(const double* x, double* y, double* factored, double& logdet,
           LayerCache* cache) const override;
  void inv(const double* y, const double* factored, double* x) const override;
  void bwd(const LayerCache& cache, const double* dy, const double* dfactored, double dlogdet,
           double* dx, double* dparams) const override;

  std::size_t param_size() const override { return channels_ * channels_; }
  double* param_data() override { return kernel_.data(); }
  const double* param_data() const override { return kernel_.data(); }
  void init_params(Rng& rng) override;
  void refresh() override;

  bool constant_volume() const override { return true; }
  bool volume_preserving() const override { return false; }

  const SquareMatrix& kernel() const { return kernel_; }
  void set_kernel(const SquareMatrix& k);
  std::size_t pixels() const { return pixels_; }

 private:
  std::size_t channels_ = 0;
  std::size_t pixels_ = 1;
  SquareMatrix kernel_;
  SquareMatrix inverse_;       // refreshed with the kernel
  SquareMatrix inverse_t_;     // U^-T, the logdet gradient
  double logabsdet_ = 0.0;
};

// Fixed index permutation: y[i] = x[perm[i]]. Squeeze is the same machinery
// with a space-to-depth index map and a reshaped output.
class PermutationLayer : public FlowLayer {
 public:
  // swap-halves permutation over dims (flat) or channels (image)
  static std::unique_ptr<PermutationLayer> swap_halves(Shape shape);
  // factor-2 space-to-depth: (H, W, C) -> (H/2, W/2, 4C)
  static std::unique_ptr<PermutationLayer> squeeze(Shape shape);

  PermutationLayer(Shape in_shape, Shape out_shape, std::vector<std::size_t> perm, std::string kind);

  const char* kind() const override { return kind_.c_str(); }
  void fwd(const double* x, double* y, double* factored, double& logdet,
           LayerCache* cache) const override;
  void inv(const double* y, const double* factored, double* x) const override;
  void bwd(const LayerCache& cache, const double* dy, const double* dfactored, double dlogdet,
           double* dx, double* dparams) const override;

  bool constant_volume() const override { return true; }
  bool volume_preserving() const override { return true; }

  const std::vector<std::size_t>& perm() const { return perm_; }

 private:
  std::vector<std::size_t> perm_;
  std::string kind_;
};

// Splits off the trailing half of the dims/channels into the latent output.
class FactorOutLayer : public FlowLayer {
 public:
  explicit FactorOutLayer(Shape shape);

  const char* kind() const override { return "factor-out"; }
  std::size_t factored_size() const override { return idx_factor_.size(); }
  const Shape& factored_shape() const { return factored_shape_; }

  void fwd(const double* x, double* y, double* factored, double& logdet,
           LayerCache* cache) const override;
  void inv(const double* y, const double* factored, double* x) const override;
  void bwd(const LayerCache& cache, const double* dy, const double* dfactored, double dlogdet,
           double* dx, double* dparams) const override;

  bool constant_volume() const override { return true; }
  bool volume_preserving() const override { return true; }

 private:
  std::vector<std::size_t> idx_keep_, idx_factor_;
  Shape factored_shape_;
};

// Spec-surface wrappers that run one layer over a batch.
struct LayerForwardResult {
  Tensor y;
  std::vector<double> logdet;
  Tensor factored;  // empty unless the layer factors out
};
LayerForwardResult layer_forward(const FlowLayer& layer, const Tensor& x);
Tensor layer_inverse(const FlowLayer& layer, const Tensor& y, const Tensor* factored = nullptr);

}  // namespace flowlab
