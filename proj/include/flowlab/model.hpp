#pragma once

#include <memory>
#include <string>
#include <vector>

#include "flowlab/layers.hpp"
#include "flowlab/parallel.hpp"
#include "flowlab/tensor.hpp"

namespace flowlab {

struct ModelConfig {
  enum class Variant { CV, NvpExp, NvpSigmoid };

  Variant variant = Variant::CV;
  Shape input_shape;              // {D} or {H, W, C}
  std::size_t blocks = 1;
  std::size_t couplings = 2;      // flow steps per block
  std::size_t hidden = 32;
  bool use_invconv = true;        // false: swap-halves permutation mixer
  bool multiscale = false;        // factor out half the dims between blocks
  bool clamp_scale = true;        // exp scales pass through tanh(s) * s_max
  double scale_clamp = 5.0;

  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
};

const char* variant_name(ModelConfig::Variant v);
ModelConfig::Variant variant_from_name(const std::string& name);

// Ordered composition of invertible layers. The latent vector concatenates
// the factored-out parts in occurrence order followed by the final output;
// its length always equals the input length.
class FlowModel {
 public:
  FlowModel() = default;
  FlowModel(Shape input_shape, std::vector<std::unique_ptr<FlowLayer>> layers);

  const Shape& input_shape() const { return input_shape_; }
  std::size_t dim() const { return dim_; }
  std::size_t num_layers() const { return layers_.size(); }
  FlowLayer& layer(std::size_t i) { return *layers_[i]; }
  const FlowLayer& layer(std::size_t i) const { return *layers_[i]; }
  const std::vector<Shape>& factor_shapes() const { return factor_shapes_; }

  std::size_t param_size() const { return param_size_; }
  std::size_t param_offset(std::size_t layer_index) const { return param_offsets_[layer_index]; }
  void gather_params(std::vector<double>& out) const;
  void scatter_params(std::span<const double> params);
  void init_params(Rng& rng);
  // Call after writing parameters through raw pointers.
  void refresh();

  bool constant_volume() const;

  // Per-example core. z and x hold dim() values; cache enables backward_one.
  void forward_one(const double* x, double* z, double& logdet, std::vector<LayerCache>* cache,
                   std::vector<double>* per_layer_logdet = nullptr) const;
  void inverse_one(const double* z, double* x) const;
  // dz: gradient wrt z; dlogdet: gradient wrt this example's logdet.
  // dx may be null; dparams (size param_size) is accumulated.
  void backward_one(const std::vector<LayerCache>& cache, const double* dz, double dlogdet,
                    double* dx, double* dparams) const;

  struct ForwardResult {
    Tensor z;                                   // {N, D}
    std::vector<double> logdet;                 // per example
    std::vector<std::vector<double>> per_layer; // [layer][example]
  };
  ForwardResult forward(const Tensor& x, par::Exec mode = par::Exec::Parallel) const;
  Tensor inverse(const Tensor& z, par::Exec mode = par::Exec::Parallel) const;

 private:
  void check_example_shape(const Tensor& t) const;

  Shape input_shape_;
  std::size_t dim_ = 0;
  std::vector<std::unique_ptr<FlowLayer>> layers_;
  std::vector<Shape> factor_shapes_;
  std::vector<std::size_t> factor_offsets_;  // z offset per factor-out layer, by layer index
  std::size_t final_offset_ = 0;
  std::size_t final_size_ = 0;
  std::vector<std::size_t> param_offsets_;
  std::size_t param_size_ = 0;
  std::size_t max_width_ = 0;
};

// Architecture template: per block, `couplings` steps of coupling + mixer
// (1x1 conv or swap permutation); squeeze and optional factor-out between
// blocks. Grayscale images are squeezed once up front so channels can split.
FlowModel build_model(const ModelConfig& config, Rng& rng);

}  // namespace flowlab
