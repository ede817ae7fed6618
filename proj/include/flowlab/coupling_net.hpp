#pragma once

#include <cstddef>
#include <vector>

#include "flowlab/rng.hpp"

namespace flowlab {

struct NetCache {
  std::vector<double> in;
  std::vector<double> h1;  // tanh outputs; tanh' recovered as 1 - h^2
  std::vector<double> h2;
};

// Three-layer conditioner for coupling layers: dense for flat inputs,
// 3x3 same-padding convolutions for image inputs, tanh hidden activations.
// The last layer's weights and biases start at exactly zero.
class CouplingNet {
 public:
  CouplingNet() = default;

  static CouplingNet dense(std::size_t in_dim, std::size_t hidden, std::size_t out_dim);
  static CouplingNet conv(std::size_t height, std::size_t width, std::size_t in_ch,
                          std::size_t hidden_ch, std::size_t out_ch);

  void init_params(Rng& rng);
  std::size_t param_size() const { return params_.size(); }
  double* param_data() { return params_.data(); }
  const double* param_data() const { return params_.data(); }

  std::size_t in_size() const;
  std::size_t out_size() const;

  void forward(const double* in, double* out, NetCache* cache) const;
  // din_add is accumulated (+=); dparams is accumulated at this net's offsets.
  void backward(const NetCache& cache, const double* dout, double* din_add, double* dparams) const;

 private:
  void dense_forward(const double* in, double* out, NetCache* cache) const;
  void dense_backward(const NetCache& cache, const double* dout, double* din_add, double* dparams) const;
  void conv_forward(const double* in, double* out, NetCache* cache) const;
  void conv_backward(const NetCache& cache, const double* dout, double* din_add, double* dparams) const;

  bool conv_ = false;
  std::size_t in_dim_ = 0;   // dense: features, conv: channels
  std::size_t hidden_ = 0;
  std::size_t out_dim_ = 0;
  std::size_t height_ = 1, width_ = 1;
  std::vector<double> params_;
  std::size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0, w3_ = 0, b3_ = 0;
};

}  // namespace flowlab
