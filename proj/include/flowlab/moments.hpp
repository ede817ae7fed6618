#pragma once

#include <vector>

#include "flowlab/parallel.hpp"
#include "flowlab/tensor.hpp"

namespace flowlab {

// Per-dimension first and second moments plus the per-channel spatial
// variance sums S_c = sum_{h,w} var[h,w,c] that drive the gap predictor.
// Flat data treats every dimension as its own channel.
struct DataMoments {
  std::vector<double> mean;              // per dimension, 1/N
  std::vector<double> variance;          // per dimension, 1/(N-1)
  std::vector<double> channel_var_sums;  // S_c
  std::size_t count = 0;
  Shape example_shape;
};

DataMoments compute_moments(const Tensor& data, par::Exec mode = par::Exec::Parallel);

// x' = lambda x + (1 - lambda) * 0.5 on [0,1]-scaled inputs; shrinks every
// per-dimension variance by lambda^2.
Tensor gray_images(const Tensor& x, double lambda);

}  // namespace flowlab
