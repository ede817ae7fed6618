#pragma once

#include <string>
#include <vector>

#include "flowlab/rng.hpp"
#include "flowlab/tensor.hpp"

namespace flowlab {

// A loaded or generated collection of examples. `scaled` distinguishes raw
// integer pixels (0..255) from values already mapped into [0,1) / reals.
struct Dataset {
  Tensor data;  // {N, H, W, C} or {N, D}
  std::vector<int> labels;
  bool scaled = false;
  std::string provenance;

  std::size_t count() const { return data.batch(); }
};

// IDX image/label container (big-endian header, u8 payload).
Dataset load_idx(const std::string& path);
// Lossless re-serialization of an unscaled image dataset.
void save_idx(const std::string& path, const Dataset& dataset);

// Two interleaved half-circles of radius 1; the second moon is the first
// point-reflected and shifted by (1.0, -0.5). Gaussian noise per coordinate.
Dataset gen_two_moons(std::size_t n, double noise_sigma, Rng& rng);

// Tiles 2-D coordinates D/2 times, drawing fresh noise for every tile so the
// covariance keeps full rank.
Dataset replicate_dims(const Dataset& base, std::size_t dims, double noise_sigma, Rng& rng);

Dataset gen_diag_gaussian(std::size_t n, const std::vector<double>& mean,
                          const std::vector<double>& variance, Rng& rng);

Dataset gen_constant(double value, const Shape& example_shape, std::size_t n);
Dataset gen_uniform_random(const Shape& example_shape, std::size_t n, Rng& rng);

// Exact division by 256; rejects datasets that are already scaled.
Dataset scale_pixels(const Dataset& raw);

void save_dataset_csv(const std::string& path, const Dataset& dataset);

}  // namespace flowlab
