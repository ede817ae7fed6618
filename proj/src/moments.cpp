#include "flowlab/moments.hpp"

#include "flowlab/errors.hpp"

namespace flowlab {

DataMoments compute_moments(const Tensor& data, par::Exec mode) {
  const std::size_t n = data.batch();
  if (n < 2) throw TooFewExamples("moments need at least 2 examples, got " + std::to_string(n));
  const std::size_t d = data.example_size();
  DataMoments m;
  m.count = n;
  m.example_shape = data.example_shape();
  m.mean.assign(d, 0.0);
  m.variance.assign(d, 0.0);

  par::for_chunks(d, 64, mode, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t j = begin; j < end; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += data[i * d + j];
      const double mu = sum / static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double dev = data[i * d + j] - mu;
        ss += dev * dev;
      }
      m.mean[j] = mu;
      m.variance[j] = ss / static_cast<double>(n - 1);
    }
  });

  if (m.example_shape.size() == 3) {
    const std::size_t c = m.example_shape[2];
    m.channel_var_sums.assign(c, 0.0);
    for (std::size_t j = 0; j < d; ++j) m.channel_var_sums[j % c] += m.variance[j];
  } else {
    m.channel_var_sums = m.variance;
  }
  return m;
}

Tensor gray_images(const Tensor& x, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw OutOfRange("graying weight must lie in [0,1], got " + std::to_string(lambda));
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    if (!(v >= 0.0 && v <= 1.0)) throw OutOfRange("gray_images expects inputs in [0,1]");
    out[i] = lambda * v + (1.0 - lambda) * 0.5;
  }
  return out;
}

}  // namespace flowlab
