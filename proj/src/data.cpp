#include "flowlab/data.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>

#include "flowlab/errors.hpp"

namespace flowlab {
namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::uint32_t read_be_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw TruncatedFile("IDX header truncated");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

void write_be_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Dataset load_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const std::uint32_t magic = read_be_u32(in);
  Dataset ds;
  ds.provenance = path;
  if (magic == kIdxImagesMagic) {
    const std::uint32_t n = read_be_u32(in);
    const std::uint32_t h = read_be_u32(in);
    const std::uint32_t w = read_be_u32(in);
    const std::size_t total = std::size_t(n) * h * w;
    std::vector<unsigned char> bytes(total);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(total));
    if (!in) throw TruncatedFile("IDX image payload shorter than header promises");
    Tensor t({n, h, w, 1});
    for (std::size_t i = 0; i < total; ++i) t[i] = static_cast<double>(bytes[i]);
    ds.data = std::move(t);
  } else if (magic == kIdxLabelsMagic) {
    const std::uint32_t n = read_be_u32(in);
    std::vector<unsigned char> bytes(n);
    in.read(reinterpret_cast<char*>(bytes.data()), n);
    if (!in) throw TruncatedFile("IDX label payload shorter than header promises");
    ds.labels.assign(bytes.begin(), bytes.end());
    ds.data = Tensor({std::size_t(n), 1});
    for (std::size_t i = 0; i < n; ++i) ds.data[i] = static_cast<double>(bytes[i]);
  } else {
    throw BadMagic("unrecognized IDX magic " + std::to_string(magic));
  }
  return ds;
}

void save_idx(const std::string& path, const Dataset& dataset) {
  if (dataset.scaled) throw InvalidConfig("save_idx needs raw integer pixels");
  const Shape& s = dataset.data.shape();
  if (s.size() != 4 || s[3] != 1) throw InvalidConfig("save_idx expects {N,H,W,1} image data");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_be_u32(out, kIdxImagesMagic);
  write_be_u32(out, static_cast<std::uint32_t>(s[0]));
  write_be_u32(out, static_cast<std::uint32_t>(s[1]));
  write_be_u32(out, static_cast<std::uint32_t>(s[2]));
  for (std::size_t i = 0; i < dataset.data.size(); ++i) {
    const double v = dataset.data[i];
    if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v)) {
      throw OutOfRange("pixel value " + std::to_string(v) + " is not an integer in 0..255");
    }
    const unsigned char b = static_cast<unsigned char>(v);
    out.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!out) throw IoError("IDX write failed: " + path);
}

Dataset gen_two_moons(std::size_t n, double noise_sigma, Rng& rng) {
  if (n < 1) throw InvalidConfig("two moons needs n >= 1");
  Dataset ds;
  ds.provenance = "two-moons";
  ds.scaled = true;
  Tensor t({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = rng.uniform() * std::numbers::pi;
    double x, y;
    if (rng.uniform() < 0.5) {
      x = std::cos(theta);
      y = std::sin(theta);
    } else {
      x = 1.0 - std::cos(theta);
      y = -0.5 - std::sin(theta);
    }
    t[i * 2 + 0] = x + noise_sigma * rng.normal();
    t[i * 2 + 1] = y + noise_sigma * rng.normal();
  }
  ds.data = std::move(t);
  return ds;
}

Dataset replicate_dims(const Dataset& base, std::size_t dims, double noise_sigma, Rng& rng) {
  if (dims % 2 != 0 || dims < 2) throw InvalidDim("replicated dimensionality must be even and >= 2");
  if (base.data.rank() != 2 || base.data.extent(1) != 2) {
    throw InvalidDim("replicate_dims expects a {N,2} dataset");
  }
  const std::size_t n = base.count();
  const std::size_t tiles = dims / 2;
  Dataset ds;
  ds.provenance = base.provenance + "-replicated";
  ds.scaled = base.scaled;
  Tensor t({n, dims});
  for (std::size_t i = 0; i < n; ++i) {
    const double x = base.data[i * 2 + 0];
    const double y = base.data[i * 2 + 1];
    for (std::size_t k = 0; k < tiles; ++k) {
      t[i * dims + 2 * k + 0] = x + noise_sigma * rng.normal();
      t[i * dims + 2 * k + 1] = y + noise_sigma * rng.normal();
    }
  }
  ds.data = std::move(t);
  return ds;
}

Dataset gen_diag_gaussian(std::size_t n, const std::vector<double>& mean,
                          const std::vector<double>& variance, Rng& rng) {
  if (mean.size() != variance.size()) throw ShapeMismatch("mean/variance length mismatch");
  for (double v : variance) {
    if (v < 0.0) throw OutOfRange("variances must be nonnegative");
  }
  const std::size_t d = mean.size();
  Dataset ds;
  ds.provenance = "diag-gaussian";
  ds.scaled = true;
  Tensor t({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      t[i * d + j] = mean[j] + std::sqrt(variance[j]) * rng.normal();
  ds.data = std::move(t);
  return ds;
}

Dataset gen_constant(double value, const Shape& example_shape, std::size_t n) {
  if (!(value >= 0.0 && value <= 255.0)) throw OutOfRange("constant pixel value must be in 0..255");
  Dataset ds;
  ds.provenance = "constant";
  Shape shape = example_shape;
  shape.insert(shape.begin(), n);
  ds.data = Tensor::full(shape, value);
  return ds;
}

Dataset gen_uniform_random(const Shape& example_shape, std::size_t n, Rng& rng) {
  Dataset ds;
  ds.provenance = "uniform-random";
  Shape shape = example_shape;
  shape.insert(shape.begin(), n);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(rng.next_u64() % 256);
  ds.data = std::move(t);
  return ds;
}

Dataset scale_pixels(const Dataset& raw) {
  if (raw.scaled) throw AlreadyScaled("dataset is already on the [0,1) scale");
  Dataset ds;
  ds.provenance = raw.provenance;
  ds.labels = raw.labels;
  ds.scaled = true;
  Tensor t(raw.data.shape());
  for (std::size_t i = 0; i < raw.data.size(); ++i) {
    const double v = raw.data[i];
    if (!(v >= 0.0 && v <= 255.0)) throw OutOfRange("raw pixel outside 0..255");
    t[i] = v / 256.0;
  }
  ds.data = std::move(t);
  return ds;
}

void save_dataset_csv(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const std::size_t d = dataset.data.example_size();
  for (std::size_t j = 0; j < d; ++j) out << (j ? ",x" : "x") << j;
  out << "\n";
  out.precision(17);
  for (std::size_t i = 0; i < dataset.count(); ++i) {
    const auto row = dataset.data.example(i);
    for (std::size_t j = 0; j < d; ++j) out << (j ? "," : "") << row[j];
    out << "\n";
  }
  if (!out) throw IoError("dataset CSV write failed");
}

}  // namespace flowlab
