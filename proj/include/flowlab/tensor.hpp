#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace flowlab {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major array of 64-bit reals. Batched data uses shape
// {N, H, W, C} or {N, D}; per-example shapes drop the leading N.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor full(Shape shape, double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_[axis]; }

  // Leading axis is the batch; per-example element count.
  std::size_t batch() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t example_size() const;
  Shape example_shape() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> flat() { return {data_.data(), data_.size()}; }
  std::span<const double> flat() const { return {data_.data(), data_.size()}; }
  std::span<double> example(std::size_t n);
  std::span<const double> example(std::size_t n) const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace flowlab
