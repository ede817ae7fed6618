#pragma once

#include <iosfwd>
#include <string>

#include "flowlab/tensor.hpp"

namespace flowlab {

// Binary tensor container, little-endian:
//   magic "FLT1" | u32 rank | u64 extents[rank] | f64 payload (row-major)
// Used for datasets, latent dumps and checkpoint parameter blocks.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace flowlab
