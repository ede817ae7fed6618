#include "flowlab/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "flowlab/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor container I/O assumes a little-endian host");

namespace flowlab {
namespace {

constexpr char kMagic[4] = {'F', 'L', 'T', '1'};

template <class T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw TruncatedFile("tensor container ended mid-field");
  return v;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kMagic, 4);
  write_raw(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) write_raw(out, static_cast<std::uint64_t>(e));
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!out) throw IoError("tensor container write failed");
}

Tensor read_tensor(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in) throw TruncatedFile("tensor container shorter than its magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw BadMagic("expected FLT1 tensor container");
  const auto rank = read_raw<std::uint32_t>(in);
  if (rank > 8) throw CorruptCheckpoint("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = static_cast<std::size_t>(read_raw<std::uint64_t>(in));
  Tensor t(shape);
  in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!in) throw TruncatedFile("tensor payload shorter than its header promises");
  return t;
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_tensor(in);
}

}  // namespace flowlab
