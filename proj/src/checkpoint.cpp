#include "flowlab/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "flowlab/errors.hpp"
#include "flowlab/rng.hpp"
#include "flowlab/tensor_io.hpp"

namespace flowlab {
namespace {

constexpr char kMagic[4] = {'F', 'L', 'W', '1'};
constexpr char kOptMagic[4] = {'O', 'P', 'T', '1'};

template <class T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CorruptCheckpoint("checkpoint ended mid-field");
  return v;
}

}  // namespace

void checkpoint_save(const std::string& path, const FlowModel& model, const ModelConfig& config,
                     const OptimizerState* optimizer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic, 4);
  write_raw(out, kCheckpointVersion);
  const std::string cfg = config.to_text();
  write_raw(out, static_cast<std::uint64_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  std::uint32_t tensor_count = 0;
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    if (model.layer(i).param_size() > 0) ++tensor_count;
  }
  write_raw(out, tensor_count);
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    const FlowLayer& l = model.layer(i);
    if (l.param_size() == 0) continue;
    Tensor block({l.param_size()},
                 std::vector<double>(l.param_data(), l.param_data() + l.param_size()));
    write_tensor(out, block);
  }
  if (optimizer) {
    out.write(kOptMagic, 4);
    write_raw(out, optimizer->step);
    Tensor accum({optimizer->accum.size()}, optimizer->accum);
    write_tensor(out, accum);
  }
  if (!out) throw IoError("checkpoint write failed: " + path);
}

LoadedCheckpoint checkpoint_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw CorruptCheckpoint("not a FLW1 checkpoint: " + path);
  }
  const auto version = read_raw<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw VersionMismatch("checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  const auto cfg_len = read_raw<std::uint64_t>(in);
  if (cfg_len > (1u << 20)) throw CorruptCheckpoint("implausible config block size");
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
  if (!in) throw CorruptCheckpoint("config block truncated");

  LoadedCheckpoint loaded{FlowModel{}, ModelConfig::from_text(cfg_text), std::nullopt};
  Rng init_rng(0);  // parameters are overwritten below
  loaded.model = build_model(loaded.config, init_rng);

  const auto tensor_count = read_raw<std::uint32_t>(in);
  std::size_t loaded_tensors = 0;
  try {
    for (std::size_t i = 0; i < loaded.model.num_layers(); ++i) {
      FlowLayer& l = loaded.model.layer(i);
      if (l.param_size() == 0) continue;
      const Tensor block = read_tensor(in);
      if (block.size() != l.param_size()) {
        throw CorruptCheckpoint("parameter block " + std::to_string(loaded_tensors) + " has " +
                                std::to_string(block.size()) + " values, layer needs " +
                                std::to_string(l.param_size()));
      }
      std::memcpy(l.param_data(), block.data(), block.size() * sizeof(double));
      ++loaded_tensors;
    }
  } catch (const TruncatedFile& e) {
    throw CorruptCheckpoint(std::string("parameter blocks truncated: ") + e.what());
  } catch (const BadMagic& e) {
    throw CorruptCheckpoint(std::string("parameter block corrupt: ") + e.what());
  }
  if (loaded_tensors != tensor_count) {
    throw CorruptCheckpoint("checkpoint promises " + std::to_string(tensor_count) +
                            " parameter blocks, model has " + std::to_string(loaded_tensors));
  }
  loaded.model.refresh();

  char opt_magic[4];
  in.read(opt_magic, 4);
  if (in) {
    if (std::memcmp(opt_magic, kOptMagic, 4) != 0) {
      throw CorruptCheckpoint("unexpected trailing bytes after parameter blocks");
    }
    OptimizerState opt;
    opt.step = read_raw<std::uint64_t>(in);
    try {
      const Tensor accum = read_tensor(in);
      opt.accum.assign(accum.data(), accum.data() + accum.size());
    } catch (const TruncatedFile& e) {
      throw CorruptCheckpoint(std::string("optimizer block truncated: ") + e.what());
    }
    if (opt.accum.size() != loaded.model.param_size()) {
      throw CorruptCheckpoint("optimizer accumulator length mismatch");
    }
    loaded.optimizer = std::move(opt);
  }
  return loaded;
}

}  // namespace flowlab
