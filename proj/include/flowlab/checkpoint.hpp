#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowlab/model.hpp"

namespace flowlab {

struct OptimizerState {
  std::vector<double> accum;  // RMSProp second-moment accumulators
  std::uint64_t step = 0;
};

// Checkpoint container:
//   magic "FLW1" | u32 version | u64 config_len | config text |
//   u32 tensor_count | FLT1 parameter block per layer with parameters |
//   optional "OPT1" | u64 step | FLT1 accumulator block
// Parameter bytes round-trip exactly; version mismatches are rejected.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void checkpoint_save(const std::string& path, const FlowModel& model, const ModelConfig& config,
                     const OptimizerState* optimizer = nullptr);

struct LoadedCheckpoint {
  FlowModel model;
  ModelConfig config;
  std::optional<OptimizerState> optimizer;
};

LoadedCheckpoint checkpoint_load(const std::string& path);

}  // namespace flowlab
