#pragma once

#include <cstdint>
#include <string>

#include "gaid/model.hpp"

// Checkpoint directory layout: index.json describing dims, modes and the
// parameter table, plus one GFT file per parameter tensor.

namespace gaid {

struct CheckpointMeta {
  ModelDims dims;
  std::int64_t frames = 12;
  Granularity granularity = Granularity::Frame;
  PerturbMode perturb = PerturbMode::Dasp;
};

void save_checkpoint(const std::string& dir, const ModelParams<double>& params,
                     const CheckpointMeta& meta);
void save_checkpoint(const std::string& dir, const ModelParams<float>& params,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  ModelParams<double> params;
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& dir);

Granularity granularity_from_name(const std::string& name);
PerturbMode perturb_mode_from_name(const std::string& name);

}  // namespace gaid
