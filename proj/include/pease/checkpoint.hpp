#pragma once

#include <string>

#include "pease/model.hpp"
#include "pease/train_types.hpp"

namespace pease {

// Versioned binary (CBOR) container: model config, parameters by name,
// optimizer moments, scheduler counters, seed, metric history.
struct Checkpoint {
  int version = 1;
  ModelConfig model;
  Params params;
  TrainConfig train;
  TrainState state;
  AdamState adam;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pease
