#pragma once

#include <memory>
#include <string>

#include "hubmt/model.hpp"
#include "hubmt/optim.hpp"

namespace hubmt {

// Versioned binary container: model config, vocabulary (manifest + rows via
// the parameter section), every named parameter, optimizer state and the
// step counter, closed by a CRC32 over all preceding bytes. Round trips are
// bit-exact; any corrupted byte fails the checksum.

struct LoadedCheckpoint {
  std::unique_ptr<TranslationModel> model;
  OptimizerConfig optimizer_config;
  std::unordered_map<std::string, Optimizer::MomentState> optimizer_state;
  int64_t optimizer_steps = 0;
  int64_t step = 0;
};

void save_checkpoint(const TranslationModel& m, const Optimizer* opt, int64_t step,
                     const std::string& path);
LoadedCheckpoint load_checkpoint(const std::string& path);

uint32_t crc32(const void* data, size_t len, uint32_t seed = 0);

}  // namespace hubmt
