#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "knobtuner/trainer.hpp"

namespace knobtuner {

// Everything needed to resume training or run online tuning: agent weights
// and optimizer state, the replay buffer, hints with their current
// priorities, the RNG state, trainer progress, and the workload fingerprint.
// Doubles survive the JSON round trip exactly (shortest-round-trip
// serialization), so save/load/save is byte-stable.
struct TrainCheckpoint {
  int format = 1;
  std::uint64_t catalog_fingerprint = 0;
  std::string dbms;
  WorkloadMix workload;
  std::vector<std::string> condition_tags;  // under the default config
  TrainConfig config;
  std::string rng_state;
  Trainer::Progress progress;
};

void save_checkpoint(const std::filesystem::path& path, const Trainer& trainer);

// Validates the catalog fingerprint against `env` and rebuilds a Trainer
// positioned exactly where the saved one stopped.
std::unique_ptr<Trainer> load_checkpoint(const std::filesystem::path& path,
                                         Environment& env,
                                         MachineProfile profile);

// Fingerprint-only read used by the agents pool (no network rebuild).
struct CheckpointInfo {
  std::uint64_t catalog_fingerprint = 0;
  std::string dbms;
  WorkloadMix workload;
  std::vector<std::string> condition_tags;
};
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

}  // namespace knobtuner
