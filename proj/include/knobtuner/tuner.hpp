#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "knobtuner/checkpoint.hpp"
#include "knobtuner/environment.hpp"

namespace knobtuner {

// One trained agent stored in the pool directory, keyed by the workload it
// was trained under.
struct AgentPoolEntry {
  std::filesystem::path checkpoint;
  WorkloadMix workload;
  std::vector<std::string> condition_tags;
  std::uint64_t catalog_fingerprint = 0;
  std::filesystem::file_time_type written;
};

struct WorkloadFingerprint {
  WorkloadMix workload;
  std::vector<std::string> condition_tags;
};

// L1 distance over the mix fractions and Jaccard distance over the tags,
// equally weighted.
double fingerprint_distance(const WorkloadFingerprint& a,
                            const WorkloadFingerprint& b);

// Scans *.ckpt.json files (falling back to *.json) in the pool directory.
std::vector<AgentPoolEntry> scan_pool(const std::filesystem::path& dir);

// Nearest entry by fingerprint distance; ties go to the most recently
// written checkpoint. Throws ConfigError on an empty pool.
const AgentPoolEntry& select_agent(const std::vector<AgentPoolEntry>& pool,
                                   const WorkloadFingerprint& target);

struct TuneOptions {
  int budget = 10;
  std::uint64_t seed = 1;
  double noise_divisor = 4.0;  // online exploration runs at sigma / divisor
  bool online_learn = false;   // continued network updates, off by default
  bool update_hint_priorities = true;
  double hint_adjust_prob = 1.0;
};

struct TuneIteration {
  int iteration = 0;
  bool failed = false;
  double perf = 0.0;
  double gain = 0.0;
  std::int64_t selected_hint = -1;
  double best_perf = 0.0;
  double elapsed_seconds = 0.0;
};

struct TuneResult {
  double perf_0 = 0.0;
  // Recommendation never regresses below the default configuration.
  KnobConfig best_config;
  double best_perf = 0.0;
  double best_gain = 0.0;  // PG_best under higher-is-better perf
  // Best evaluated during the iterations, reported separately when it lost
  // to the default.
  double best_explored_perf = 0.0;
  KnobConfig best_explored_config;
  std::vector<TuneIteration> iterations;
  double tuning_cost_seconds = 0.0;  // sum of evaluation durations

  nlohmann::ordered_json to_json() const;
};

// Loads the checkpointed agent and spends exactly `budget` evaluations
// (failures included) after the uncounted perf_0 baseline.
TuneResult online_tune(const std::filesystem::path& checkpoint, Environment& env,
                       const MachineProfile& profile, const TuneOptions& options);

}  // namespace knobtuner
