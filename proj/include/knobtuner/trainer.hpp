#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "knobtuner/agent.hpp"
#include "knobtuner/environment.hpp"
#include "knobtuner/hint_model.hpp"
#include "knobtuner/replay.hpp"

namespace knobtuner {

struct MachineProfile {
  double total_memory_bytes = 0.0;
  int cores = 0;
};

MachineProfile load_machine_profile(const std::filesystem::path& path);

struct TrainConfig {
  int episodes = 20;            // M
  int steps_per_episode = 10;   // T
  int finetune_evals = 0;       // cap on fine-tune evaluations; 0 -> M*T
  int pretrain_steps = 500;
  int grad_steps_per_episode = 0;  // 0 -> one per step collected that episode
  std::size_t batch = 32;
  double k_adjust = 0.1;        // adjustment coefficient k
  int z_intervals = 10;         // logarithmic interval count z
  double beta_shaping = 0.2;    // shaping coefficient
  double tau_threshold = 0.1;   // hints at or below it don't count violations
  double hint_adjust_prob = 1.0;
  bool update_hint_priorities = true;
  std::uint64_t seed = 1;
  BufferConfig buffer;
  AgentHyper agent;

  void validate() const;
  void apply_override(const std::string& key, const std::string& value);
  int finetune_budget() const {
    return finetune_evals > 0 ? finetune_evals : episodes * steps_per_episode;
  }
};

TrainConfig load_train_config(const std::filesystem::path& path);

// Resolves an explicit recommendation to raw units: byte suffixes directly,
// "%" against the machine profile's total memory.
double resolve_explicit(const RecAction& action, const KnobSpec& spec,
                        const MachineProfile& profile);

// Single-knob adjustment. Explicit hints set the resolved value; implicit
// ones step by k * (e^{(n+1)C} - e^{nC}) where C = ln(max-min)/z and n is
// the logarithmic interval holding (current - min). Boolean/enumeration
// knobs step one index. Result clamped to range, discrete kinds rounded;
// every other knob is left untouched.
KnobConfig adjust_knob(const TuningHint& hint, const KnobConfig& config,
                       const Catalog& catalog, double k, int z,
                       const MachineProfile& profile);

// r = (perf_t - perf_0) / perf_0; perf_0 must be positive.
double reward(double perf_t, double perf_0);

// Violations of matched hints with priority > tau: an implicit direction is
// violated when the knob moved the other way; an explicit value when the
// knob moved further from it than before. No change is never a violation.
int count_violations(std::span<const double> action,
                     std::span<const double> prev_action,
                     std::span<const TuningHint> hints,
                     std::span<const std::size_t> matched, double tau,
                     const Catalog& catalog, const MachineProfile& profile);

// f = beta * violations / matched_count (0 when nothing matched);
// r' = (1 - f) * r.
double shaped_reward(double r, int violations, int matched_count, double beta);

struct StepRecord {
  int eval_index = 0;  // 1-based across demo + fine-tune evaluations
  std::string phase;   // "demo" or "finetune"
  int episode = -1;
  int step = -1;
  bool failed = false;
  double perf = 0.0;
  double reward_value = 0.0;
  double shaped = 0.0;
  int matched_count = 0;
  int violations = 0;
  std::int64_t selected_hint = -1;  // hint id, -1 when none
  double best_perf = 0.0;
  std::vector<double> priorities;  // hint priorities after this step

  nlohmann::ordered_json to_json() const;
};

// Append-only JSON-lines stream; one record per evaluation.
class ReportWriter {
 public:
  ReportWriter() = default;
  explicit ReportWriter(const std::filesystem::path& path);

  void write(const StepRecord& record);
  void write_meta(const nlohmann::ordered_json& meta);
  bool enabled() const { return out_.is_open(); }

 private:
  std::ofstream out_;
};

struct TrainSummary {
  double perf_0 = 0.0;
  double best_perf = 0.0;
  double best_gain = 0.0;  // (best_perf - perf_0) / perf_0
  KnobConfig best_config;
  int demo_evals = 0;
  int finetune_evals = 0;
  int failed_evals = 0;
  int pretrain_steps = 0;
  int shaping_anomalies = 0;  // r < 0 shrunk by a positive shaping factor
  std::uint64_t action_clamps = 0;
  std::vector<std::pair<std::string, double>> hint_priorities;

  nlohmann::ordered_json to_json() const;
};

struct PretrainStats {
  std::vector<double> critic_l1;  // per gradient step
};

// Drives the offline phases: baseline measurement, demonstration collection
// from matched hints, pre-training, and fine-tuning with hint-guided action
// adjustment, priority updates and reward shaping.
class Trainer {
 public:
  Trainer(Environment& env, std::vector<TuningHint> hints, TrainConfig cfg,
          MachineProfile profile);

  TrainSummary run(ReportWriter* report);

  // Phase API (run() calls these in order); exposed for tests.
  void measure_baseline();
  void collect_demonstrations(ReportWriter* report);
  PretrainStats pretrain();
  void finetune(ReportWriter* report);

  const TrainConfig& config() const { return cfg_; }
  // Resume support: lets the runner extend the episode budget of a loaded
  // checkpoint. Changing seeds or buffer shape mid-run is on the caller.
  TrainConfig& mutable_config() { return cfg_; }
  Environment& env() { return env_; }
  const Environment& env() const { return env_; }
  Agent& agent() { return agent_; }
  const Agent& agent() const { return agent_; }
  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  std::vector<TuningHint>& hints() { return hints_; }
  const std::vector<TuningHint>& hints() const { return hints_; }
  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }
  double perf_0() const { return perf0_; }
  double best_perf() const { return best_perf_; }
  const KnobConfig& best_config() const { return best_config_; }
  const std::vector<double>& default_state() const { return default_state_; }
  const MetricsSnapshot& default_metrics() const { return default_metrics_; }
  const MachineProfile& profile() const { return profile_; }
  int episodes_done() const { return episodes_done_; }
  int eval_count() const { return eval_count_; }
  TrainSummary summary() const;

  // Fingerprint stored with checkpoints: declared workload mix plus the
  // condition tags observed under the default configuration.
  ConditionSet default_conditions() const;

  // Checkpoint restore hooks.
  struct Progress {
    int episodes_done = 0;
    int eval_count = 0;
    int demo_evals = 0;
    int finetune_evals = 0;
    int failed_evals = 0;
    int pretrain_steps_done = 0;
    int shaping_anomalies = 0;
    std::uint64_t action_clamps = 0;
    double perf_0 = 0.0;
    double best_perf = 0.0;
    KnobConfig best_config;
    std::vector<double> default_state;
    std::vector<double> default_metric_values;
  };
  Progress progress() const;
  void restore_progress(const Progress& p);

 private:
  std::vector<double> priorities_snapshot() const;
  std::map<std::uint64_t, double> hint_prior_map() const;
  void gradient_step(bool pretraining, double* l1_out);
  void note_best(double perf, const KnobConfig& config);

  Environment& env_;
  std::vector<TuningHint> hints_;
  TrainConfig cfg_;
  MachineProfile profile_;
  Rng rng_;
  Agent agent_;
  ReplayBuffer buffer_;
  ClampStats clamps_;

  bool baseline_done_ = false;
  double perf0_ = 0.0;
  MetricsSnapshot default_metrics_;
  std::vector<double> default_state_;
  double best_perf_ = 0.0;
  KnobConfig best_config_;
  int eval_count_ = 0;
  int demo_evals_ = 0;
  int finetune_evals_ = 0;
  int failed_evals_ = 0;
  int episodes_done_ = 0;
  int pretrain_steps_done_ = 0;
  int shaping_anomalies_ = 0;
};

}  // namespace knobtuner
