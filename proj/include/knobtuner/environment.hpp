#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "knobtuner/hint_model.hpp"
#include "knobtuner/knob_catalog.hpp"

namespace knobtuner {

// Fixed per-environment metric schema; `lo`/`hi` are the declared scaling
// bounds used by state_vector, not observed extremes.
struct MetricsSchema {
  struct Field {
    std::string name;
    double lo = 0.0;
    double hi = 1.0;
  };
  std::vector<Field> fields;

  std::size_t index_of(const std::string& name) const;  // npos when absent
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

// Runtime metrics in schema order.
struct MetricsSnapshot {
  std::shared_ptr<const MetricsSchema> schema;
  std::vector<double> values;

  double get(const std::string& name) const;
};

struct WorkloadMix {
  double read = 0.0;
  double update = 0.0;
  double insert = 0.0;
  double scan = 0.0;

  double read_frac() const { return read + scan; }
  double write_frac() const { return update + insert; }
  void validate() const;  // fractions sum to 1
};

// One classification rule: `input` is a metric name or the pseudo-metrics
// read_frac / write_frac derived from the workload mix.
struct ConditionRule {
  enum class Op { Ge, Gt, Le, Lt };
  std::string input;
  Op op;
  double threshold = 0.0;
  std::string tag;
};

std::vector<ConditionRule> default_condition_rules();

// Applies the rule table; pure function of its inputs.
ConditionSet classify_conditions(const MetricsSnapshot& metrics,
                                 const WorkloadMix& mix,
                                 std::span<const ConditionRule> rules);

// Metrics in schema order, min-max scaled to [0, 1] by the declared bounds;
// out-of-bound values clamp.
std::vector<double> state_vector(const MetricsSnapshot& metrics);

class Environment {
 public:
  virtual ~Environment() = default;

  const Catalog& catalog() const { return *catalog_; }
  const KnobConfig& default_config() const { return default_config_; }
  const std::shared_ptr<const MetricsSchema>& schema() const { return schema_; }
  const WorkloadMix& workload() const { return mix_; }
  const std::vector<ConditionRule>& rules() const { return rules_; }

  struct Result {
    MetricsSnapshot metrics;
    double perf = 0.0;  // higher is better, always > 0
  };

  // Evaluating the default config defines perf_0. The simulator is
  // reproducible bit-exactly for a given (config, seed); adapters ignore
  // the seed and may throw EvalError.
  virtual Result evaluate(const KnobConfig& config, std::uint64_t seed) = 0;

  ConditionSet classify(const MetricsSnapshot& metrics) const;

 protected:
  Environment(std::shared_ptr<const Catalog> catalog, WorkloadMix mix,
              std::shared_ptr<const MetricsSchema> schema,
              std::vector<ConditionRule> rules);

  std::shared_ptr<const Catalog> catalog_;
  KnobConfig default_config_;
  WorkloadMix mix_;
  std::shared_ptr<const MetricsSchema> schema_;
  std::vector<ConditionRule> rules_;
};

// ---------------------------------------------------------------------------
// Simulator

// Per-knob response curve in normalized action space. The optimum is a
// declared function of the workload mix:
//   mu(mix) = clamp(mu0 + mu_read*read + mu_update*update
//                       + mu_insert*insert + mu_scan*scan, -1, 1)
struct KnobResponse {
  std::string knob;
  double weight = 0.0;  // w >= 0
  double width = 0.5;   // gaussian sigma
  double mu0 = 0.0;
  double mu_read = 0.0, mu_update = 0.0, mu_insert = 0.0, mu_scan = 0.0;

  double mu(const WorkloadMix& mix) const;
};

struct Interaction {
  std::string knob_a, knob_b;
  double strength = 0.0;  // |strength| < 1 keeps perf positive
};

struct MemoryBudget {
  std::vector<std::string> knobs;  // raw values summed in bytes
  double budget_bytes = 0.0;
  double penalty = 1.0;  // multiplier in (0, 1]
};

struct SimSpec {
  double base_perf = 100.0;
  double noise_sigma = 0.0;
  WorkloadMix mix;
  std::vector<KnobResponse> responses;
  std::vector<Interaction> interactions;
  std::optional<MemoryBudget> budget;

  // Metric-model parameters; the analytic formulas live in
  // SimEnvironment::metrics_for and are documented in the env file format.
  std::string buffer_knob, log_knob, io_knob;
  double total_memory_bytes = 0.0;
  double os_base_bytes = 0.0;
  double ops_scale = 1000.0;
  double sort_share = 0.6;

  void validate(const Catalog& catalog) const;
};

// perf = base_perf * prod_k (1 + w_k exp(-(x_k - mu_k)^2 / (2 sigma_k^2)))
//        * prod_pairs (1 + strength * x_a * x_b)
//        * budget_penalty * exp(eps),  eps ~ N(0, noise_sigma^2) from seed.
double simulate_perf(const SimSpec& spec, const Catalog& catalog,
                     std::span<const double> x, std::uint64_t seed);

class SimEnvironment : public Environment {
 public:
  SimEnvironment(std::shared_ptr<const Catalog> catalog, SimSpec spec,
                 std::shared_ptr<const MetricsSchema> schema,
                 std::vector<ConditionRule> rules);

  Result evaluate(const KnobConfig& config, std::uint64_t seed) override;

  const SimSpec& spec() const { return spec_; }
  // Noiseless perf surface, used by the grid oracle.
  double noiseless_perf(std::span<const double> x) const;

 private:
  MetricsSnapshot metrics_for(const KnobConfig& config,
                              std::span<const double> x) const;
  SimSpec spec_;
};

// ---------------------------------------------------------------------------
// External adapter

struct AdapterSpec {
  std::string apply_command;    // {config_path} placeholder
  std::string bench_command;
  std::string metrics_command;
  std::string perf_regex;       // first capture group -> perf
  std::filesystem::path metrics_file;  // flat name=value lines
  double timeout_seconds = 600.0;
};

class ExternalEnvironment : public Environment {
 public:
  ExternalEnvironment(std::shared_ptr<const Catalog> catalog, WorkloadMix mix,
                      std::shared_ptr<const MetricsSchema> schema,
                      std::vector<ConditionRule> rules, AdapterSpec adapter,
                      std::filesystem::path work_dir);

  // Runs apply -> benchmark -> collect in order; never concurrently.
  Result evaluate(const KnobConfig& config, std::uint64_t seed) override;

 private:
  AdapterSpec adapter_;
  std::filesystem::path work_dir_;
};

// Runs a shell command with a deadline. Returns exit status and captured
// stdout+stderr; throws EvalError on timeout.
struct CommandResult {
  int exit_code = 0;
  std::string output;
};
CommandResult run_command(const std::string& command, double timeout_seconds);

// Dispatches on `kind = simulator | external` in the env spec file.
std::unique_ptr<Environment> load_environment(const std::filesystem::path& path);

// Writes a KnobConfig as flat `name = value` lines (adapter input format).
void save_knob_config(const std::filesystem::path& path, const KnobConfig& config);
KnobConfig load_knob_config(const std::filesystem::path& path);

}  // namespace knobtuner
