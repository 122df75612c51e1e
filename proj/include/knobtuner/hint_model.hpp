#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "knobtuner/rng.hpp"

namespace knobtuner {

// Controlled vocabulary of condition tags. Three groups: workload
// characteristics, system state, resource usage.
const std::vector<std::string>& condition_vocabulary();
bool is_condition_tag(const std::string& tag);

// A set of condition tags describing a runtime environment (sorted, unique).
class ConditionSet {
 public:
  ConditionSet() = default;
  explicit ConditionSet(std::vector<std::string> tags);  // validates vocabulary

  const std::vector<std::string>& tags() const { return tags_; }
  bool contains(const std::string& tag) const;
  bool empty() const { return tags_.empty(); }
  std::size_t size() const { return tags_.size(); }

  void insert(const std::string& tag);

 private:
  std::vector<std::string> tags_;
};

// Applicability conditions attached to a hint. Unlike ConditionSet this also
// rejects contradictory tag pairs (read_heavy + write_heavy, memory_pressure
// + memory_headroom); an empty vector means the hint is unconditional.
class ConditionVector {
 public:
  ConditionVector() = default;
  explicit ConditionVector(std::vector<std::string> tags);

  const std::vector<std::string>& tags() const { return set_.tags(); }
  bool empty() const { return set_.empty(); }
  bool subset_of(const ConditionSet& current) const;

 private:
  ConditionSet set_;
};

enum class RecKind { SetExplicit, Increase, Decrease };

std::string to_string(RecKind kind);
RecKind rec_kind_from_string(const std::string& text);

// Recommended adjustment: either an explicit value with a unit (absolute
// like "4GB" or relative like "25% of memory") or a bare direction.
struct RecAction {
  RecKind kind = RecKind::Increase;
  double value = 0.0;   // set_explicit only
  std::string unit;     // "", "GB", "%", ...

  static RecAction increase() { return {RecKind::Increase, 0.0, {}}; }
  static RecAction decrease() { return {RecKind::Decrease, 0.0, {}}; }
  static RecAction set(double value, std::string unit = {}) {
    return {RecKind::SetExplicit, value, std::move(unit)};
  }
};

// The condition-aware tuning hint triple plus its dynamic priority.
struct TuningHint {
  std::uint64_t id = 0;  // stable handle for replay linkage
  std::string knob;
  RecAction action;
  ConditionVector conditions;
  std::string source;
  double priority = 0.5;  // uninformative starting point, see init_priority
  bool used_in_pretrain = false;
};

// Indices of hints whose condition tags are all present in `current`;
// unconditional hints always match. Input order is preserved.
std::vector<std::size_t> match_hints(std::span<const TuningHint> hints,
                                     const ConditionSet& current);

// Floor applied to priorities when drawing, so a zero-priority hint keeps a
// small chance of re-evaluation.
inline constexpr double kSelectionFloor = 0.01;

// Draws one index from `matched` with probability proportional to
// max(priority, kSelectionFloor). nullopt when `matched` is empty; the
// caller skips the adjustment in that case.
std::optional<std::size_t> select_hint(std::span<const TuningHint> hints,
                                       std::span<const std::size_t> matched,
                                       Rng& rng);

// prior' = (prior + (perf_t - perf_0) / perf_t) / 2, clamped to [0, 1].
// Requires perf_t > 0 (perf is a positive higher-is-better scalar).
double update_priority(double prior, double perf_t, double perf_0);

// Demonstration-time initialization: clamp(perf_imp, 0, 1).
double init_priority(double perf_imp);

// Hint file: {"format": 1, "hints": [...]}.
std::vector<TuningHint> load_hints(const std::filesystem::path& path);
void save_hints(const std::filesystem::path& path,
                std::span<const TuningHint> hints);

}  // namespace knobtuner
