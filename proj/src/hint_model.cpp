#include "knobtuner/hint_model.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "knobtuner/errors.hpp"
#include "knobtuner/text_config.hpp"

namespace knobtuner {

const std::vector<std::string>& condition_vocabulary() {
  static const std::vector<std::string> vocab = {
      // workload characteristics
      "read_heavy", "write_heavy", "mixed", "sort_ops", "no_index", "wal_heavy",
      "join_heavy",
      // system state
      "low_buffer_ratio", "dirty_pages", "cache_issue",
      // resource usage
      "memory_pressure", "memory_headroom", "cpu_pressure", "disk_pressure"};
  return vocab;
}

bool is_condition_tag(const std::string& tag) {
  const auto& vocab = condition_vocabulary();
  return std::find(vocab.begin(), vocab.end(), tag) != vocab.end();
}

ConditionSet::ConditionSet(std::vector<std::string> tags) {
  for (auto& tag : tags) {
    if (!is_condition_tag(tag)) {
      throw ConfigError("unknown condition tag '" + tag + "'");
    }
  }
  std::sort(tags.begin(), tags.end());
  tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
  tags_ = std::move(tags);
}

bool ConditionSet::contains(const std::string& tag) const {
  return std::binary_search(tags_.begin(), tags_.end(), tag);
}

void ConditionSet::insert(const std::string& tag) {
  if (!is_condition_tag(tag)) {
    throw ConfigError("unknown condition tag '" + tag + "'");
  }
  auto it = std::lower_bound(tags_.begin(), tags_.end(), tag);
  if (it == tags_.end() || *it != tag) tags_.insert(it, tag);
}

namespace {

const std::vector<std::pair<std::string, std::string>>& contradictions() {
  static const std::vector<std::pair<std::string, std::string>> pairs = {
      {"read_heavy", "write_heavy"}, {"memory_pressure", "memory_headroom"}};
  return pairs;
}

}  // namespace

ConditionVector::ConditionVector(std::vector<std::string> tags)
    : set_(std::move(tags)) {
  for (const auto& [a, b] : contradictions()) {
    if (set_.contains(a) && set_.contains(b)) {
      throw ConfigError("contradictory condition tags '" + a + "' and '" + b + "'");
    }
  }
}

bool ConditionVector::subset_of(const ConditionSet& current) const {
  for (const std::string& tag : set_.tags()) {
    if (!current.contains(tag)) return false;
  }
  return true;
}

std::string to_string(RecKind kind) {
  switch (kind) {
    case RecKind::SetExplicit: return "set_explicit";
    case RecKind::Increase: return "increase";
    case RecKind::Decrease: return "decrease";
  }
  return "increase";
}

RecKind rec_kind_from_string(const std::string& text) {
  if (text == "set_explicit" || text == "set") return RecKind::SetExplicit;
  if (text == "increase") return RecKind::Increase;
  if (text == "decrease") return RecKind::Decrease;
  throw ConfigError("unknown rec_action kind '" + text + "'");
}

std::vector<std::size_t> match_hints(std::span<const TuningHint> hints,
                                     const ConditionSet& current) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < hints.size(); ++i) {
    if (hints[i].conditions.subset_of(current)) out.push_back(i);
  }
  return out;
}

std::optional<std::size_t> select_hint(std::span<const TuningHint> hints,
                                       std::span<const std::size_t> matched,
                                       Rng& rng) {
  if (matched.empty()) return std::nullopt;
  double total = 0.0;
  for (std::size_t idx : matched) {
    total += std::max(hints[idx].priority, kSelectionFloor);
  }
  double u = rng.uniform() * total;
  double cum = 0.0;
  for (std::size_t idx : matched) {
    cum += std::max(hints[idx].priority, kSelectionFloor);
    if (u < cum) return idx;
  }
  return matched.back();  // u == total after rounding
}

double update_priority(double prior, double perf_t, double perf_0) {
  if (!(perf_t > 0.0)) {
    throw EvalError("update_priority: perf_t must be positive, got " +
                    std::to_string(perf_t));
  }
  double gain = (perf_t - perf_0) / perf_t;
  return std::clamp(0.5 * (prior + gain), 0.0, 1.0);
}

double init_priority(double perf_imp) { return std::clamp(perf_imp, 0.0, 1.0); }

namespace {

nlohmann::ordered_json hint_to_json(const TuningHint& hint) {
  nlohmann::ordered_json j;
  j["knob"] = hint.knob;
  nlohmann::ordered_json action;
  action["kind"] = to_string(hint.action.kind);
  if (hint.action.kind == RecKind::SetExplicit) {
    action["value"] = hint.action.value;
    if (!hint.action.unit.empty()) action["unit"] = hint.action.unit;
  }
  j["action"] = action;
  j["conditions"] = hint.conditions.tags();
  j["source"] = hint.source;
  j["priority"] = hint.priority;
  return j;
}

TuningHint hint_from_json(const nlohmann::json& j, std::uint64_t id) {
  TuningHint hint;
  hint.id = id;
  hint.knob = j.at("knob").get<std::string>();
  const auto& action = j.at("action");
  hint.action.kind = rec_kind_from_string(action.at("kind").get<std::string>());
  if (hint.action.kind == RecKind::SetExplicit) {
    const auto& v = action.at("value");
    if (v.is_string()) {
      auto parts = split_value_unit(v.get<std::string>());
      if (!parts) throw ConfigError("hint for '" + hint.knob + "': bad value");
      hint.action.value = parts->value;
      hint.action.unit = parts->unit;
    } else {
      hint.action.value = v.get<double>();
    }
    if (action.contains("unit")) hint.action.unit = action.at("unit").get<std::string>();
  }
  if (j.contains("conditions")) {
    hint.conditions = ConditionVector(j.at("conditions").get<std::vector<std::string>>());
  }
  hint.source = j.value("source", "");
  hint.priority = std::clamp(j.value("priority", 0.5), 0.0, 1.0);
  return hint;
}

}  // namespace

std::vector<TuningHint> load_hints(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!j.contains("format")) {
    throw ConfigError(path.string() + ": missing top-level \"format\" field");
  }
  std::vector<TuningHint> hints;
  std::uint64_t id = 0;
  for (const auto& jh : j.at("hints")) {
    try {
      hints.push_back(hint_from_json(jh, id++));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": hint " + std::to_string(id - 1) + ": " +
                        e.what());
    }
  }
  return hints;
}

void save_hints(const std::filesystem::path& path,
                std::span<const TuningHint> hints) {
  nlohmann::ordered_json j;
  j["format"] = 1;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const TuningHint& hint : hints) arr.push_back(hint_to_json(hint));
  j["hints"] = arr;
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace knobtuner
