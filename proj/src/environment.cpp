#include "knobtuner/environment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "knobtuner/errors.hpp"
#include "knobtuner/rng.hpp"
#include "knobtuner/text_config.hpp"

namespace knobtuner {

std::size_t MetricsSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].name == name) return i;
  }
  return npos;
}

double MetricsSnapshot::get(const std::string& name) const {
  std::size_t i = schema->index_of(name);
  if (i == MetricsSchema::npos) {
    throw ConfigError("metrics schema has no field '" + name + "'");
  }
  return values[i];
}

void WorkloadMix::validate() const {
  for (double f : {read, update, insert, scan}) {
    if (f < 0.0) throw ConfigError("workload fractions must be non-negative");
  }
  double sum = read + update + insert + scan;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("workload fractions must sum to 1, got " + std::to_string(sum));
  }
}

std::vector<ConditionRule> default_condition_rules() {
  using Op = ConditionRule::Op;
  return {
      {"read_frac", Op::Ge, 0.5, "read_heavy"},
      {"write_frac", Op::Ge, 0.5, "write_heavy"},
      {"buffer_hit_ratio", Op::Lt, 0.9, "low_buffer_ratio"},
      {"dirty_page_ratio", Op::Gt, 0.3, "dirty_pages"},
      {"mem_util", Op::Gt, 0.85, "memory_pressure"},
      {"mem_util", Op::Lt, 0.5, "memory_headroom"},
      // Threshold stands in for the workload median of sort_ops; env specs
      // override it with their measured value.
      {"sort_ops", Op::Gt, 100.0, "sort_ops"},
  };
}

namespace {

bool rule_fires(ConditionRule::Op op, double value, double threshold) {
  switch (op) {
    case ConditionRule::Op::Ge: return value >= threshold;
    case ConditionRule::Op::Gt: return value > threshold;
    case ConditionRule::Op::Le: return value <= threshold;
    case ConditionRule::Op::Lt: return value < threshold;
  }
  return false;
}

double rule_input(const ConditionRule& rule, const MetricsSnapshot& metrics,
                  const WorkloadMix& mix) {
  if (rule.input == "read_frac") return mix.read_frac();
  if (rule.input == "write_frac") return mix.write_frac();
  return metrics.get(rule.input);
}

}  // namespace

ConditionSet classify_conditions(const MetricsSnapshot& metrics,
                                 const WorkloadMix& mix,
                                 std::span<const ConditionRule> rules) {
  ConditionSet out;
  for (const ConditionRule& rule : rules) {
    if (rule_fires(rule.op, rule_input(rule, metrics, mix), rule.threshold)) {
      out.insert(rule.tag);
    }
  }
  return out;
}

std::vector<double> state_vector(const MetricsSnapshot& metrics) {
  std::vector<double> out;
  out.reserve(metrics.values.size());
  for (std::size_t i = 0; i < metrics.values.size(); ++i) {
    const auto& f = metrics.schema->fields[i];
    double scaled = (metrics.values[i] - f.lo) / (f.hi - f.lo);
    out.push_back(std::clamp(scaled, 0.0, 1.0));
  }
  return out;
}

Environment::Environment(std::shared_ptr<const Catalog> catalog, WorkloadMix mix,
                         std::shared_ptr<const MetricsSchema> schema,
                         std::vector<ConditionRule> rules)
    : catalog_(std::move(catalog)),
      mix_(mix),
      schema_(std::move(schema)),
      rules_(std::move(rules)) {
  mix_.validate();
  default_config_ = knobtuner::default_config(*catalog_);
  for (const ConditionRule& rule : rules_) {
    if (rule.input == "read_frac" || rule.input == "write_frac") continue;
    if (schema_->index_of(rule.input) == MetricsSchema::npos) {
      throw ConfigError("condition rule tag '" + rule.tag +
                        "' names unknown metric '" + rule.input + "'");
    }
    if (!is_condition_tag(rule.tag)) {
      throw ConfigError("condition rule emits unknown tag '" + rule.tag + "'");
    }
  }
}

ConditionSet Environment::classify(const MetricsSnapshot& metrics) const {
  return classify_conditions(metrics, mix_, rules_);
}

// ---------------------------------------------------------------------------
// Simulator

double KnobResponse::mu(const WorkloadMix& mix) const {
  double m = mu0 + mu_read * mix.read + mu_update * mix.update +
             mu_insert * mix.insert + mu_scan * mix.scan;
  return std::clamp(m, -1.0, 1.0);
}

void SimSpec::validate(const Catalog& catalog) const {
  if (base_perf <= 0.0) throw ConfigError("sim: base_perf must be positive");
  if (noise_sigma < 0.0) throw ConfigError("sim: noise_sigma must be >= 0");
  mix.validate();
  for (const KnobResponse& r : responses) {
    if (!catalog.find(r.knob)) throw ConfigError("sim response: unknown knob '" + r.knob + "'");
    if (r.weight < 0.0) throw ConfigError("sim response '" + r.knob + "': weight must be >= 0");
    if (r.width <= 0.0) throw ConfigError("sim response '" + r.knob + "': width must be > 0");
  }
  for (const Interaction& it : interactions) {
    if (!catalog.find(it.knob_a) || !catalog.find(it.knob_b)) {
      throw ConfigError("sim interaction references unknown knob");
    }
    if (std::abs(it.strength) >= 1.0) {
      throw ConfigError("sim interaction strength must satisfy |s| < 1");
    }
  }
  if (budget) {
    if (budget->penalty <= 0.0 || budget->penalty > 1.0) {
      throw ConfigError("sim memory budget: penalty must be in (0, 1]");
    }
    for (const std::string& k : budget->knobs) {
      if (!catalog.find(k)) throw ConfigError("sim memory budget: unknown knob '" + k + "'");
    }
  }
  for (const std::string* role : {&buffer_knob, &log_knob, &io_knob}) {
    if (!role->empty() && !catalog.find(*role)) {
      throw ConfigError("sim metric-role knob '" + *role + "' not in catalog");
    }
  }
}

double simulate_perf(const SimSpec& spec, const Catalog& catalog,
                     std::span<const double> x, std::uint64_t seed) {
  if (x.size() != catalog.size()) {
    throw ConfigError("simulate_perf: action dimension mismatch");
  }
  for (double v : x) {
    if (v < -1.0 - 1e-12 || v > 1.0 + 1e-12) {
      throw ConfigError("simulate_perf: action component outside [-1, 1]");
    }
  }

  double perf = spec.base_perf;
  for (const KnobResponse& r : spec.responses) {
    double xi = x[catalog.index_of(r.knob)];
    double d = xi - r.mu(spec.mix);
    perf *= 1.0 + r.weight * std::exp(-d * d / (2.0 * r.width * r.width));
  }
  for (const Interaction& it : spec.interactions) {
    perf *= 1.0 + it.strength * x[catalog.index_of(it.knob_a)] *
                      x[catalog.index_of(it.knob_b)];
  }
  if (spec.budget) {
    double total = 0.0;
    for (const std::string& k : spec.budget->knobs) {
      total += denormalize(*catalog.find(k), x[catalog.index_of(k)]);
    }
    if (total > spec.budget->budget_bytes) perf *= spec.budget->penalty;
  }
  if (spec.noise_sigma > 0.0) {
    Rng rng(seed);
    perf *= std::exp(rng.normal(0.0, spec.noise_sigma));
  }
  return perf;
}

namespace {

std::shared_ptr<const MetricsSchema> sim_schema(const SimSpec& spec) {
  auto schema = std::make_shared<MetricsSchema>();
  double ops_hi = spec.ops_scale * 5.0;
  schema->fields = {
      {"cpu_util", 0.0, 1.0},
      {"mem_util", 0.0, 1.0},
      {"buffer_hit_ratio", 0.0, 1.0},
      {"dirty_page_ratio", 0.0, 1.0},
      {"read_ops", 0.0, ops_hi},
      {"write_ops", 0.0, ops_hi},
      {"scan_ops", 0.0, ops_hi},
      {"sort_ops", 0.0, ops_hi},
      {"disk_io_rate", 0.0, spec.ops_scale},
  };
  return schema;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

SimEnvironment::SimEnvironment(std::shared_ptr<const Catalog> catalog, SimSpec spec,
                               std::shared_ptr<const MetricsSchema> schema,
                               std::vector<ConditionRule> rules)
    : Environment(std::move(catalog), spec.mix,
                  schema ? std::move(schema) : sim_schema(spec), std::move(rules)),
      spec_(std::move(spec)) {
  spec_.validate(*catalog_);
}

double SimEnvironment::noiseless_perf(std::span<const double> x) const {
  SimSpec quiet = spec_;
  quiet.noise_sigma = 0.0;
  return simulate_perf(quiet, *catalog_, x, 0);
}

Environment::Result SimEnvironment::evaluate(const KnobConfig& config,
                                             std::uint64_t seed) {
  auto violations = validate_config(*catalog_, config);
  if (!violations.empty()) {
    throw ConfigError("evaluate: invalid config: " + to_string(violations.front()));
  }
  std::vector<double> x = to_action(*catalog_, config);
  Result result;
  result.perf = simulate_perf(spec_, *catalog_, x, seed);
  result.metrics = metrics_for(config, x);
  return result;
}

// Analytic metric model. Throughput-style counters scale with the noiseless
// perf surface so the state responds to the configuration; ratios are
// logistic/affine in their role knobs. Formulas are documented with the env
// file format in the README.
MetricsSnapshot SimEnvironment::metrics_for(const KnobConfig& config,
                                            std::span<const double> x) const {
  const WorkloadMix& mix = spec_.mix;
  auto norm_of = [&](const std::string& knob) {
    return knob.empty() ? 0.0 : x[catalog_->index_of(knob)];
  };
  double x_bp = norm_of(spec_.buffer_knob);
  double x_log = norm_of(spec_.log_knob);
  double x_io = norm_of(spec_.io_knob);

  double bhr = 0.5 + 0.5 * sigmoid(4.0 * (x_bp + 0.55));
  double dirty = std::clamp(0.05 + 0.8 * mix.write_frac() -
                                0.15 * (x_log + 1.0) / 2.0 -
                                0.10 * (x_io + 1.0) / 2.0,
                            0.0, 1.0);
  double mem_bytes = spec_.os_base_bytes;
  if (spec_.budget) {
    for (const std::string& k : spec_.budget->knobs) mem_bytes += config.at(k);
  } else if (!spec_.buffer_knob.empty()) {
    mem_bytes += config.at(spec_.buffer_knob);
  }
  double mem_util = spec_.total_memory_bytes > 0.0
                        ? std::clamp(mem_bytes / spec_.total_memory_bytes, 0.0, 1.0)
                        : 0.0;
  double cpu = std::clamp(
      0.25 + 0.35 * mix.read_frac() + 0.25 * mix.write_frac() + 0.10 * (1.0 - bhr),
      0.0, 1.0);

  double throughput = noiseless_perf(x) / spec_.base_perf;
  double read_ops = mix.read * spec_.ops_scale * throughput;
  double write_ops = mix.write_frac() * spec_.ops_scale * throughput;
  double scan_ops = mix.scan * spec_.ops_scale * throughput;
  double sort_ops = spec_.sort_share * scan_ops;
  double disk_io = ((1.0 - bhr) * mix.read_frac() +
                    mix.write_frac() * (1.0 - 0.3 * (x_log + 1.0) / 2.0)) *
                   spec_.ops_scale;

  MetricsSnapshot snap;
  snap.schema = schema_;
  snap.values.resize(schema_->fields.size(), 0.0);
  auto set = [&](const std::string& name, double v) {
    std::size_t i = schema_->index_of(name);
    if (i != MetricsSchema::npos) snap.values[i] = v;
  };
  set("cpu_util", cpu);
  set("mem_util", mem_util);
  set("buffer_hit_ratio", bhr);
  set("dirty_page_ratio", dirty);
  set("read_ops", read_ops);
  set("write_ops", write_ops);
  set("scan_ops", scan_ops);
  set("sort_ops", sort_ops);
  set("disk_io_rate", disk_io);
  return snap;
}

// ---------------------------------------------------------------------------
// Spec file loading

namespace {

WorkloadMix parse_mix(const std::string& text, int line) {
  WorkloadMix mix;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    size_t colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("line " + std::to_string(line) +
                        ": workload entries are name:fraction");
    }
    std::string name = item.substr(0, colon);
    name.erase(std::remove_if(name.begin(), name.end(), ::isspace), name.end());
    double frac = std::stod(item.substr(colon + 1));
    if (name == "read") mix.read = frac;
    else if (name == "update") mix.update = frac;
    else if (name == "insert") mix.insert = frac;
    else if (name == "scan") mix.scan = frac;
    else throw ConfigError("line " + std::to_string(line) +
                           ": unknown workload component '" + name + "'");
  }
  mix.validate();
  return mix;
}

std::vector<std::string> parse_name_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

ConditionRule parse_rule(const ConfigSection& sec) {
  ConditionRule rule;
  std::string when = sec.get_string("when");
  std::istringstream is(when);
  std::string op;
  if (!(is >> rule.input >> op >> rule.threshold)) {
    throw ConfigError("line " + std::to_string(sec.line) +
                      ": rule must be 'when = input op threshold'");
  }
  if (op == ">=") rule.op = ConditionRule::Op::Ge;
  else if (op == ">") rule.op = ConditionRule::Op::Gt;
  else if (op == "<=") rule.op = ConditionRule::Op::Le;
  else if (op == "<") rule.op = ConditionRule::Op::Lt;
  else throw ConfigError("line " + std::to_string(sec.line) + ": unknown operator '" + op + "'");
  rule.tag = sec.get_string("tag");
  return rule;
}

}  // namespace

std::unique_ptr<Environment> load_environment(const std::filesystem::path& path) {
  ConfigText cfg = load_config_text(path);
  std::string kind = cfg.globals.get_string("kind", "simulator");

  std::filesystem::path catalog_path = cfg.globals.get_string("catalog");
  if (catalog_path.is_relative()) catalog_path = path.parent_path() / catalog_path;
  auto catalog = std::make_shared<Catalog>(load_catalog(catalog_path));

  const ConfigEntry* mix_entry = cfg.globals.find("workload");
  if (!mix_entry) throw ConfigError(path.string() + ": missing 'workload'");
  WorkloadMix mix = parse_mix(mix_entry->value, mix_entry->line);

  std::vector<ConditionRule> rules;
  for (const ConfigSection* sec : cfg.sections_named("rule")) {
    rules.push_back(parse_rule(*sec));
  }
  if (rules.empty()) rules = default_condition_rules();

  if (kind == "simulator") {
    SimSpec spec;
    spec.mix = mix;
    auto sims = cfg.sections_named("sim");
    if (sims.size() != 1) throw ConfigError(path.string() + ": expected one [sim] section");
    const ConfigSection& sim = *sims.front();
    spec.base_perf = sim.get_number("base_perf", 100.0);
    spec.noise_sigma = sim.get_number("noise_sigma", 0.0);
    spec.buffer_knob = sim.get_string("buffer_knob", "");
    spec.log_knob = sim.get_string("log_knob", "");
    spec.io_knob = sim.get_string("io_knob", "");
    spec.total_memory_bytes = sim.get_size("total_memory", 0.0);
    spec.os_base_bytes = sim.get_size("os_base", 0.0);
    spec.ops_scale = sim.get_number("ops_scale", 1000.0);
    spec.sort_share = sim.get_number("sort_share", 0.6);

    for (const ConfigSection* sec : cfg.sections_named("response")) {
      KnobResponse r;
      r.knob = sec->get_string("knob");
      r.weight = sec->get_number("weight");
      r.width = sec->get_number("width", 0.5);
      r.mu0 = sec->get_number("mu0", 0.0);
      r.mu_read = sec->get_number("mu_read", 0.0);
      r.mu_update = sec->get_number("mu_update", 0.0);
      r.mu_insert = sec->get_number("mu_insert", 0.0);
      r.mu_scan = sec->get_number("mu_scan", 0.0);
      spec.responses.push_back(std::move(r));
    }
    for (const ConfigSection* sec : cfg.sections_named("interaction")) {
      auto knobs = parse_name_list(sec->get_string("knobs"));
      if (knobs.size() != 2) {
        throw ConfigError("line " + std::to_string(sec->line) +
                          ": interaction needs exactly two knobs");
      }
      spec.interactions.push_back({knobs[0], knobs[1], sec->get_number("strength")});
    }
    if (auto budgets = cfg.sections_named("memory_budget"); !budgets.empty()) {
      if (budgets.size() > 1) {
        throw ConfigError(path.string() + ": at most one [memory_budget]");
      }
      MemoryBudget b;
      b.knobs = parse_name_list(budgets[0]->get_string("knobs"));
      b.budget_bytes = budgets[0]->get_size("budget");
      b.penalty = budgets[0]->get_number("penalty");
      spec.budget = std::move(b);
    }

    auto schema_ptr = sim_schema(spec);
    auto metric_secs = cfg.sections_named("metric");
    if (!metric_secs.empty()) {
      auto schema = std::make_shared<MetricsSchema>(*schema_ptr);
      for (const ConfigSection* sec : metric_secs) {
        std::string name = sec->get_string("name");
        std::size_t i = schema->index_of(name);
        if (i == MetricsSchema::npos) {
          throw ConfigError("line " + std::to_string(sec->line) +
                            ": simulator has no metric '" + name + "'");
        }
        schema->fields[i].lo = sec->get_number("lo", schema->fields[i].lo);
        schema->fields[i].hi = sec->get_number("hi", schema->fields[i].hi);
      }
      schema_ptr = schema;
    }
    return std::make_unique<SimEnvironment>(std::move(catalog), std::move(spec),
                                            std::move(schema_ptr), std::move(rules));
  }

  if (kind == "external") {
    auto adapters = cfg.sections_named("adapter");
    if (adapters.size() != 1) {
      throw ConfigError(path.string() + ": expected one [adapter] section");
    }
    const ConfigSection& ad = *adapters.front();
    AdapterSpec spec;
    spec.apply_command = ad.get_string("apply");
    spec.bench_command = ad.get_string("bench");
    spec.metrics_command = ad.get_string("collect");
    spec.perf_regex = ad.get_string("perf_regex");
    spec.metrics_file = ad.get_string("metrics_file");
    if (spec.metrics_file.is_relative()) {
      spec.metrics_file = path.parent_path() / spec.metrics_file;
    }
    spec.timeout_seconds = ad.get_number("timeout", 600.0);

    auto schema = std::make_shared<MetricsSchema>();
    for (const ConfigSection* sec : cfg.sections_named("metric")) {
      schema->fields.push_back({sec->get_string("name"), sec->get_number("lo", 0.0),
                                sec->get_number("hi", 1.0)});
    }
    if (schema->fields.empty()) {
      throw ConfigError(path.string() + ": external env needs [metric] sections");
    }
    return std::make_unique<ExternalEnvironment>(std::move(catalog), mix,
                                                 std::move(schema), std::move(rules),
                                                 std::move(spec),
                                                 path.parent_path());
  }

  throw ConfigError(path.string() + ": unknown environment kind '" + kind + "'");
}

void save_knob_config(const std::filesystem::path& path, const KnobConfig& config) {
  std::ostringstream os;
  for (const auto& [name, value] : config.values) {
    os << name << " = ";
    double rounded = std::round(value);
    if (std::abs(value - rounded) < 1e-9 && std::abs(value) < 1e15) {
      os << static_cast<long long>(rounded);
    } else {
      os << value;
    }
    os << "\n";
  }
  write_text_file(path, os.str());
}

KnobConfig load_knob_config(const std::filesystem::path& path) {
  ConfigText cfg = load_config_text(path);
  KnobConfig config;
  for (const ConfigEntry& e : cfg.globals.entries) {
    try {
      config.values[e.key] = parse_size(e.value);
    } catch (const ConfigError&) {
      throw ConfigError(path.string() + ":" + std::to_string(e.line) +
                        ": knob value is not a number: '" + e.value + "'");
    }
  }
  return config;
}

}  // namespace knobtuner
