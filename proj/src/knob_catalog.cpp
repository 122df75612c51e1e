#include "knobtuner/knob_catalog.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "knobtuner/errors.hpp"
#include "knobtuner/text_config.hpp"

namespace knobtuner {

std::string to_string(KnobKind kind) {
  switch (kind) {
    case KnobKind::Integer: return "integer";
    case KnobKind::Real: return "real";
    case KnobKind::Boolean: return "boolean";
    case KnobKind::Enumeration: return "enumeration";
  }
  return "integer";
}

KnobKind knob_kind_from_string(const std::string& text) {
  if (text == "integer") return KnobKind::Integer;
  if (text == "real") return KnobKind::Real;
  if (text == "boolean") return KnobKind::Boolean;
  if (text == "enumeration") return KnobKind::Enumeration;
  throw ConfigError("unknown knob kind '" + text + "'");
}

namespace {

void validate_spec(const KnobSpec& spec) {
  if (spec.name.empty()) throw ConfigError("knob with empty name");
  if (spec.kind == KnobKind::Boolean) {
    if (spec.min_value != 0.0 || spec.max_value != 1.0) {
      throw ConfigError("knob '" + spec.name + "': boolean range must be [0, 1]");
    }
  } else if (spec.kind == KnobKind::Enumeration) {
    if (spec.enum_values.size() < 2) {
      throw ConfigError("knob '" + spec.name + "': enumeration needs at least 2 values");
    }
    if (spec.min_value != 0.0 ||
        spec.max_value != static_cast<double>(spec.enum_values.size() - 1)) {
      throw ConfigError("knob '" + spec.name + "': enumeration range must be [0, " +
                        std::to_string(spec.enum_values.size() - 1) + "]");
    }
  } else {
    if (!(spec.min_value < spec.max_value)) {
      throw ConfigError("knob '" + spec.name + "': empty range (min >= max)");
    }
  }
  if (spec.default_value < spec.min_value || spec.default_value > spec.max_value) {
    throw ConfigError("knob '" + spec.name + "': default " +
                      std::to_string(spec.default_value) + " outside range");
  }
}

}  // namespace

Catalog::Catalog(std::string dbms, std::vector<KnobSpec> knobs)
    : dbms_(std::move(dbms)), knobs_(std::move(knobs)) {
  std::string fp_input = dbms_;
  for (std::size_t i = 0; i < knobs_.size(); ++i) {
    const KnobSpec& spec = knobs_[i];
    validate_spec(spec);
    auto [it, inserted] = index_.emplace(spec.name, i);
    if (!inserted) throw ConfigError("duplicate knob name '" + spec.name + "'");
    std::ostringstream os;
    os << '|' << spec.name << ':' << to_string(spec.kind) << ':' << spec.min_value
       << ':' << spec.max_value;
    fp_input += os.str();
  }
  fingerprint_ = fnv1a(fp_input);
}

const KnobSpec* Catalog::find(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &knobs_[it->second];
}

std::size_t Catalog::index_of(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? npos : it->second;
}

double KnobConfig::at(const std::string& name) const {
  auto it = values.find(name);
  if (it == values.end()) throw ConfigError("config has no knob '" + name + "'");
  return it->second;
}

KnobConfig default_config(const Catalog& catalog) {
  KnobConfig config;
  for (const KnobSpec& spec : catalog.knobs()) {
    config.values[spec.name] = spec.default_value;
  }
  return config;
}

double normalize(const KnobSpec& spec, double raw) {
  if (raw < spec.min_value || raw > spec.max_value) {
    std::ostringstream os;
    os << "knob '" << spec.name << "': raw value " << raw << " outside ["
       << spec.min_value << ", " << spec.max_value << "]";
    throw ConfigError(os.str());
  }
  return 2.0 * (raw - spec.min_value) / spec.span() - 1.0;
}

double denormalize(const KnobSpec& spec, double a, ClampStats* stats) {
  if (a < -1.0 || a > 1.0) {
    if (stats) ++stats->clamped;
    a = std::clamp(a, -1.0, 1.0);
  }
  double raw = spec.min_value + (a + 1.0) / 2.0 * spec.span();
  if (spec.discrete()) raw = std::round(raw);  // half away from zero
  return std::clamp(raw, spec.min_value, spec.max_value);
}

std::string to_string(const Violation& v) {
  switch (v.kind) {
    case Violation::Kind::Missing: return "missing knob '" + v.knob + "'";
    case Violation::Kind::Unknown: return "unknown knob '" + v.knob + "'";
    case Violation::Kind::OutOfRange:
      return "knob '" + v.knob + "' out of range: " + v.detail;
  }
  return v.knob;
}

std::vector<Violation> validate_config(const Catalog& catalog,
                                       const KnobConfig& config) {
  std::vector<Violation> out;
  for (const KnobSpec& spec : catalog.knobs()) {
    auto it = config.values.find(spec.name);
    if (it == config.values.end()) {
      out.push_back({Violation::Kind::Missing, spec.name, {}});
      continue;
    }
    if (it->second < spec.min_value || it->second > spec.max_value) {
      std::ostringstream os;
      os << it->second << " not in [" << spec.min_value << ", " << spec.max_value << "]";
      out.push_back({Violation::Kind::OutOfRange, spec.name, os.str()});
    }
  }
  for (const auto& [name, value] : config.values) {
    if (!catalog.find(name)) {
      out.push_back({Violation::Kind::Unknown, name, {}});
    }
  }
  return out;
}

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, ',')) {
    size_t b = item.find_first_not_of(" \t");
    size_t e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

KnobSpec knob_from_section(const ConfigSection& sec) {
  KnobSpec spec;
  spec.name = sec.get_string("name");
  spec.kind = knob_kind_from_string(sec.get_string("kind", "integer"));
  spec.unit = sec.get_string("unit", "");
  spec.restart_required = sec.get_bool("restart_required", false);

  if (spec.kind == KnobKind::Boolean) {
    spec.min_value = 0.0;
    spec.max_value = 1.0;
    spec.default_value = sec.get_bool("default", false) ? 1.0 : 0.0;
    return spec;
  }
  if (spec.kind == KnobKind::Enumeration) {
    spec.enum_values = split_list(sec.get_string("values"));
    if (spec.enum_values.size() < 2) {
      throw ConfigError("line " + std::to_string(sec.line) + ": knob '" + spec.name +
                        "': enumeration needs at least 2 values");
    }
    spec.min_value = 0.0;
    spec.max_value = static_cast<double>(spec.enum_values.size() - 1);
    std::string def = sec.get_string("default");
    auto it = std::find(spec.enum_values.begin(), spec.enum_values.end(), def);
    if (it != spec.enum_values.end()) {
      spec.default_value = static_cast<double>(it - spec.enum_values.begin());
    } else {
      spec.default_value = sec.get_number("default");
    }
    return spec;
  }

  spec.min_value = sec.get_size("min");
  spec.max_value = sec.get_size("max");
  spec.default_value = sec.get_size("default");
  if (!(spec.min_value < spec.max_value)) {
    throw ConfigError("line " + std::to_string(sec.line) + ": knob '" + spec.name +
                      "': empty range (min >= max)");
  }
  return spec;
}

KnobSpec knob_from_json(const nlohmann::json& j) {
  KnobSpec spec;
  spec.name = j.at("name").get<std::string>();
  spec.kind = knob_kind_from_string(j.value("kind", "integer"));
  spec.unit = j.value("unit", "");
  spec.restart_required = j.value("restart_required", false);
  if (spec.kind == KnobKind::Enumeration) {
    spec.enum_values = j.at("values").get<std::vector<std::string>>();
    spec.min_value = 0.0;
    spec.max_value = static_cast<double>(spec.enum_values.size()) - 1.0;
  } else if (spec.kind == KnobKind::Boolean) {
    spec.min_value = 0.0;
    spec.max_value = 1.0;
  } else {
    spec.min_value = j.at("min").is_string() ? parse_size(j.at("min").get<std::string>())
                                             : j.at("min").get<double>();
    spec.max_value = j.at("max").is_string() ? parse_size(j.at("max").get<std::string>())
                                             : j.at("max").get<double>();
  }
  const auto& def = j.at("default");
  if (def.is_string() && spec.kind == KnobKind::Enumeration) {
    auto it = std::find(spec.enum_values.begin(), spec.enum_values.end(),
                        def.get<std::string>());
    if (it == spec.enum_values.end()) {
      throw ConfigError("knob '" + spec.name + "': default not in enumeration");
    }
    spec.default_value = static_cast<double>(it - spec.enum_values.begin());
  } else if (def.is_string()) {
    spec.default_value = parse_size(def.get<std::string>());
  } else {
    spec.default_value = def.get<double>();
  }
  return spec;
}

}  // namespace

Catalog load_catalog(const std::filesystem::path& path) {
  std::string text = read_text_file(path);
  size_t first = text.find_first_not_of(" \t\r\n");
  bool is_json = path.extension() == ".json" ||
                 (first != std::string::npos && text[first] == '{');
  if (is_json) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    std::vector<KnobSpec> knobs;
    for (const auto& jk : j.at("knobs")) knobs.push_back(knob_from_json(jk));
    return Catalog(j.value("dbms", "unknown"), std::move(knobs));
  }

  ConfigText cfg = parse_config_text(text, path);
  std::vector<KnobSpec> knobs;
  for (const ConfigSection* sec : cfg.sections_named("knob")) {
    knobs.push_back(knob_from_section(*sec));
  }
  if (knobs.empty()) throw ConfigError(path.string() + ": no [knob] records");
  return Catalog(cfg.globals.get_string("dbms", "unknown"), std::move(knobs));
}

std::vector<double> to_action(const Catalog& catalog, const KnobConfig& config) {
  std::vector<double> action;
  action.reserve(catalog.size());
  for (const KnobSpec& spec : catalog.knobs()) {
    action.push_back(normalize(spec, config.at(spec.name)));
  }
  return action;
}

KnobConfig to_config(const Catalog& catalog, std::span<const double> action,
                     ClampStats* stats) {
  if (action.size() != catalog.size()) {
    throw ConfigError("action has " + std::to_string(action.size()) +
                      " components, catalog has " + std::to_string(catalog.size()));
  }
  KnobConfig config;
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    config.values[catalog.at(i).name] = denormalize(catalog.at(i), action[i], stats);
  }
  return config;
}

}  // namespace knobtuner
