#include "knobtuner/text_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "knobtuner/errors.hpp"

namespace knobtuner {

namespace {

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

[[noreturn]] void fail(const std::filesystem::path& origin, int line,
                       const std::string& what) {
  std::ostringstream os;
  if (!origin.empty()) os << origin.string() << ":";
  os << line << ": " << what;
  throw ConfigError(os.str());
}

double parse_number(const std::string& text, const std::string& key, int line) {
  try {
    size_t pos = 0;
    double v = std::stod(text, &pos);
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line) + ": value of '" + key +
                      "' is not a number: '" + text + "'");
  }
}

}  // namespace

const ConfigEntry* ConfigSection::find(const std::string& key) const {
  for (const auto& e : entries) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

std::string ConfigSection::get_string(const std::string& key) const {
  const ConfigEntry* e = find(key);
  if (!e) {
    throw ConfigError("missing key '" + key + "'" +
                      (name.empty() ? "" : " in [" + name + "] (line " +
                                               std::to_string(line) + ")"));
  }
  return e->value;
}

std::string ConfigSection::get_string(const std::string& key,
                                      const std::string& fallback) const {
  const ConfigEntry* e = find(key);
  return e ? e->value : fallback;
}

double ConfigSection::get_number(const std::string& key) const {
  const ConfigEntry* e = find(key);
  if (!e) get_string(key);  // throws with context
  return parse_number(e->value, key, e->line);
}

double ConfigSection::get_number(const std::string& key, double fallback) const {
  const ConfigEntry* e = find(key);
  if (!e) return fallback;
  return parse_number(e->value, key, e->line);
}

double ConfigSection::get_size(const std::string& key) const {
  const ConfigEntry* e = find(key);
  if (!e) {
    get_string(key);  // throws with context
  }
  try {
    return parse_size(e->value);
  } catch (const ConfigError& err) {
    throw ConfigError("line " + std::to_string(e->line) + ": " + err.what());
  }
}

double ConfigSection::get_size(const std::string& key, double fallback) const {
  const ConfigEntry* e = find(key);
  if (!e) return fallback;
  try {
    return parse_size(e->value);
  } catch (const ConfigError& err) {
    throw ConfigError("line " + std::to_string(e->line) + ": " + err.what());
  }
}

bool ConfigSection::get_bool(const std::string& key, bool fallback) const {
  const ConfigEntry* e = find(key);
  if (!e) return fallback;
  std::string v = e->value;
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError("line " + std::to_string(e->line) + ": value of '" + key +
                    "' is not a boolean: '" + e->value + "'");
}

std::vector<const ConfigSection*> ConfigText::sections_named(
    const std::string& name) const {
  std::vector<const ConfigSection*> out;
  for (const auto& s : sections) {
    if (s.name == name) out.push_back(&s);
  }
  return out;
}

ConfigText parse_config_text(const std::string& text,
                             const std::filesystem::path& origin) {
  ConfigText cfg;
  cfg.origin = origin;
  ConfigSection* current = &cfg.globals;

  std::istringstream is(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    if (size_t hash = raw.find('#'); hash != std::string::npos) {
      raw.erase(hash);
    }
    std::string line = trim(raw);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail(origin, lineno, "unterminated section header");
      std::string name = trim(std::string_view(line).substr(1, line.size() - 2));
      if (name.empty()) fail(origin, lineno, "empty section name");
      cfg.sections.push_back(ConfigSection{name, {}, lineno});
      current = &cfg.sections.back();
      continue;
    }

    size_t eq = line.find('=');
    if (eq == std::string::npos) fail(origin, lineno, "expected 'key = value'");
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) fail(origin, lineno, "empty key");
    current->entries.push_back(ConfigEntry{key, value, lineno});
  }
  return cfg;
}

ConfigText load_config_text(const std::filesystem::path& path) {
  return parse_config_text(read_text_file(path), path);
}

double parse_size(const std::string& text) {
  auto parts = split_value_unit(text);
  if (!parts) throw ConfigError("not a size: '" + text + "'");
  if (parts->unit.empty()) return parts->value;

  std::string u = parts->unit;
  std::transform(u.begin(), u.end(), u.begin(), ::toupper);
  // Strip a trailing B / iB so K, KB and KiB all scale the same way.
  if (u.size() >= 2 && u.compare(u.size() - 2, 2, "IB") == 0) {
    u.erase(u.size() - 2);
  } else if (u.size() >= 2 && u.back() == 'B') {
    u.pop_back();
  }
  double mul = 1.0;
  if (u.empty() || u == "B") {
    mul = 1.0;
  } else if (u == "K") {
    mul = 1024.0;
  } else if (u == "M") {
    mul = 1024.0 * 1024.0;
  } else if (u == "G") {
    mul = 1024.0 * 1024.0 * 1024.0;
  } else if (u == "T") {
    mul = 1024.0 * 1024.0 * 1024.0 * 1024.0;
  } else {
    throw ConfigError("unknown size suffix '" + parts->unit + "' in '" + text + "'");
  }
  return parts->value * mul;
}

std::optional<ValueWithUnit> split_value_unit(const std::string& text) {
  std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &pos);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  while (pos < t.size() && std::isspace(static_cast<unsigned char>(t[pos]))) ++pos;
  return ValueWithUnit{v, t.substr(pos)};
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string to_hex(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

}  // namespace knobtuner
