#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace knobtuner {

// Line-oriented key/value format shared by the catalog, environment spec,
// train config, knob config and machine profile files:
//
//   # comment
//   global_key = value
//   [record]
//   key = value
//
// `[name]` opens a repeated record; pairs before the first record are
// globals. Values keep their raw text; typed accessors parse on demand and
// report the offending line on failure.
struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

struct ConfigSection {
  std::string name;
  std::vector<ConfigEntry> entries;
  int line = 0;

  const ConfigEntry* find(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_number(const std::string& key) const;
  double get_number(const std::string& key, double fallback) const;
  // Accepts byte suffixes (4K, 16M, 2G, ...) in addition to plain numbers.
  double get_size(const std::string& key) const;
  double get_size(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
};

struct ConfigText {
  std::filesystem::path origin;
  ConfigSection globals;  // name empty
  std::vector<ConfigSection> sections;

  std::vector<const ConfigSection*> sections_named(const std::string& name) const;
};

ConfigText parse_config_text(const std::string& text,
                             const std::filesystem::path& origin = {});
ConfigText load_config_text(const std::filesystem::path& path);

// "4G" -> 4*2^30. Suffixes B, K/KB/KiB, M, G, T (binary multiples, case
// insensitive); plain numbers pass through. Throws ConfigError otherwise.
double parse_size(const std::string& text);

// Splits "12.5GB" style text into magnitude and unit suffix ("" if none).
struct ValueWithUnit {
  double value = 0.0;
  std::string unit;
};
std::optional<ValueWithUnit> split_value_unit(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// FNV-1a, used for catalog fingerprints and prompt-fixture keys.
std::uint64_t fnv1a(std::string_view data);
std::string to_hex(std::uint64_t value);

}  // namespace knobtuner
