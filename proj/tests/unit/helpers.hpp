#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include "knobtuner/knob_catalog.hpp"

namespace kt_test {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    dir_ = std::filesystem::temp_directory_path() /
           ("knobtuner_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter_++));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  const std::filesystem::path& path() const { return dir_; }
  std::filesystem::path operator/(const std::string& name) const {
    return dir_ / name;
  }

 private:
  static inline int counter_ = 0;
  std::filesystem::path dir_;
};

inline std::filesystem::path source_dir() { return KNOBTUNER_SOURCE_DIR; }
inline std::string cli_path() { return KNOBTUNER_CLI_PATH; }

inline knobtuner::KnobSpec spec0to100(knobtuner::KnobKind kind = knobtuner::KnobKind::Real) {
  knobtuner::KnobSpec spec;
  spec.name = "k";
  spec.kind = kind;
  spec.min_value = 0.0;
  spec.max_value = 100.0;
  spec.default_value = 50.0;
  return spec;
}

inline knobtuner::Catalog small_catalog() {
  using namespace knobtuner;
  KnobSpec a;
  a.name = "alpha";
  a.kind = KnobKind::Integer;
  a.min_value = 0;
  a.max_value = 100;
  a.default_value = 10;
  KnobSpec b;
  b.name = "beta";
  b.kind = KnobKind::Real;
  b.min_value = -1.0;
  b.max_value = 3.0;
  b.default_value = 0.0;
  KnobSpec c;
  c.name = "gamma";
  c.kind = KnobKind::Boolean;
  c.min_value = 0;
  c.max_value = 1;
  c.default_value = 0;
  return Catalog("testdb", {a, b, c});
}

}  // namespace kt_test
