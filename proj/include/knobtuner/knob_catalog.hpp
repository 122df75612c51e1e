#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace knobtuner {

enum class KnobKind { Integer, Real, Boolean, Enumeration };

std::string to_string(KnobKind kind);
KnobKind knob_kind_from_string(const std::string& text);

// One tunable parameter. Boolean knobs span the index range [0, 1] and
// enumeration knobs [0, |enum_values| - 1]; raw values for those kinds are
// indices into the declared value list.
struct KnobSpec {
  std::string name;
  KnobKind kind = KnobKind::Integer;
  double min_value = 0.0;
  double max_value = 0.0;
  double default_value = 0.0;
  std::string unit;
  std::vector<std::string> enum_values;
  bool restart_required = false;

  double span() const { return max_value - min_value; }
  bool discrete() const { return kind != KnobKind::Real; }
};

// Immutable after construction; knob order defines the action-vector
// dimension order everywhere downstream.
class Catalog {
 public:
  Catalog(std::string dbms, std::vector<KnobSpec> knobs);

  const std::string& dbms() const { return dbms_; }
  const std::vector<KnobSpec>& knobs() const { return knobs_; }
  std::size_t size() const { return knobs_.size(); }
  const KnobSpec& at(std::size_t i) const { return knobs_[i]; }

  const KnobSpec* find(std::string_view name) const;
  // npos when absent.
  std::size_t index_of(std::string_view name) const;

  // Hash of name/kind/range per knob in order; checkpoints store it so an
  // agent cannot be loaded against a reordered or resized action space.
  std::uint64_t fingerprint() const { return fingerprint_; }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::string dbms_;
  std::vector<KnobSpec> knobs_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::uint64_t fingerprint_ = 0;
};

// A full assignment of raw knob values.
struct KnobConfig {
  std::map<std::string, double> values;

  double at(const std::string& name) const;
};

KnobConfig default_config(const Catalog& catalog);

// Counts saturated agent outputs passed to denormalize; clamping is expected
// with a tanh-bounded actor, so it is reported rather than rejected.
struct ClampStats {
  std::uint64_t clamped = 0;
};

// Linear map onto [-1, 1]: -1 at min, +1 at max. Throws ConfigError when raw
// is outside the knob range.
double normalize(const KnobSpec& spec, double raw);

// Inverse of normalize. Values outside [-1, 1] are clamped (and counted when
// stats is given); discrete kinds round half away from zero.
double denormalize(const KnobSpec& spec, double a, ClampStats* stats = nullptr);

struct Violation {
  enum class Kind { Missing, Unknown, OutOfRange };
  Kind kind;
  std::string knob;
  std::string detail;
};

std::string to_string(const Violation& v);

// Violations are data, not failures; ok iff the returned list is empty.
std::vector<Violation> validate_config(const Catalog& catalog,
                                       const KnobConfig& config);

// Reads the key/value catalog format (or a JSON rendering when the file
// starts with '{' / has a .json extension). Knob order follows file order.
Catalog load_catalog(const std::filesystem::path& path);

// Whole-config conversions between raw values and the normalized action
// vector in catalog order.
std::vector<double> to_action(const Catalog& catalog, const KnobConfig& config);
KnobConfig to_config(const Catalog& catalog, std::span<const double> action,
                     ClampStats* stats = nullptr);

}  // namespace knobtuner
