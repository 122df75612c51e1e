// Exhaustive grid search over the highest-weight simulator knobs. Writes the
// optimum as a JSON fixture consumed by the acceptance suite.

#include <algorithm>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "knobtuner/environment.hpp"
#include "knobtuner/text_config.hpp"

namespace kt = knobtuner;

int main(int argc, char** argv) {
  CLI::App app{"Grid-search oracle for the simulator"};
  std::string env_path, out_path;
  int points = 11;
  int top = 3;
  app.add_option("--env", env_path, "Simulator spec file")->required();
  app.add_option("--out", out_path, "Fixture JSON output")->required();
  app.add_option("--points", points, "Grid points per knob");
  app.add_option("--top", top, "Number of highest-weight knobs to sweep");
  CLI11_PARSE(app, argc, argv);

  auto env_base = kt::load_environment(env_path);
  auto* env = dynamic_cast<kt::SimEnvironment*>(env_base.get());
  if (!env) {
    std::cerr << "grid oracle requires a simulator environment\n";
    return 3;
  }
  const kt::Catalog& catalog = env->catalog();

  // highest-weight responses; ties broken by knob name
  std::vector<kt::KnobResponse> responses = env->spec().responses;
  std::sort(responses.begin(), responses.end(), [](const auto& a, const auto& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.knob < b.knob;
  });
  std::vector<std::string> sweep;
  for (const auto& r : responses) {
    if (static_cast<int>(sweep.size()) >= top) break;
    sweep.push_back(r.knob);
  }

  std::vector<double> x = kt::to_action(catalog, env->default_config());
  double perf0 = env->noiseless_perf(x);

  std::vector<std::size_t> dims;
  for (const std::string& name : sweep) dims.push_back(catalog.index_of(name));

  double best = perf0;
  std::vector<double> best_x = x;
  std::vector<int> idx(dims.size(), 0);
  long total = 1;
  for (std::size_t i = 0; i < dims.size(); ++i) total *= points;
  for (long it = 0; it < total; ++it) {
    long rem = it;
    for (std::size_t d = 0; d < dims.size(); ++d) {
      idx[d] = static_cast<int>(rem % points);
      rem /= points;
    }
    std::vector<double> probe = x;
    for (std::size_t d = 0; d < dims.size(); ++d) {
      probe[dims[d]] = -1.0 + 2.0 * idx[d] / static_cast<double>(points - 1);
    }
    double perf = env->noiseless_perf(probe);
    if (perf > best) {
      best = perf;
      best_x = probe;
    }
  }

  nlohmann::ordered_json j;
  j["format"] = 1;
  j["catalog_fingerprint"] = catalog.fingerprint();
  j["swept_knobs"] = sweep;
  j["points_per_knob"] = points;
  j["perf_0"] = perf0;
  j["best_perf"] = best;
  j["best_gain"] = (best - perf0) / perf0;
  nlohmann::ordered_json cfg;
  kt::KnobConfig best_config = kt::to_config(catalog, best_x);
  for (const auto& [name, value] : best_config.values) cfg[name] = value;
  j["best_config"] = cfg;
  kt::write_text_file(out_path, j.dump(2) + "\n");
  std::cout << "grid optimum " << best << " (gain " << (best - perf0) / perf0
            << ") written to " << out_path << "\n";
  return 0;
}
