#include "knobtuner/tuner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <set>

#include "knobtuner/errors.hpp"
#include "knobtuner/text_config.hpp"

namespace knobtuner {

double fingerprint_distance(const WorkloadFingerprint& a,
                            const WorkloadFingerprint& b) {
  double l1 = std::abs(a.workload.read - b.workload.read) +
              std::abs(a.workload.update - b.workload.update) +
              std::abs(a.workload.insert - b.workload.insert) +
              std::abs(a.workload.scan - b.workload.scan);

  std::set<std::string> sa(a.condition_tags.begin(), a.condition_tags.end());
  std::set<std::string> sb(b.condition_tags.begin(), b.condition_tags.end());
  std::vector<std::string> union_v, inter_v;
  std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(),
                 std::back_inserter(union_v));
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(),
                        std::back_inserter(inter_v));
  double jaccard_dist =
      union_v.empty() ? 0.0
                      : 1.0 - static_cast<double>(inter_v.size()) /
                                  static_cast<double>(union_v.size());
  return 0.5 * l1 + 0.5 * jaccard_dist;
}

std::vector<AgentPoolEntry> scan_pool(const std::filesystem::path& dir) {
  std::vector<AgentPoolEntry> pool;
  if (!std::filesystem::is_directory(dir)) return pool;
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() == ".json") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& path : paths) {
    try {
      CheckpointInfo info = read_checkpoint_info(path);
      AgentPoolEntry e;
      e.checkpoint = path;
      e.workload = info.workload;
      e.condition_tags = info.condition_tags;
      e.catalog_fingerprint = info.catalog_fingerprint;
      e.written = std::filesystem::last_write_time(path);
      pool.push_back(std::move(e));
    } catch (const std::exception& err) {
      std::cerr << "[pool] skipping " << path << ": " << err.what() << "\n";
    }
  }
  return pool;
}

const AgentPoolEntry& select_agent(const std::vector<AgentPoolEntry>& pool,
                                   const WorkloadFingerprint& target) {
  if (pool.empty()) {
    throw ConfigError("agents pool is empty; train an agent first");
  }
  const AgentPoolEntry* best = nullptr;
  double best_dist = 0.0;
  for (const AgentPoolEntry& e : pool) {
    double d = fingerprint_distance({e.workload, e.condition_tags}, target);
    if (!best || d < best_dist ||
        (d == best_dist && e.written > best->written)) {
      best = &e;
      best_dist = d;
    }
  }
  return *best;
}

nlohmann::ordered_json TuneResult::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = 1;
  j["perf_0"] = perf_0;
  j["best_perf"] = best_perf;
  j["PG_best"] = best_gain;
  nlohmann::ordered_json cfg;
  for (const auto& [name, value] : best_config.values) cfg[name] = value;
  j["best_config"] = cfg;
  j["best_explored_perf"] = best_explored_perf;
  nlohmann::ordered_json explored;
  for (const auto& [name, value] : best_explored_config.values) explored[name] = value;
  j["best_explored_config"] = explored;
  j["tuning_cost_seconds"] = tuning_cost_seconds;
  nlohmann::ordered_json iters = nlohmann::ordered_json::array();
  for (const TuneIteration& it : iterations) {
    nlohmann::ordered_json ji;
    ji["iteration"] = it.iteration;
    ji["failed"] = it.failed;
    if (!it.failed) {
      ji["perf"] = it.perf;
      ji["gain"] = it.gain;
    }
    ji["selected_hint"] = it.selected_hint;
    ji["best_perf"] = it.best_perf;
    iters.push_back(ji);
  }
  j["iterations"] = iters;
  return j;
}

TuneResult online_tune(const std::filesystem::path& checkpoint, Environment& env,
                       const MachineProfile& profile, const TuneOptions& options) {
  if (options.budget < 1) throw ConfigError("online tuning budget must be >= 1");

  std::unique_ptr<Trainer> trainer = load_checkpoint(checkpoint, env, profile);
  Agent& agent = trainer->agent();
  std::vector<TuningHint>& hints = trainer->hints();
  const Catalog& catalog = env.catalog();
  Rng rng(options.seed);

  TuneResult result;

  // Baseline: uncounted; also provides the initial state and conditions.
  Environment::Result base = env.evaluate(env.default_config(), rng.next_u64());
  result.perf_0 = base.perf;
  std::vector<double> state = state_vector(base.metrics);
  MetricsSnapshot metrics = base.metrics;
  std::vector<double> prev_action = to_action(catalog, env.default_config());

  double best_explored = 0.0;
  KnobConfig best_explored_config;
  double noise = agent.hyper().noise_sigma / options.noise_divisor;
  ClampStats clamps;

  for (int i = 0; i < options.budget; ++i) {
    TuneIteration iter;
    iter.iteration = i + 1;

    ConditionSet tags = env.classify(metrics);
    std::vector<std::size_t> matched = match_hints(hints, tags);

    Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(
        state.data(), static_cast<Eigen::Index>(state.size()));
    Eigen::VectorXd a = agent.explore(s, noise, rng);
    KnobConfig config =
        to_config(catalog, std::span<const double>(a.data(), a.size()), &clamps);

    if (!matched.empty() && options.hint_adjust_prob > 0.0) {
      bool adjust = options.hint_adjust_prob >= 1.0 ||
                    rng.uniform() < options.hint_adjust_prob;
      if (adjust) {
        auto pick = select_hint(hints, matched, rng);
        if (pick) {
          iter.selected_hint = static_cast<std::int64_t>(hints[*pick].id);
          config = adjust_knob(hints[*pick], config, catalog,
                               trainer->config().k_adjust,
                               trainer->config().z_intervals, profile);
        }
      }
    }

    auto t0 = std::chrono::steady_clock::now();
    try {
      Environment::Result r = env.evaluate(config, rng.next_u64());
      iter.perf = r.perf;
      iter.gain = (r.perf - result.perf_0) / result.perf_0;
      if (iter.selected_hint >= 0 && options.update_hint_priorities) {
        for (TuningHint& h : hints) {
          if (static_cast<std::int64_t>(h.id) == iter.selected_hint) {
            h.priority = update_priority(h.priority, r.perf, result.perf_0);
          }
        }
      }
      if (r.perf > best_explored) {
        best_explored = r.perf;
        best_explored_config = config;
      }
      state = state_vector(r.metrics);
      metrics = r.metrics;
      prev_action = to_action(catalog, config);

      if (options.online_learn && !trainer->buffer().empty()) {
        Experience exp;
        exp.state = std::vector<double>(s.data(), s.data() + s.size());
        exp.action = prev_action;
        exp.reward = iter.gain;
        exp.next_state = state;
        trainer->buffer().push_transition(std::move(exp));
        auto samples = trainer->buffer().sample(trainer->config().batch, rng);
        Agent::CriticBatch batch;
        for (const auto& smp : samples) {
          const Experience& e = *smp.exp;
          Eigen::VectorXd es = Eigen::Map<const Eigen::VectorXd>(
              e.state.data(), static_cast<Eigen::Index>(e.state.size()));
          Eigen::VectorXd ea = Eigen::Map<const Eigen::VectorXd>(
              e.action.data(), static_cast<Eigen::Index>(e.action.size()));
          Eigen::VectorXd en = Eigen::Map<const Eigen::VectorXd>(
              e.next_state.data(), static_cast<Eigen::Index>(e.next_state.size()));
          batch.states.push_back(es);
          batch.actions.push_back(ea);
          batch.targets_1step.push_back(
              e.reward + trainer->config().buffer.gamma *
                             agent.q_target(en, agent.act_target(en)));
          batch.targets_nstep.push_back(std::nullopt);
        }
        agent.critic_update(batch);
        agent.actor_update(batch.states, batch.is_weights);
        agent.soft_update_targets();
      }
    } catch (const EvalError& e) {
      iter.failed = true;
      std::cerr << "[tune] iteration " << iter.iteration << " failed: " << e.what()
                << "\n";
    }
    auto t1 = std::chrono::steady_clock::now();
    iter.elapsed_seconds = std::chrono::duration<double>(t1 - t0).count();
    result.tuning_cost_seconds += iter.elapsed_seconds;
    iter.best_perf = std::max(best_explored, result.perf_0);
    result.iterations.push_back(iter);
  }

  result.best_explored_perf = best_explored;
  result.best_explored_config = best_explored_config;
  if (best_explored > result.perf_0) {
    result.best_perf = best_explored;
    result.best_config = best_explored_config;
  } else {
    // Never recommend a measured regression.
    result.best_perf = result.perf_0;
    result.best_config = env.default_config();
  }
  result.best_gain = (result.best_perf - result.perf_0) / result.perf_0;
  return result;
}

}  // namespace knobtuner
