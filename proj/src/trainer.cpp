#include "knobtuner/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include "knobtuner/errors.hpp"
#include "knobtuner/text_config.hpp"

namespace knobtuner {

MachineProfile load_machine_profile(const std::filesystem::path& path) {
  ConfigText cfg = load_config_text(path);
  MachineProfile profile;
  profile.total_memory_bytes = cfg.globals.get_size("total_memory");
  profile.cores = static_cast<int>(cfg.globals.get_number("cores", 1));
  if (profile.total_memory_bytes <= 0.0) {
    throw ConfigError(path.string() + ": total_memory must be positive");
  }
  return profile;
}

void TrainConfig::validate() const {
  if (episodes < 0 || steps_per_episode <= 0) {
    throw ConfigError("train config: episodes/steps_per_episode must be positive");
  }
  if (z_intervals < 1) throw ConfigError("train config: z_intervals must be >= 1");
  if (beta_shaping < 0.0 || beta_shaping > 1.0) {
    throw ConfigError("train config: beta_shaping must be in [0, 1]");
  }
  if (batch == 0) throw ConfigError("train config: batch must be positive");
  if (hint_adjust_prob < 0.0 || hint_adjust_prob > 1.0) {
    throw ConfigError("train config: hint_adjust_prob must be in [0, 1]");
  }
}

void TrainConfig::apply_override(const std::string& key, const std::string& value) {
  auto as_number = [&]() {
    try {
      return std::stod(value);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': bad number '" + value + "'");
    }
  };
  auto as_bool = [&]() {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError("config key '" + key + "': bad boolean '" + value + "'");
  };

  if (key == "episodes") episodes = static_cast<int>(as_number());
  else if (key == "steps_per_episode") steps_per_episode = static_cast<int>(as_number());
  else if (key == "finetune_evals") finetune_evals = static_cast<int>(as_number());
  else if (key == "pretrain_steps") pretrain_steps = static_cast<int>(as_number());
  else if (key == "grad_steps_per_episode")
    grad_steps_per_episode = static_cast<int>(as_number());
  else if (key == "batch") batch = static_cast<std::size_t>(as_number());
  else if (key == "k_adjust") k_adjust = as_number();
  else if (key == "z_intervals") z_intervals = static_cast<int>(as_number());
  else if (key == "beta_shaping") beta_shaping = as_number();
  else if (key == "tau_threshold") tau_threshold = as_number();
  else if (key == "hint_adjust_prob") hint_adjust_prob = as_number();
  else if (key == "update_hint_priorities") update_hint_priorities = as_bool();
  else if (key == "seed") seed = static_cast<std::uint64_t>(as_number());
  else if (key == "buffer.capacity") buffer.capacity = static_cast<std::size_t>(as_number());
  else if (key == "buffer.alpha") buffer.alpha = as_number();
  else if (key == "buffer.epsilon") buffer.epsilon = as_number();
  else if (key == "buffer.lambda1") buffer.lambda1 = as_number();
  else if (key == "buffer.lambda2") buffer.lambda2 = as_number();
  else if (key == "buffer.nstep") buffer.nstep = static_cast<std::size_t>(as_number());
  else if (key == "buffer.gamma") buffer.gamma = as_number();
  else if (key == "buffer.is_weights") buffer.is_weights = as_bool();
  else if (key == "buffer.is_exponent") buffer.is_exponent = as_number();
  else if (key == "agent.hidden") {
    agent.hidden.clear();
    std::istringstream is(value);
    std::string item;
    while (std::getline(is, item, ',')) agent.hidden.push_back(std::stoi(item));
  } else if (key == "agent.actor_lr") agent.actor_lr = as_number();
  else if (key == "agent.critic_lr") agent.critic_lr = as_number();
  else if (key == "agent.tau_soft") agent.tau_soft = as_number();
  else if (key == "agent.beta1") agent.beta1 = as_number();
  else if (key == "agent.beta2") agent.beta2 = as_number();
  else if (key == "agent.noise_sigma") agent.noise_sigma = as_number();
  else if (key == "agent.noise_decay") agent.noise_decay = as_number();
  else throw ConfigError("unknown train config key '" + key + "'");
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  ConfigText cfg = load_config_text(path);
  TrainConfig out;
  for (const ConfigEntry& e : cfg.globals.entries) {
    try {
      out.apply_override(e.key, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError(path.string() + ":" + std::to_string(e.line) + ": " +
                        err.what());
    }
  }
  out.validate();
  return out;
}

double resolve_explicit(const RecAction& action, const KnobSpec& spec,
                        const MachineProfile& profile) {
  if (action.kind != RecKind::SetExplicit) {
    throw ConfigError("resolve_explicit: hint has no explicit value");
  }
  std::string unit = action.unit;
  if (unit.empty()) return action.value;
  if (unit == "%" || unit == "percent" || unit.rfind("% of", 0) == 0 ||
      unit == "percent_of_memory") {
    if (profile.total_memory_bytes <= 0.0) {
      throw ConfigError("hint for '" + spec.name +
                        "' uses a relative value; machine profile required");
    }
    return action.value / 100.0 * profile.total_memory_bytes;
  }
  std::ostringstream os;
  os << action.value << unit;
  return parse_size(os.str());
}

KnobConfig adjust_knob(const TuningHint& hint, const KnobConfig& config,
                       const Catalog& catalog, double k, int z,
                       const MachineProfile& profile) {
  const KnobSpec* spec = catalog.find(hint.knob);
  if (!spec) throw ConfigError("adjust_knob: unknown knob '" + hint.knob + "'");

  KnobConfig out = config;
  double current = config.at(hint.knob);
  double next = current;

  if (hint.action.kind == RecKind::SetExplicit) {
    next = resolve_explicit(hint.action, *spec, profile);
  } else {
    double direction = hint.action.kind == RecKind::Increase ? 1.0 : -1.0;
    double span = spec->span();
    double delta;
    if (spec->kind == KnobKind::Boolean || spec->kind == KnobKind::Enumeration) {
      delta = 1.0;  // one index; the log scale degenerates on tiny ranges
    } else if (span <= 1.0) {
      delta = k * span;
    } else {
      double c = std::log(span) / static_cast<double>(z);
      double rel = current - spec->min_value;
      int n = rel <= 1.0 ? 0 : static_cast<int>(std::floor(std::log(rel) / c));
      n = std::clamp(n, 0, z - 1);
      delta = k * (std::exp((n + 1) * c) - std::exp(n * c));
    }
    next = current + direction * delta;
  }

  if (spec->discrete()) next = std::round(next);
  out.values[hint.knob] = std::clamp(next, spec->min_value, spec->max_value);
  return out;
}

double reward(double perf_t, double perf_0) {
  if (!(perf_0 > 0.0)) {
    throw EvalError("reward: perf_0 must be positive, got " + std::to_string(perf_0));
  }
  return (perf_t - perf_0) / perf_0;
}

namespace {
constexpr double kDirectionTol = 1e-9;
}

int count_violations(std::span<const double> action,
                     std::span<const double> prev_action,
                     std::span<const TuningHint> hints,
                     std::span<const std::size_t> matched, double tau,
                     const Catalog& catalog, const MachineProfile& profile) {
  if (action.size() != prev_action.size()) {
    throw ConfigError("count_violations: action dimension mismatch");
  }
  int violations = 0;
  for (std::size_t idx : matched) {
    const TuningHint& hint = hints[idx];
    if (!(hint.priority > tau)) continue;
    std::size_t j = catalog.index_of(hint.knob);
    if (j == Catalog::npos) continue;

    double now = action[j];
    double before = prev_action[j];
    bool violated = false;
    switch (hint.action.kind) {
      case RecKind::Increase:
        violated = now < before - kDirectionTol;
        break;
      case RecKind::Decrease:
        violated = now > before + kDirectionTol;
        break;
      case RecKind::SetExplicit: {
        const KnobSpec& spec = catalog.at(j);
        double raw = std::clamp(resolve_explicit(hint.action, spec, profile),
                                spec.min_value, spec.max_value);
        double rec = normalize(spec, raw);
        violated = std::abs(now - rec) > std::abs(before - rec) + kDirectionTol;
        break;
      }
    }
    if (violated) ++violations;
  }
  return violations;
}

double shaped_reward(double r, int violations, int matched_count, double beta) {
  if (matched_count <= 0) return r;
  double f = beta * static_cast<double>(violations) / static_cast<double>(matched_count);
  return (1.0 - f) * r;
}

nlohmann::ordered_json StepRecord::to_json() const {
  nlohmann::ordered_json j;
  j["eval"] = eval_index;
  j["phase"] = phase;
  if (episode >= 0) j["episode"] = episode;
  if (step >= 0) j["step"] = step;
  j["failed"] = failed;
  if (failed) {
    j["perf"] = nullptr;
  } else {
    j["perf"] = perf;
    j["reward"] = reward_value;
    j["shaped_reward"] = shaped;
  }
  j["matched"] = matched_count;
  j["violations"] = violations;
  j["selected_hint"] = selected_hint;
  j["best_perf"] = best_perf;
  j["priorities"] = priorities;
  return j;
}

ReportWriter::ReportWriter(const std::filesystem::path& path) {
  if (path.empty()) return;
  out_.open(path, std::ios::trunc);
  if (!out_) throw IoError("cannot write report to " + path.string());
}

void ReportWriter::write(const StepRecord& record) {
  if (out_.is_open()) out_ << record.to_json().dump() << "\n" << std::flush;
}

void ReportWriter::write_meta(const nlohmann::ordered_json& meta) {
  if (out_.is_open()) out_ << meta.dump() << "\n" << std::flush;
}

nlohmann::ordered_json TrainSummary::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = 1;
  j["perf_0"] = perf_0;
  j["best_perf"] = best_perf;
  j["best_gain"] = best_gain;
  nlohmann::ordered_json cfg;
  for (const auto& [name, value] : best_config.values) cfg[name] = value;
  j["best_config"] = cfg;
  nlohmann::ordered_json evals;
  evals["demos"] = demo_evals;
  evals["finetune"] = finetune_evals;
  evals["failed"] = failed_evals;
  evals["total"] = demo_evals + finetune_evals;
  j["evals"] = evals;
  j["pretrain_steps"] = pretrain_steps;
  j["shaping_anomalies"] = shaping_anomalies;
  j["action_clamps"] = action_clamps;
  nlohmann::ordered_json hints = nlohmann::ordered_json::array();
  for (const auto& [knob, prior] : hint_priorities) {
    nlohmann::ordered_json h;
    h["knob"] = knob;
    h["priority"] = prior;
    hints.push_back(h);
  }
  j["hints"] = hints;
  return j;
}

Trainer::Trainer(Environment& env, std::vector<TuningHint> hints, TrainConfig cfg,
                 MachineProfile profile)
    : env_(env),
      hints_(std::move(hints)),
      cfg_(std::move(cfg)),
      profile_(profile),
      rng_(cfg_.seed),
      agent_(static_cast<int>(env.schema()->fields.size()),
             static_cast<int>(env.catalog().size()), cfg_.agent, rng_),
      buffer_(cfg_.buffer) {
  cfg_.validate();
  for (const TuningHint& hint : hints_) {
    if (!env_.catalog().find(hint.knob)) {
      std::cerr << "[trainer] dropping hint for unknown knob '" << hint.knob
                << "'\n";
    }
  }
  std::erase_if(hints_, [&](const TuningHint& h) {
    return env_.catalog().find(h.knob) == nullptr;
  });
}

void Trainer::note_best(double perf, const KnobConfig& config) {
  if (perf > best_perf_) {
    best_perf_ = perf;
    best_config_ = config;
  }
}

void Trainer::measure_baseline() {
  Environment::Result r = env_.evaluate(env_.default_config(), rng_.next_u64());
  perf0_ = r.perf;
  default_metrics_ = r.metrics;
  default_state_ = state_vector(r.metrics);
  best_perf_ = r.perf;
  best_config_ = env_.default_config();
  baseline_done_ = true;
}

ConditionSet Trainer::default_conditions() const {
  return env_.classify(default_metrics_);
}

std::vector<double> Trainer::priorities_snapshot() const {
  std::vector<double> out;
  out.reserve(hints_.size());
  for (const TuningHint& h : hints_) out.push_back(h.priority);
  return out;
}

std::map<std::uint64_t, double> Trainer::hint_prior_map() const {
  std::map<std::uint64_t, double> out;
  for (const TuningHint& h : hints_) out[h.id] = h.priority;
  return out;
}

void Trainer::collect_demonstrations(ReportWriter* report) {
  if (!baseline_done_) measure_baseline();

  ConditionSet tags = default_conditions();
  std::vector<std::size_t> matched = match_hints(hints_, tags);
  rng_.shuffle(matched);

  Eigen::Map<const Eigen::VectorXd> s_def(default_state_.data(),
                                          static_cast<Eigen::Index>(default_state_.size()));
  for (std::size_t idx : matched) {
    TuningHint& hint = hints_[idx];
    KnobConfig adjusted = adjust_knob(hint, env_.default_config(), env_.catalog(),
                                      cfg_.k_adjust, cfg_.z_intervals, profile_);
    StepRecord rec;
    rec.phase = "demo";
    rec.selected_hint = static_cast<std::int64_t>(hint.id);
    ++eval_count_;
    ++demo_evals_;
    rec.eval_index = eval_count_;
    try {
      Environment::Result r = env_.evaluate(adjusted, rng_.next_u64());
      double perf_imp = reward(r.perf, perf0_);
      std::vector<double> next_state = state_vector(r.metrics);

      Experience exp;
      exp.state = default_state_;
      exp.action = to_action(env_.catalog(), adjusted);
      exp.reward = perf_imp;
      exp.next_state = next_state;
      exp.hint_id = hint.id;
      exp.window = NStepWindow{{perf_imp}, next_state};
      buffer_.push_demonstration(std::move(exp));

      hint.priority = init_priority(perf_imp);
      hint.used_in_pretrain = true;
      note_best(r.perf, adjusted);

      rec.perf = r.perf;
      rec.reward_value = perf_imp;
      rec.shaped = perf_imp;
    } catch (const EvalError& e) {
      hint.priority = 0.0;
      hint.used_in_pretrain = true;
      ++failed_evals_;
      rec.failed = true;
      std::cerr << "[trainer] demonstration for '" << hint.knob
                << "' failed: " << e.what() << "\n";
    }
    rec.best_perf = best_perf_;
    rec.priorities = priorities_snapshot();
    if (report) report->write(rec);
  }
}

void Trainer::gradient_step(bool pretraining, double* l1_out) {
  auto samples = buffer_.sample(cfg_.batch, rng_);

  Agent::CriticBatch batch;
  std::vector<std::uint64_t> ids;
  batch.states.reserve(samples.size());
  for (const auto& s : samples) {
    const Experience& exp = *s.exp;
    ids.push_back(s.id);
    Eigen::VectorXd state = Eigen::Map<const Eigen::VectorXd>(
        exp.state.data(), static_cast<Eigen::Index>(exp.state.size()));
    Eigen::VectorXd action = Eigen::Map<const Eigen::VectorXd>(
        exp.action.data(), static_cast<Eigen::Index>(exp.action.size()));

    double y1;
    std::optional<double> yn;
    if (pretraining) {
      // Pure demonstration target: no successor value exists for a one-shot
      // hint evaluation.
      y1 = exp.reward;
    } else {
      Eigen::VectorXd next = Eigen::Map<const Eigen::VectorXd>(
          exp.next_state.data(), static_cast<Eigen::Index>(exp.next_state.size()));
      y1 = exp.reward + cfg_.buffer.gamma * agent_.q_target(next, agent_.act_target(next));
      if (exp.window) {
        Eigen::VectorXd end = Eigen::Map<const Eigen::VectorXd>(
            exp.window->end_state.data(),
            static_cast<Eigen::Index>(exp.window->end_state.size()));
        double terminal_q = agent_.q_target(end, agent_.act_target(end));
        yn = nstep_return(exp.window->rewards, cfg_.buffer.gamma, terminal_q);
      }
    }
    batch.states.push_back(std::move(state));
    batch.actions.push_back(std::move(action));
    batch.targets_1step.push_back(y1);
    batch.targets_nstep.push_back(yn);
    if (cfg_.buffer.is_weights) batch.is_weights.push_back(s.is_weight);
  }

  Agent::CriticEval critic_eval = agent_.critic_update(batch);
  Agent::ActorEval actor_eval = agent_.actor_update(batch.states, batch.is_weights);
  agent_.soft_update_targets();
  buffer_.update_priorities(ids, critic_eval.deltas, actor_eval.grad_a_sq,
                            hint_prior_map());
  if (l1_out) *l1_out = critic_eval.l1_mean;
}

PretrainStats Trainer::pretrain() {
  PretrainStats stats;
  if (buffer_.demonstration_count() == 0) {
    std::cerr << "[trainer] no demonstrations; skipping pre-training\n";
    return stats;
  }
  for (int i = 0; i < cfg_.pretrain_steps; ++i) {
    double l1 = 0.0;
    gradient_step(/*pretraining=*/true, &l1);
    stats.critic_l1.push_back(l1);
    ++pretrain_steps_done_;
  }
  return stats;
}

void Trainer::finetune(ReportWriter* report) {
  const Catalog& catalog = env_.catalog();
  const int budget = cfg_.finetune_budget();
  const std::vector<double> default_action_vec = to_action(catalog, env_.default_config());

  for (int episode = episodes_done_;
       episode < cfg_.episodes && finetune_evals_ < budget; ++episode) {
    std::vector<double> state = default_state_;
    MetricsSnapshot metrics = default_metrics_;
    std::vector<double> prev_action = default_action_vec;
    double noise = cfg_.agent.noise_sigma *
                   std::pow(cfg_.agent.noise_decay, static_cast<double>(episode));

    // Records from this episode waiting for their n-step tail.
    struct Pending {
      std::uint64_t id;
      std::vector<double> rewards;
    };
    std::vector<Pending> pending;
    std::vector<double> last_state = state;
    int collected = 0;

    for (int t = 0; t < cfg_.steps_per_episode && finetune_evals_ < budget; ++t) {
      ConditionSet tags = env_.classify(metrics);
      std::vector<std::size_t> matched = match_hints(hints_, tags);

      Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(
          state.data(), static_cast<Eigen::Index>(state.size()));
      Eigen::VectorXd a = agent_.explore(s, noise, rng_);

      KnobConfig config = to_config(catalog, std::span<const double>(a.data(), a.size()),
                                    &clamps_);
      std::int64_t selected = -1;
      if (!matched.empty() && cfg_.hint_adjust_prob > 0.0) {
        bool adjust = cfg_.hint_adjust_prob >= 1.0 || rng_.uniform() < cfg_.hint_adjust_prob;
        if (adjust) {
          auto pick = select_hint(hints_, matched, rng_);
          if (pick) {
            selected = static_cast<std::int64_t>(hints_[*pick].id);
            config = adjust_knob(hints_[*pick], config, catalog, cfg_.k_adjust,
                                 cfg_.z_intervals, profile_);
          }
        }
      }
      std::vector<double> action = to_action(catalog, config);

      StepRecord rec;
      rec.phase = "finetune";
      rec.episode = episode;
      rec.step = t;
      rec.matched_count = static_cast<int>(matched.size());
      rec.selected_hint = selected;
      ++eval_count_;
      ++finetune_evals_;
      rec.eval_index = eval_count_;

      try {
        Environment::Result result = env_.evaluate(config, rng_.next_u64());
        double r = reward(result.perf, perf0_);
        if (selected >= 0 && cfg_.update_hint_priorities) {
          for (TuningHint& h : hints_) {
            if (static_cast<std::int64_t>(h.id) == selected) {
              h.priority = update_priority(h.priority, result.perf, perf0_);
            }
          }
        }
        int violations = count_violations(action, prev_action, hints_, matched,
                                          cfg_.tau_threshold, catalog, profile_);
        double shaped = shaped_reward(r, violations, static_cast<int>(matched.size()),
                                      cfg_.beta_shaping);
        if (r < 0.0 && shaped > r) ++shaping_anomalies_;

        std::vector<double> next_state = state_vector(result.metrics);

        Experience exp;
        exp.state = state;
        exp.action = action;
        exp.reward = shaped;
        exp.next_state = next_state;
        std::uint64_t id = buffer_.push_transition(std::move(exp));

        for (Pending& p : pending) p.rewards.push_back(shaped);
        pending.push_back(Pending{id, {shaped}});
        last_state = next_state;
        // Oldest pending record has its full n-step tail once n rewards
        // accumulated.
        if (pending.front().rewards.size() >= cfg_.buffer.nstep) {
          buffer_.attach_window(pending.front().id,
                                NStepWindow{pending.front().rewards, next_state});
          pending.erase(pending.begin());
        }

        note_best(result.perf, config);
        ++collected;

        rec.perf = result.perf;
        rec.reward_value = r;
        rec.shaped = shaped;
        rec.violations = violations;
        state = std::move(next_state);
        metrics = std::move(result.metrics);
        prev_action = action;
      } catch (const EvalError& e) {
        ++failed_evals_;
        rec.failed = true;
        std::cerr << "[trainer] evaluation failed at episode " << episode
                  << " step " << t << ": " << e.what() << "\n";
      }
      rec.best_perf = best_perf_;
      rec.priorities = priorities_snapshot();
      if (report) report->write(rec);
    }

    // Episode over: remaining records keep truncated windows.
    for (Pending& p : pending) {
      buffer_.attach_window(p.id, NStepWindow{std::move(p.rewards), last_state});
    }

    if (!buffer_.empty()) {
      int grad_steps = cfg_.grad_steps_per_episode > 0 ? cfg_.grad_steps_per_episode
                                                       : collected;
      for (int g = 0; g < grad_steps; ++g) {
        gradient_step(/*pretraining=*/false, nullptr);
      }
    }
    episodes_done_ = episode + 1;
  }
}

TrainSummary Trainer::run(ReportWriter* report) {
  measure_baseline();
  collect_demonstrations(report);
  pretrain();
  finetune(report);
  return summary();
}

TrainSummary Trainer::summary() const {
  TrainSummary s;
  s.perf_0 = perf0_;
  s.best_perf = best_perf_;
  s.best_gain = perf0_ > 0.0 ? (best_perf_ - perf0_) / perf0_ : 0.0;
  s.best_config = best_config_;
  s.demo_evals = demo_evals_;
  s.finetune_evals = finetune_evals_;
  s.failed_evals = failed_evals_;
  s.pretrain_steps = pretrain_steps_done_;
  s.shaping_anomalies = shaping_anomalies_;
  s.action_clamps = clamps_.clamped;
  for (const TuningHint& h : hints_) {
    s.hint_priorities.emplace_back(h.knob, h.priority);
  }
  return s;
}

Trainer::Progress Trainer::progress() const {
  Progress p;
  p.episodes_done = episodes_done_;
  p.eval_count = eval_count_;
  p.demo_evals = demo_evals_;
  p.finetune_evals = finetune_evals_;
  p.failed_evals = failed_evals_;
  p.pretrain_steps_done = pretrain_steps_done_;
  p.shaping_anomalies = shaping_anomalies_;
  p.action_clamps = clamps_.clamped;
  p.perf_0 = perf0_;
  p.best_perf = best_perf_;
  p.best_config = best_config_;
  p.default_state = default_state_;
  p.default_metric_values = default_metrics_.values;
  return p;
}

void Trainer::restore_progress(const Progress& p) {
  episodes_done_ = p.episodes_done;
  eval_count_ = p.eval_count;
  demo_evals_ = p.demo_evals;
  finetune_evals_ = p.finetune_evals;
  failed_evals_ = p.failed_evals;
  pretrain_steps_done_ = p.pretrain_steps_done;
  shaping_anomalies_ = p.shaping_anomalies;
  clamps_.clamped = p.action_clamps;
  perf0_ = p.perf_0;
  best_perf_ = p.best_perf;
  best_config_ = p.best_config;
  default_state_ = p.default_state;
  default_metrics_.schema = env_.schema();
  default_metrics_.values = p.default_metric_values;
  baseline_done_ = true;
}

}  // namespace knobtuner
