#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "knobtuner/environment.hpp"
#include "knobtuner/errors.hpp"
#include "knobtuner/text_config.hpp"
#include "knobtuner/trainer.hpp"

using namespace knobtuner;

namespace {

MachineProfile sim_profile() {
  return MachineProfile{20.0 * 1024 * 1024 * 1024, 8};
}

std::unique_ptr<Environment> sim8_env() {
  return load_environment(kt_test::source_dir() / "configs/sim8.env");
}

std::vector<TuningHint> sim8_hints() {
  return load_hints(kt_test::source_dir() / "configs/sim8_hints.json");
}

TrainConfig tiny_config(std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.episodes = 3;
  cfg.steps_per_episode = 4;
  cfg.pretrain_steps = 20;
  cfg.seed = seed;
  return cfg;
}

// Forwards to a simulator but fails chosen evaluations.
class FlakyEnvironment : public Environment {
 public:
  FlakyEnvironment(SimEnvironment& inner, std::shared_ptr<const Catalog> catalog,
                   std::vector<int> fail_at)
      : Environment(std::move(catalog), inner.workload(), inner.schema(),
                    inner.rules()),
        inner_(inner),
        fail_at_(std::move(fail_at)) {}

  Result evaluate(const KnobConfig& config, std::uint64_t seed) override {
    ++calls_;
    for (int f : fail_at_) {
      if (calls_ == f) throw EvalError("injected failure");
    }
    return inner_.evaluate(config, seed);
  }

  int calls() const { return calls_; }

 private:
  SimEnvironment& inner_;
  std::vector<int> fail_at_;
  int calls_ = 0;
};

}  // namespace

TEST_CASE("resolve_explicit handles byte units and memory percentages") {
  KnobSpec spec;
  spec.name = "innodb_log_file_size";
  spec.kind = KnobKind::Integer;
  spec.min_value = 0;
  spec.max_value = 8.0 * 1024 * 1024 * 1024;
  spec.default_value = 0;

  CHECK(resolve_explicit(RecAction::set(4, "GB"), spec, sim_profile()) ==
        doctest::Approx(4.0 * 1024 * 1024 * 1024));
  CHECK(resolve_explicit(RecAction::set(25, "%"), spec, sim_profile()) ==
        doctest::Approx(5.0 * 1024 * 1024 * 1024));
  CHECK(resolve_explicit(RecAction::set(42), spec, sim_profile()) == 42.0);
  MachineProfile none;
  CHECK_THROWS_WITH_AS(resolve_explicit(RecAction::set(25, "%"), spec, none),
                       doctest::Contains("machine profile"), ConfigError);
}

TEST_CASE("adjust_knob: explicit value, resolved and clamped") {
  KnobSpec log_size;
  log_size.name = "innodb_log_file_size";
  log_size.kind = KnobKind::Integer;
  log_size.min_value = 48.0 * 1024 * 1024;
  log_size.max_value = 8.0 * 1024 * 1024 * 1024;
  log_size.default_value = 48.0 * 1024 * 1024;
  Catalog catalog("mysql", {log_size});
  KnobConfig config = default_config(catalog);

  TuningHint hint;
  hint.knob = "innodb_log_file_size";
  hint.action = RecAction::set(4, "GB");
  KnobConfig adjusted = adjust_knob(hint, config, catalog, 0.1, 10, sim_profile());
  CHECK(adjusted.at("innodb_log_file_size") == 4.0 * 1024 * 1024 * 1024);

  hint.action = RecAction::set(64, "GB");  // clamps to max
  adjusted = adjust_knob(hint, config, catalog, 0.1, 10, sim_profile());
  CHECK(adjusted.at("innodb_log_file_size") == 8.0 * 1024 * 1024 * 1024);
}

TEST_CASE("adjust_knob: logarithmic interval step") {
  // range [0, 22026], z = 5 -> C = ln(22026)/5 ~ 2.0; current 100 falls in
  // interval n = 2 (e^4 <= 100 < e^6); k = 0.1 steps by ~34.88
  KnobSpec spec;
  spec.name = "k";
  spec.kind = KnobKind::Real;
  spec.min_value = 0.0;
  spec.max_value = 22026.0;
  spec.default_value = 100.0;
  Catalog catalog("db", {spec});
  KnobConfig config = default_config(catalog);

  TuningHint up;
  up.knob = "k";
  up.action = RecAction::increase();
  double next = adjust_knob(up, config, catalog, 0.1, 5, {}).at("k");
  CHECK(next == doctest::Approx(134.88).epsilon(1e-3));

  TuningHint down;
  down.knob = "k";
  down.action = RecAction::decrease();
  double lower = adjust_knob(down, config, catalog, 0.1, 5, {}).at("k");
  CHECK(lower == doctest::Approx(100.0 - (next - 100.0)).epsilon(1e-9));
}

TEST_CASE("adjust_knob: decrease at the minimum clamps to a no-op") {
  KnobSpec spec = kt_test::spec0to100();
  spec.default_value = 0.0;
  Catalog catalog("db", {spec});
  KnobConfig config = default_config(catalog);
  TuningHint down;
  down.knob = "k";
  down.action = RecAction::decrease();
  CHECK(adjust_knob(down, config, catalog, 0.1, 10, {}).at("k") == 0.0);
}

TEST_CASE("adjust_knob: exactly one knob changes; discrete kinds step an index") {
  Catalog catalog = kt_test::small_catalog();
  KnobConfig config = default_config(catalog);
  TuningHint hint;
  hint.knob = "gamma";  // boolean, default 0
  hint.action = RecAction::increase();
  KnobConfig adjusted = adjust_knob(hint, config, catalog, 0.1, 10, {});
  CHECK(adjusted.at("gamma") == 1.0);
  int changed = 0;
  for (const auto& [name, value] : config.values) {
    if (adjusted.at(name) != value) ++changed;
  }
  CHECK(changed == 1);

  // increase saturates at the top index
  KnobConfig again = adjust_knob(hint, adjusted, catalog, 0.1, 10, {});
  CHECK(again.at("gamma") == 1.0);

  TuningHint unknown;
  unknown.knob = "zeta";
  unknown.action = RecAction::increase();
  CHECK_THROWS_AS(adjust_knob(unknown, config, catalog, 0.1, 10, {}), ConfigError);
}

TEST_CASE("reward is the gain over the default configuration") {
  CHECK(reward(130.0, 100.0) == doctest::Approx(0.3));
  CHECK(reward(100.0, 100.0) == doctest::Approx(0.0));
  CHECK(reward(50.0, 100.0) == doctest::Approx(-0.5));
  CHECK_THROWS_AS(reward(100.0, 0.0), EvalError);
  CHECK_THROWS_AS(reward(100.0, -1.0), EvalError);
}

TEST_CASE("count_violations flags moves against matched high-priority hints") {
  Catalog catalog = kt_test::small_catalog();
  std::vector<TuningHint> hints(3);
  hints[0].knob = "alpha";
  hints[0].action = RecAction::increase();
  hints[0].priority = 0.5;
  hints[1].knob = "beta";
  hints[1].action = RecAction::decrease();
  hints[1].priority = 0.05;  // below tau, excluded
  hints[2].knob = "beta";
  hints[2].action = RecAction::set(3.0);  // explicit: recommended max (= +1)
  hints[2].priority = 0.9;
  std::vector<std::size_t> matched = {0, 1, 2};

  std::vector<double> prev = {0.2, 0.5, 0.0};
  std::vector<double> moved_down = {0.1, 0.6, 0.0};  // alpha down: violation;
                                                     // beta toward rec: fine
  CHECK(count_violations(moved_down, prev, hints, matched, 0.1, catalog, {}) == 1);
  // beta moving away from the recommendation counts too
  std::vector<double> both = {0.1, 0.4, 0.0};
  CHECK(count_violations(both, prev, hints, matched, 0.1, catalog, {}) == 2);

  std::vector<double> unchanged = prev;
  CHECK(count_violations(unchanged, prev, hints, matched, 0.1, catalog, {}) == 0);

  // beta moving away from the explicit recommendation: one violation; the
  // low-priority decrease hint would also fire but is filtered by tau
  std::vector<double> away = {0.2, 0.9, 0.0};
  CHECK(count_violations(away, prev, hints, matched, 0.1, catalog, {}) == 0);
  // moving away means larger distance to rec_norm (+1): 0.5 -> 0.1
  std::vector<double> away2 = {0.2, 0.1, 0.0};
  CHECK(count_violations(away2, prev, hints, matched, 0.1, catalog, {}) == 1);
}

TEST_CASE("shaped_reward applies the violation fraction") {
  CHECK(shaped_reward(0.5, 2, 4, 0.2) == doctest::Approx(0.45));  // f = 0.1
  CHECK(shaped_reward(0.7, 0, 4, 0.2) == doctest::Approx(0.7));
  CHECK(shaped_reward(1.0, 4, 4, 0.2) == doctest::Approx(0.8));   // f = beta
  CHECK(shaped_reward(0.42, 3, 0, 0.2) == doctest::Approx(0.42));
}

TEST_CASE("demonstration collection: one evaluation per matched hint") {
  auto env = sim8_env();
  auto hints = sim8_hints();
  // add a hint that cannot match the read-heavy default conditions
  TuningHint off;
  off.id = 99;
  off.knob = "innodb_log_file_size";
  off.action = RecAction::increase();
  off.conditions = ConditionVector({"write_heavy"});
  off.priority = 0.37;
  hints.push_back(off);

  Trainer trainer(*env, hints, tiny_config(), sim_profile());
  trainer.measure_baseline();
  CHECK(trainer.perf_0() > 0.0);
  trainer.collect_demonstrations(nullptr);

  CHECK(trainer.buffer().demonstration_count() == 12);
  CHECK(trainer.eval_count() == 12);

  int used = 0;
  for (const TuningHint& h : trainer.hints()) {
    if (h.used_in_pretrain) ++used;
    if (h.id == 99) {
      CHECK(!h.used_in_pretrain);
      CHECK(h.priority == 0.37);  // untouched
    }
  }
  CHECK(used == 12);

  // correct-direction explicit hints earn positive priorities
  for (const TuningHint& h : trainer.hints()) {
    if (h.knob == "innodb_buffer_pool_size" && h.action.kind == RecKind::SetExplicit) {
      CHECK(h.priority > 0.3);
    }
    // the wrong-direction explicit hints bottom out at zero
    if (h.knob == "sort_buffer_size" && h.action.kind == RecKind::SetExplicit) {
      CHECK(h.priority == 0.0);
    }
  }
}

TEST_CASE("pretrain without demonstrations is a warned no-op") {
  auto env = sim8_env();
  Trainer trainer(*env, {}, tiny_config(), sim_profile());
  trainer.measure_baseline();
  PretrainStats stats = trainer.pretrain();
  CHECK(stats.critic_l1.empty());
}

TEST_CASE("pretraining drives the demonstration critic loss down") {
  auto env = sim8_env();
  TrainConfig cfg = tiny_config(3);
  cfg.pretrain_steps = 500;
  Trainer trainer(*env, sim8_hints(), cfg, sim_profile());
  trainer.measure_baseline();
  trainer.collect_demonstrations(nullptr);
  PretrainStats stats = trainer.pretrain();
  REQUIRE(stats.critic_l1.size() == 500);

  // smoothed loss falls strictly (checkpointed every 25 steps, after a
  // 25-step warmup baseline) until it crosses 10% of the baseline, and ends
  // far below that
  double ema = stats.critic_l1[0];
  double ema_start = 0.0;
  double last_checkpoint = 0.0;
  bool crossed = false;
  bool strictly_decreasing = true;
  for (std::size_t i = 1; i < stats.critic_l1.size(); ++i) {
    ema = 0.95 * ema + 0.05 * stats.critic_l1[i];
    if (i == 25) {
      ema_start = ema;
      last_checkpoint = ema;
      continue;
    }
    if (i < 25) continue;
    if (ema < 0.1 * ema_start) crossed = true;
    if (!crossed && i % 25 == 0) {
      if (ema >= last_checkpoint) strictly_decreasing = false;
      last_checkpoint = ema;
    }
  }
  CHECK(crossed);
  CHECK(strictly_decreasing);
  CHECK(ema < 0.1 * ema_start);
}

TEST_CASE("pretraining on a fixed 16-demonstration buffer converges") {
  // agent-level view of the same property, independent of the trainer
  Rng rng(907);
  AgentHyper hp;
  Agent agent(4, 3, hp, rng);
  BufferConfig bc;
  ReplayBuffer buffer(bc);
  for (int i = 0; i < 16; ++i) {
    Experience e;
    e.state = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1),
               rng.uniform(0, 1)};
    e.action = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    e.reward = rng.uniform(-0.3, 1.2);
    e.next_state = e.state;
    e.hint_id = static_cast<std::uint64_t>(i);
    buffer.push_demonstration(std::move(e));
  }

  std::map<std::uint64_t, double> priors;
  for (int i = 0; i < 16; ++i) priors[i] = 0.5;

  double ema = 0.0, ema_start = 0.0;
  for (int step = 0; step < 500; ++step) {
    auto samples = buffer.sample(32, rng);
    Agent::CriticBatch batch;
    std::vector<std::uint64_t> ids;
    for (const auto& s : samples) {
      ids.push_back(s.id);
      batch.states.push_back(Eigen::Map<const Eigen::VectorXd>(s.exp->state.data(), 4));
      batch.actions.push_back(Eigen::Map<const Eigen::VectorXd>(s.exp->action.data(), 3));
      batch.targets_1step.push_back(s.exp->reward);  // pure demonstration target
      batch.targets_nstep.push_back(std::nullopt);
    }
    auto critic_eval = agent.critic_update(batch);
    auto actor_eval = agent.actor_update(batch.states, {});
    agent.soft_update_targets();
    buffer.update_priorities(ids, critic_eval.deltas, actor_eval.grad_a_sq, priors);

    if (step == 0) {
      ema = critic_eval.l1_mean;
      ema_start = ema;
    } else {
      ema = 0.95 * ema + 0.05 * critic_eval.l1_mean;
    }
  }
  CHECK(ema < 0.1 * ema_start);
}

TEST_CASE("fine-tuning consumes exactly the configured budget") {
  auto env = sim8_env();
  TrainConfig cfg = tiny_config(5);
  cfg.episodes = 3;
  cfg.steps_per_episode = 4;
  cfg.pretrain_steps = 10;

  kt_test::TempDir tmp("train");
  ReportWriter report(tmp / "log.jsonl");
  Trainer trainer(*env, sim8_hints(), cfg, sim_profile());
  TrainSummary summary = trainer.run(&report);

  CHECK(summary.demo_evals == 12);
  CHECK(summary.finetune_evals == 3 * 4);
  CHECK(summary.failed_evals == 0);
  CHECK(summary.best_perf >= summary.perf_0);

  // report has one line per evaluation
  std::istringstream is(read_text_file(tmp / "log.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.find("\"eval\"") != std::string::npos) ++lines;
  }
  CHECK(lines == 12 + 12);
}

TEST_CASE("finetune_evals truncates the last episode") {
  auto env = sim8_env();
  TrainConfig cfg = tiny_config(6);
  cfg.episodes = 5;
  cfg.steps_per_episode = 4;
  cfg.finetune_evals = 10;  // 2 full episodes + a 2-step one
  cfg.pretrain_steps = 5;
  Trainer trainer(*env, sim8_hints(), cfg, sim_profile());
  TrainSummary summary = trainer.run(nullptr);
  CHECK(summary.finetune_evals == 10);
}

TEST_CASE("n-step windows are attached, truncated at episode ends") {
  auto env = sim8_env();
  TrainConfig cfg = tiny_config(7);
  cfg.episodes = 1;
  cfg.steps_per_episode = 7;
  cfg.pretrain_steps = 5;
  cfg.buffer.nstep = 5;
  Trainer trainer(*env, sim8_hints(), cfg, sim_profile());
  trainer.run(nullptr);

  std::vector<std::size_t> window_sizes;
  trainer.buffer().for_each([&](std::uint64_t, const Experience& e) {
    if (!e.is_demonstration()) {
      REQUIRE(e.window.has_value());
      window_sizes.push_back(e.window->rewards.size());
    }
  });
  REQUIRE(window_sizes.size() == 7);
  CHECK(window_sizes == std::vector<std::size_t>{5, 5, 5, 4, 3, 2, 1});
}

TEST_CASE("failed evaluations are counted, recorded, and skipped") {
  auto base = sim8_env();
  auto* sim = dynamic_cast<SimEnvironment*>(base.get());
  REQUIRE(sim != nullptr);
  auto catalog = std::make_shared<Catalog>(
      load_catalog(kt_test::source_dir() / "configs/sim8.catalog"));
  // fail the 2nd demo evaluation and one fine-tune step (calls count the
  // baseline as #1)
  FlakyEnvironment flaky(*sim, catalog, {3, 16});

  TrainConfig cfg = tiny_config(8);
  cfg.episodes = 2;
  cfg.steps_per_episode = 4;
  cfg.pretrain_steps = 5;
  Trainer trainer(flaky, sim8_hints(), cfg, sim_profile());
  TrainSummary summary = trainer.run(nullptr);

  CHECK(summary.demo_evals == 12);
  CHECK(summary.finetune_evals == 8);
  CHECK(summary.failed_evals == 2);
  CHECK(trainer.buffer().demonstration_count() == 11);  // one demo failed

  // the failed demonstration zeroed its hint's priority
  int zeroed = 0;
  for (const TuningHint& h : trainer.hints()) {
    if (h.used_in_pretrain && h.priority == 0.0) ++zeroed;
  }
  CHECK(zeroed >= 1);
}

TEST_CASE("disabled hint machinery reproduces the plain DDPG trajectory") {
  auto env1 = sim8_env();
  auto env2 = sim8_env();

  TrainConfig plain = tiny_config(9);
  plain.pretrain_steps = 50;
  Trainer a(*env1, {}, plain, sim_profile());
  TrainSummary sa = a.run(nullptr);

  TrainConfig disabled = tiny_config(9);
  disabled.pretrain_steps = 50;
  disabled.buffer.lambda2 = 0.0;
  disabled.beta_shaping = 0.0;
  disabled.hint_adjust_prob = 0.0;
  Trainer b(*env2, {}, disabled, sim_profile());
  TrainSummary sb = b.run(nullptr);

  CHECK(sa.to_json().dump() == sb.to_json().dump());
  CHECK(sa.best_perf == sb.best_perf);
}

TEST_CASE("identical seeds give byte-identical summaries") {
  auto env1 = sim8_env();
  auto env2 = sim8_env();
  TrainConfig cfg = tiny_config(10);
  Trainer a(*env1, sim8_hints(), cfg, sim_profile());
  Trainer b(*env2, sim8_hints(), cfg, sim_profile());
  CHECK(a.run(nullptr).to_json().dump() == b.run(nullptr).to_json().dump());
}

TEST_CASE("train config files load and reject unknown keys") {
  TrainConfig cfg = load_train_config(kt_test::source_dir() / "configs/train_sim8.cfg");
  CHECK(cfg.episodes == 19);
  CHECK(cfg.finetune_evals == 188);
  CHECK(cfg.buffer.lambda2 == 1.0);
  CHECK(cfg.beta_shaping == 0.2);
  CHECK(cfg.agent.hidden == std::vector<int>{64, 64});

  TrainConfig base;
  CHECK_THROWS_AS(base.apply_override("definitely_not_a_key", "1"), ConfigError);
  base.apply_override("buffer.alpha", "0.7");
  CHECK(base.buffer.alpha == 0.7);
}
