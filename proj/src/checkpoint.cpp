#include "knobtuner/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include "knobtuner/errors.hpp"
#include "knobtuner/text_config.hpp"

namespace knobtuner {

namespace {

using Json = nlohmann::ordered_json;

Json vec_to_json(const Eigen::VectorXd& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vec_from_json(const nlohmann::json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return v;
}

Json config_to_json(const KnobConfig& config) {
  Json j;
  for (const auto& [name, value] : config.values) j[name] = value;
  return j;
}

KnobConfig config_from_json(const nlohmann::json& j) {
  KnobConfig config;
  for (auto it = j.begin(); it != j.end(); ++it) {
    config.values[it.key()] = it.value().get<double>();
  }
  return config;
}

Json train_config_to_json(const TrainConfig& cfg) {
  Json j;
  j["episodes"] = cfg.episodes;
  j["steps_per_episode"] = cfg.steps_per_episode;
  j["finetune_evals"] = cfg.finetune_evals;
  j["pretrain_steps"] = cfg.pretrain_steps;
  j["grad_steps_per_episode"] = cfg.grad_steps_per_episode;
  j["batch"] = cfg.batch;
  j["k_adjust"] = cfg.k_adjust;
  j["z_intervals"] = cfg.z_intervals;
  j["beta_shaping"] = cfg.beta_shaping;
  j["tau_threshold"] = cfg.tau_threshold;
  j["hint_adjust_prob"] = cfg.hint_adjust_prob;
  j["update_hint_priorities"] = cfg.update_hint_priorities;
  j["seed"] = cfg.seed;
  Json b;
  b["capacity"] = cfg.buffer.capacity;
  b["alpha"] = cfg.buffer.alpha;
  b["epsilon"] = cfg.buffer.epsilon;
  b["lambda1"] = cfg.buffer.lambda1;
  b["lambda2"] = cfg.buffer.lambda2;
  b["nstep"] = cfg.buffer.nstep;
  b["gamma"] = cfg.buffer.gamma;
  b["is_weights"] = cfg.buffer.is_weights;
  b["is_exponent"] = cfg.buffer.is_exponent;
  j["buffer"] = b;
  Json a;
  a["hidden"] = cfg.agent.hidden;
  a["actor_lr"] = cfg.agent.actor_lr;
  a["critic_lr"] = cfg.agent.critic_lr;
  a["tau_soft"] = cfg.agent.tau_soft;
  a["beta1"] = cfg.agent.beta1;
  a["beta2"] = cfg.agent.beta2;
  a["noise_sigma"] = cfg.agent.noise_sigma;
  a["noise_decay"] = cfg.agent.noise_decay;
  j["agent"] = a;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.episodes = j.at("episodes").get<int>();
  cfg.steps_per_episode = j.at("steps_per_episode").get<int>();
  cfg.finetune_evals = j.at("finetune_evals").get<int>();
  cfg.pretrain_steps = j.at("pretrain_steps").get<int>();
  cfg.grad_steps_per_episode = j.at("grad_steps_per_episode").get<int>();
  cfg.batch = j.at("batch").get<std::size_t>();
  cfg.k_adjust = j.at("k_adjust").get<double>();
  cfg.z_intervals = j.at("z_intervals").get<int>();
  cfg.beta_shaping = j.at("beta_shaping").get<double>();
  cfg.tau_threshold = j.at("tau_threshold").get<double>();
  cfg.hint_adjust_prob = j.at("hint_adjust_prob").get<double>();
  cfg.update_hint_priorities = j.at("update_hint_priorities").get<bool>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  const auto& b = j.at("buffer");
  cfg.buffer.capacity = b.at("capacity").get<std::size_t>();
  cfg.buffer.alpha = b.at("alpha").get<double>();
  cfg.buffer.epsilon = b.at("epsilon").get<double>();
  cfg.buffer.lambda1 = b.at("lambda1").get<double>();
  cfg.buffer.lambda2 = b.at("lambda2").get<double>();
  cfg.buffer.nstep = b.at("nstep").get<std::size_t>();
  cfg.buffer.gamma = b.at("gamma").get<double>();
  cfg.buffer.is_weights = b.at("is_weights").get<bool>();
  cfg.buffer.is_exponent = b.at("is_exponent").get<double>();
  const auto& a = j.at("agent");
  cfg.agent.hidden = a.at("hidden").get<std::vector<int>>();
  cfg.agent.actor_lr = a.at("actor_lr").get<double>();
  cfg.agent.critic_lr = a.at("critic_lr").get<double>();
  cfg.agent.tau_soft = a.at("tau_soft").get<double>();
  cfg.agent.beta1 = a.at("beta1").get<double>();
  cfg.agent.beta2 = a.at("beta2").get<double>();
  cfg.agent.noise_sigma = a.at("noise_sigma").get<double>();
  cfg.agent.noise_decay = a.at("noise_decay").get<double>();
  return cfg;
}

Json adam_to_json(const Adam& opt) {
  Json j;
  j["t"] = opt.step_count();
  j["m"] = vec_to_json(opt.m());
  j["v"] = vec_to_json(opt.v());
  return j;
}

void adam_from_json(const nlohmann::json& j, Adam& opt) {
  opt.restore(j.at("t").get<long>(), vec_from_json(j.at("m")),
              vec_from_json(j.at("v")));
}

Json hint_to_json(const TuningHint& h) {
  Json j;
  j["id"] = h.id;
  j["knob"] = h.knob;
  j["kind"] = to_string(h.action.kind);
  j["value"] = h.action.value;
  j["unit"] = h.action.unit;
  j["conditions"] = h.conditions.tags();
  j["source"] = h.source;
  j["priority"] = h.priority;
  j["used_in_pretrain"] = h.used_in_pretrain;
  return j;
}

TuningHint hint_from_json(const nlohmann::json& j) {
  TuningHint h;
  h.id = j.at("id").get<std::uint64_t>();
  h.knob = j.at("knob").get<std::string>();
  h.action.kind = rec_kind_from_string(j.at("kind").get<std::string>());
  h.action.value = j.at("value").get<double>();
  h.action.unit = j.at("unit").get<std::string>();
  h.conditions = ConditionVector(j.at("conditions").get<std::vector<std::string>>());
  h.source = j.at("source").get<std::string>();
  h.priority = j.at("priority").get<double>();
  h.used_in_pretrain = j.at("used_in_pretrain").get<bool>();
  return h;
}

Json experience_to_json(std::uint64_t id, const Experience& e) {
  Json j;
  j["id"] = id;
  j["s"] = e.state;
  j["a"] = e.action;
  j["r"] = e.reward;
  j["s_next"] = e.next_state;
  if (e.hint_id) j["hint_id"] = *e.hint_id;
  if (e.window) {
    Json w;
    w["rewards"] = e.window->rewards;
    w["end_state"] = e.window->end_state;
    j["window"] = w;
  }
  j["td_error"] = e.td_error;
  j["actor_grad_sq"] = e.actor_grad_sq;
  j["p"] = e.stored_priority;
  return j;
}

std::pair<std::uint64_t, Experience> experience_from_json(const nlohmann::json& j) {
  Experience e;
  e.state = j.at("s").get<std::vector<double>>();
  e.action = j.at("a").get<std::vector<double>>();
  e.reward = j.at("r").get<double>();
  e.next_state = j.at("s_next").get<std::vector<double>>();
  if (j.contains("hint_id")) e.hint_id = j.at("hint_id").get<std::uint64_t>();
  if (j.contains("window")) {
    NStepWindow w;
    w.rewards = j.at("window").at("rewards").get<std::vector<double>>();
    w.end_state = j.at("window").at("end_state").get<std::vector<double>>();
    e.window = std::move(w);
  }
  e.td_error = j.at("td_error").get<double>();
  e.actor_grad_sq = j.at("actor_grad_sq").get<double>();
  e.stored_priority = j.at("p").get<double>();
  return {j.at("id").get<std::uint64_t>(), std::move(e)};
}

Json progress_to_json(const Trainer::Progress& p) {
  Json j;
  j["episodes_done"] = p.episodes_done;
  j["eval_count"] = p.eval_count;
  j["demo_evals"] = p.demo_evals;
  j["finetune_evals"] = p.finetune_evals;
  j["failed_evals"] = p.failed_evals;
  j["pretrain_steps_done"] = p.pretrain_steps_done;
  j["shaping_anomalies"] = p.shaping_anomalies;
  j["action_clamps"] = p.action_clamps;
  j["perf_0"] = p.perf_0;
  j["best_perf"] = p.best_perf;
  j["best_config"] = config_to_json(p.best_config);
  j["default_state"] = p.default_state;
  j["default_metrics"] = p.default_metric_values;
  return j;
}

Trainer::Progress progress_from_json(const nlohmann::json& j) {
  Trainer::Progress p;
  p.episodes_done = j.at("episodes_done").get<int>();
  p.eval_count = j.at("eval_count").get<int>();
  p.demo_evals = j.at("demo_evals").get<int>();
  p.finetune_evals = j.at("finetune_evals").get<int>();
  p.failed_evals = j.at("failed_evals").get<int>();
  p.pretrain_steps_done = j.at("pretrain_steps_done").get<int>();
  p.shaping_anomalies = j.at("shaping_anomalies").get<int>();
  p.action_clamps = j.at("action_clamps").get<std::uint64_t>();
  p.perf_0 = j.at("perf_0").get<double>();
  p.best_perf = j.at("best_perf").get<double>();
  p.best_config = config_from_json(j.at("best_config"));
  p.default_state = j.at("default_state").get<std::vector<double>>();
  p.default_metric_values = j.at("default_metrics").get<std::vector<double>>();
  return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Trainer& trainer) {
  Json j;
  j["format"] = 1;
  j["catalog_fingerprint"] = trainer.env().catalog().fingerprint();
  j["dbms"] = trainer.env().catalog().dbms();
  Json mix;
  const WorkloadMix& m = trainer.env().workload();
  mix["read"] = m.read;
  mix["update"] = m.update;
  mix["insert"] = m.insert;
  mix["scan"] = m.scan;
  j["workload"] = mix;
  j["condition_tags"] = trainer.default_conditions().tags();
  j["train_config"] = train_config_to_json(trainer.config());
  j["rng"] = trainer.rng().serialize();
  j["progress"] = progress_to_json(trainer.progress());

  const Agent& agent = trainer.agent();
  Json ja;
  ja["state_dim"] = agent.state_dim();
  ja["action_dim"] = agent.action_dim();
  ja["actor"] = vec_to_json(agent.actor().params());
  ja["critic"] = vec_to_json(agent.critic().params());
  ja["actor_target"] = vec_to_json(agent.actor_target().params());
  ja["critic_target"] = vec_to_json(agent.critic_target().params());
  ja["actor_opt"] = adam_to_json(agent.actor_opt());
  ja["critic_opt"] = adam_to_json(agent.critic_opt());
  j["agent"] = ja;

  Json hints = Json::array();
  for (const TuningHint& h : trainer.hints()) hints.push_back(hint_to_json(h));
  j["hints"] = hints;

  Json records = Json::array();
  trainer.buffer().for_each([&](std::uint64_t id, const Experience& e) {
    records.push_back(experience_to_json(id, e));
  });
  Json jb;
  jb["next_id"] = trainer.buffer().next_id();
  jb["records"] = records;
  j["buffer"] = jb;

  write_text_file(path, j.dump() + "\n");
}

std::unique_ptr<Trainer> load_checkpoint(const std::filesystem::path& path,
                                         Environment& env,
                                         MachineProfile profile) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (j.value("format", 0) != 1) {
    throw ConfigError(path.string() + ": unsupported checkpoint format");
  }
  std::uint64_t fp = j.at("catalog_fingerprint").get<std::uint64_t>();
  if (fp != env.catalog().fingerprint()) {
    throw ConfigError(path.string() +
                      ": catalog fingerprint mismatch; checkpoint was trained "
                      "against a different knob space");
  }

  TrainConfig cfg = train_config_from_json(j.at("train_config"));
  std::vector<TuningHint> hints;
  for (const auto& jh : j.at("hints")) hints.push_back(hint_from_json(jh));

  auto trainer = std::make_unique<Trainer>(env, std::move(hints), cfg, profile);
  trainer->rng().restore(j.at("rng").get<std::string>());
  trainer->restore_progress(progress_from_json(j.at("progress")));

  const auto& ja = j.at("agent");
  Agent& agent = trainer->agent();
  if (ja.at("state_dim").get<int>() != agent.state_dim() ||
      ja.at("action_dim").get<int>() != agent.action_dim()) {
    throw ConfigError(path.string() + ": agent dimensions do not match environment");
  }
  agent.actor().params() = vec_from_json(ja.at("actor"));
  agent.critic().params() = vec_from_json(ja.at("critic"));
  agent.actor_target().params() = vec_from_json(ja.at("actor_target"));
  agent.critic_target().params() = vec_from_json(ja.at("critic_target"));
  adam_from_json(ja.at("actor_opt"), agent.actor_opt());
  adam_from_json(ja.at("critic_opt"), agent.critic_opt());

  const auto& jb = j.at("buffer");
  for (const auto& jr : jb.at("records")) {
    auto [id, exp] = experience_from_json(jr);
    trainer->buffer().restore(id, std::move(exp));
  }
  trainer->buffer().set_next_id(jb.at("next_id").get<std::uint64_t>());
  return trainer;
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  CheckpointInfo info;
  info.catalog_fingerprint = j.at("catalog_fingerprint").get<std::uint64_t>();
  info.dbms = j.value("dbms", "");
  const auto& mix = j.at("workload");
  info.workload.read = mix.at("read").get<double>();
  info.workload.update = mix.at("update").get<double>();
  info.workload.insert = mix.at("insert").get<double>();
  info.workload.scan = mix.at("scan").get<double>();
  info.condition_tags = j.at("condition_tags").get<std::vector<std::string>>();
  return info;
}

}  // namespace knobtuner
