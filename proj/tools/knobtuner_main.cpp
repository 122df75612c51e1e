#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "knobtuner/checkpoint.hpp"
#include "knobtuner/environment.hpp"
#include "knobtuner/errors.hpp"
#include "knobtuner/extraction.hpp"
#include "knobtuner/text_config.hpp"
#include "knobtuner/trainer.hpp"
#include "knobtuner/tuner.hpp"

namespace kt = knobtuner;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitEval = 4;
constexpr int kExitIo = 5;

kt::MachineProfile profile_or_default(const std::string& path) {
  if (path.empty()) return {};
  return kt::load_machine_profile(path);
}

int cmd_extract(const std::string& sources, const std::string& dbms,
                const std::string& out, const std::string& fixtures,
                const std::string& catalog_path, const std::string& patterns_path,
                const std::string& template_path, const std::string& synonyms_path,
                const kt::LlmConfig& llm, int repair_retries,
                const std::string& report_path, std::size_t top_n) {
  std::vector<std::string> patterns;
  if (!patterns_path.empty()) {
    patterns = kt::load_patterns(patterns_path);
  } else {
    // knob-assignment lines and advice sentences that mention a knob
    patterns = {
        R"([A-Za-z_][A-Za-z0-9_]*\s*=\s*[0-9]+[KMGTkmgt]?B?)",
        R"([^\n]*[A-Za-z_][A-Za-z0-9_]*_(size|buffer|cache|capacity|connections|method|commit)[^\n]*)",
    };
  }

  std::vector<kt::SourceDocument> docs =
      kt::collect_source_texts(sources, patterns, dbms);

  std::unique_ptr<kt::LlmClient> client;
  if (!fixtures.empty()) {
    client = std::make_unique<kt::FixtureLlmClient>(fixtures);
  } else {
    client = std::make_unique<kt::HttpLlmClient>(llm);
  }

  kt::ExtractionOptions options;
  if (!template_path.empty()) options.prompt = kt::PromptTemplate::load(template_path);
  if (!synonyms_path.empty()) options.synonyms = kt::SynonymTable::load(synonyms_path);
  options.max_repair_retries = repair_retries;
  std::optional<kt::Catalog> catalog;
  if (!catalog_path.empty()) {
    catalog.emplace(kt::load_catalog(catalog_path));
    options.catalog = &*catalog;
  }

  kt::ExtractionReport report;
  std::vector<kt::TuningHint> hints =
      kt::extract_hints(docs, *client, options, &report);
  kt::save_hints(out, hints);

  std::filesystem::path rp =
      report_path.empty() ? std::filesystem::path(out + ".report.json")
                          : std::filesystem::path(report_path);
  kt::write_text_file(rp, report.to_json().dump(2) + "\n");

  auto ranking = kt::rank_knobs(hints, top_n);
  std::cout << "documents: " << report.documents << ", hints: " << hints.size()
            << "\n";
  for (const auto& [knob, count] : ranking) {
    std::cout << std::setw(4) << count << "  " << knob << "\n";
  }
  std::cout << "hints written to " << out << "\n";
  return kExitOk;
}

int cmd_train(const std::string& env_path, const std::string& hints_path,
              const std::string& config_path, const std::string& out,
              const std::string& report_path, const std::string& summary_path,
              const std::string& profile_path, std::optional<std::uint64_t> seed,
              const std::vector<std::string>& overrides,
              const std::string& resume_path) {
  auto env = kt::load_environment(env_path);
  kt::MachineProfile profile = profile_or_default(profile_path);

  kt::TrainConfig cfg;
  if (!config_path.empty()) cfg = kt::load_train_config(config_path);
  for (const std::string& kv : overrides) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw kt::ConfigError("--set expects key=value, got '" + kv + "'");
    }
    cfg.apply_override(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed) cfg.seed = *seed;
  cfg.validate();

  std::filesystem::path report_file =
      report_path.empty() ? std::filesystem::path(out + ".log.jsonl")
                          : std::filesystem::path(report_path);
  std::filesystem::path summary_file =
      summary_path.empty() ? std::filesystem::path(out + ".summary.json")
                           : std::filesystem::path(summary_path);

  std::unique_ptr<kt::Trainer> trainer;
  kt::ReportWriter report(report_file);
  auto started = std::chrono::steady_clock::now();
  if (!resume_path.empty()) {
    trainer = kt::load_checkpoint(resume_path, *env, profile);
    if (!config_path.empty() || seed) {
      std::cerr << "note: --resume continues with the checkpointed config; "
                   "--config/--seed are ignored (--set still applies)\n";
    }
    for (const std::string& kv : overrides) {
      size_t eq = kv.find('=');
      trainer->mutable_config().apply_override(kv.substr(0, eq), kv.substr(eq + 1));
    }
    trainer->finetune(&report);
  } else {
    std::vector<kt::TuningHint> hints = kt::load_hints(hints_path);
    trainer = std::make_unique<kt::Trainer>(*env, std::move(hints), cfg, profile);
    trainer->run(&report);
  }
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              started)
                    .count();

  kt::TrainSummary summary = trainer->summary();
  kt::write_text_file(summary_file, summary.to_json().dump(2) + "\n");
  kt::save_checkpoint(out, *trainer);

  nlohmann::ordered_json meta;
  meta["meta"] = "run";
  meta["wall_clock_seconds"] = wall;
  report.write_meta(meta);

  std::cout << "perf_0 " << summary.perf_0 << ", best " << summary.best_perf
            << " (gain " << summary.best_gain << "), evaluations "
            << summary.demo_evals + summary.finetune_evals << "\n";
  std::cout << "checkpoint written to " << out << "\n";
  return kExitOk;
}

int cmd_tune(const std::string& pool_dir, const std::string& env_path, int budget,
             const std::string& out, const std::string& profile_path,
             std::uint64_t seed, bool online_learn, double noise_divisor,
             bool no_hint_updates, double hint_adjust_prob) {
  auto env = kt::load_environment(env_path);
  kt::MachineProfile profile = profile_or_default(profile_path);

  std::vector<kt::AgentPoolEntry> pool = kt::scan_pool(pool_dir);
  for (const auto& entry : pool) {
    if (entry.catalog_fingerprint != env->catalog().fingerprint()) {
      std::cerr << "note: " << entry.checkpoint
                << " was trained against a different catalog\n";
    }
  }
  std::erase_if(pool, [&](const kt::AgentPoolEntry& e) {
    return e.catalog_fingerprint != env->catalog().fingerprint();
  });

  // Target fingerprint: declared mix plus conditions under the default
  // config (the baseline evaluation is repeated inside online_tune and is
  // not part of the budget).
  kt::Rng probe_rng(seed);
  kt::Environment::Result base = env->evaluate(env->default_config(),
                                               probe_rng.next_u64());
  kt::WorkloadFingerprint target{env->workload(), env->classify(base.metrics).tags()};

  const kt::AgentPoolEntry& entry = kt::select_agent(pool, target);
  std::cout << "selected agent " << entry.checkpoint << "\n";

  kt::TuneOptions options;
  options.budget = budget;
  options.seed = seed;
  options.online_learn = online_learn;
  options.noise_divisor = noise_divisor;
  options.update_hint_priorities = !no_hint_updates;
  options.hint_adjust_prob = hint_adjust_prob;

  kt::TuneResult result = kt::online_tune(entry.checkpoint, *env, profile, options);
  kt::write_text_file(out, result.to_json().dump(2) + "\n");
  std::cout << "perf_0 " << result.perf_0 << ", best " << result.best_perf
            << ", PG_best " << result.best_gain << "\n";
  std::cout << "result written to " << out << "\n";
  return kExitOk;
}

int cmd_simulate(const std::string& env_path, const std::string& config_path,
                 std::uint64_t seed) {
  auto env = kt::load_environment(env_path);
  kt::KnobConfig config = config_path.empty() ? env->default_config()
                                              : kt::load_knob_config(config_path);
  auto violations = kt::validate_config(env->catalog(), config);
  if (!violations.empty()) {
    for (const auto& v : violations) std::cerr << kt::to_string(v) << "\n";
    throw kt::ConfigError("configuration is invalid");
  }
  kt::Environment::Result r = env->evaluate(config, seed);
  std::cout << std::setprecision(12);
  for (std::size_t i = 0; i < r.metrics.values.size(); ++i) {
    std::cout << r.metrics.schema->fields[i].name << " = " << r.metrics.values[i]
              << "\n";
  }
  std::cout << "conditions =";
  kt::ConditionSet tags = env->classify(r.metrics);
  for (const std::string& tag : tags.tags()) {
    std::cout << " " << tag;
  }
  std::cout << "\nperf = " << r.perf << "\n";
  return kExitOk;
}

int cmd_report(const std::string& log_path, const std::string& out) {
  std::ifstream in(log_path);
  if (!in) throw kt::IoError("cannot open " + log_path);
  std::ofstream csv(out, std::ios::trunc);
  if (!csv) throw kt::IoError("cannot write " + out);

  csv << "eval,perf,best_perf\n";
  csv << std::setprecision(17);
  std::string line;
  double best = 0.0;
  bool any = false;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("eval")) continue;
    int eval = j["eval"].get<int>();
    if (!j.contains("perf") || j["perf"].is_null()) {
      csv << eval << ",," << (any ? std::to_string(best) : "") << "\n";
    } else {
      double perf = j["perf"].get<double>();
      best = any ? std::max(best, perf) : perf;
      any = true;
      csv << eval << "," << perf << "," << best << "\n";
    }
    ++rows;
  }
  std::cout << rows << " rows written to " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DBMS knob auto-tuner: hint extraction, demonstration-based "
               "agent training, and online tuning"};
  app.require_subcommand(1);

  // extract
  auto* extract = app.add_subcommand("extract", "Mine tuning hints from documents");
  std::string ex_sources, ex_dbms, ex_out, ex_fixtures, ex_catalog, ex_patterns;
  std::string ex_template, ex_synonyms, ex_report;
  kt::LlmConfig llm;
  int ex_repairs = 2;
  std::size_t ex_top = 0;
  extract->add_option("--sources", ex_sources, "Directory of source documents")
      ->required();
  extract->add_option("--dbms", ex_dbms, "Target DBMS (mysql|postgresql)")->required();
  extract->add_option("--out", ex_out, "Output hints JSON")->required();
  extract->add_option("--fixtures", ex_fixtures,
                      "Fixture directory; replays canned responses instead of "
                      "calling the endpoint");
  extract->add_option("--catalog", ex_catalog,
                      "Catalog file; hints for unknown knobs are counted as "
                      "non-actionable");
  extract->add_option("--patterns", ex_patterns, "Regex pattern file");
  extract->add_option("--prompt-template", ex_template, "Prompt template file");
  extract->add_option("--synonyms", ex_synonyms, "Condition synonym table");
  extract->add_option("--endpoint", llm.base_url, "Chat-completion base URL");
  extract->add_option("--endpoint-path", llm.path, "Chat-completion URL path");
  extract->add_option("--model", llm.model, "Model name");
  extract->add_option("--key-env", llm.api_key_env,
                      "Environment variable holding the API key");
  extract->add_option("--temperature", llm.temperature, "Sampling temperature");
  extract->add_option("--transport-retries", llm.max_retries, "HTTP retries");
  extract->add_option("--repair-retries", ex_repairs,
                      "Repair passes for deviant responses");
  extract->add_option("--report", ex_report, "Run report path");
  extract->add_option("--top-n", ex_top, "Rows in the printed knob ranking");

  // train
  auto* train = app.add_subcommand("train", "Offline agent training");
  std::string tr_env, tr_hints, tr_config, tr_out, tr_report, tr_summary, tr_profile;
  std::string tr_resume;
  std::optional<std::uint64_t> tr_seed;
  std::vector<std::string> tr_overrides;
  train->add_option("--env", tr_env, "Environment spec file")->required();
  train->add_option("--hints", tr_hints, "Hints JSON file");
  train->add_option("--config", tr_config, "Train config file");
  train->add_option("--out", tr_out, "Checkpoint output path")->required();
  train->add_option("--report", tr_report, "Step log (JSON lines)");
  train->add_option("--summary", tr_summary, "Summary JSON path");
  train->add_option("--profile", tr_profile, "Machine profile file");
  train->add_option("--seed", tr_seed, "Override the config seed");
  train->add_option("--set", tr_overrides, "Config override key=value (repeatable)");
  train->add_option("--resume", tr_resume, "Continue fine-tuning from a checkpoint");

  // tune
  auto* tune = app.add_subcommand("tune", "Online tuning with a pooled agent");
  std::string tu_pool, tu_env, tu_out, tu_profile;
  int tu_budget = 10;
  std::uint64_t tu_seed = 1;
  bool tu_learn = false, tu_no_updates = false;
  double tu_noise_div = 4.0, tu_adjust_prob = 1.0;
  tune->add_option("--pool", tu_pool, "Agents pool directory")->required();
  tune->add_option("--env", tu_env, "Environment spec file")->required();
  tune->add_option("--budget", tu_budget, "Evaluation budget")->required();
  tune->add_option("--out", tu_out, "Result JSON path")->required();
  tune->add_option("--profile", tu_profile, "Machine profile file");
  tune->add_option("--seed", tu_seed, "Random seed");
  tune->add_flag("--online-learn", tu_learn, "Keep updating the networks online");
  tune->add_option("--noise-divisor", tu_noise_div,
                   "Online exploration noise = sigma / divisor");
  tune->add_flag("--no-hint-updates", tu_no_updates,
                 "Freeze hint priorities during online tuning");
  tune->add_option("--hint-adjust-prob", tu_adjust_prob,
                   "Probability of applying a hint adjustment per iteration");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "One evaluation, print metrics and perf");
  std::string si_env, si_config;
  std::uint64_t si_seed = 0;
  simulate->add_option("--env", si_env, "Environment spec file")->required();
  simulate->add_option("--config", si_config, "Knob config file (defaults when omitted)");
  simulate->add_option("--seed", si_seed, "Evaluation seed");

  // report
  auto* report = app.add_subcommand("report", "Export a best-so-far curve as CSV");
  std::string re_log, re_out;
  report->add_option("--train-log", re_log, "Train log (JSON lines)")->required();
  report->add_option("--out", re_out, "CSV output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*extract) {
      return cmd_extract(ex_sources, ex_dbms, ex_out, ex_fixtures, ex_catalog,
                         ex_patterns, ex_template, ex_synonyms, llm, ex_repairs,
                         ex_report, ex_top);
    }
    if (*train) {
      if (tr_resume.empty() && tr_hints.empty()) {
        std::cerr << "error: train needs --hints (or --resume)\n";
        return kExitUsage;
      }
      return cmd_train(tr_env, tr_hints, tr_config, tr_out, tr_report, tr_summary,
                       tr_profile, tr_seed, tr_overrides, tr_resume);
    }
    if (*tune) {
      return cmd_tune(tu_pool, tu_env, tu_budget, tu_out, tu_profile, tu_seed,
                      tu_learn, tu_noise_div, tu_no_updates, tu_adjust_prob);
    }
    if (*simulate) return cmd_simulate(si_env, si_config, si_seed);
    if (*report) return cmd_report(re_log, re_out);
  } catch (const kt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const kt::EvalError& e) {
    std::cerr << "evaluation error: " << e.what() << "\n";
    return kExitEval;
  } catch (const kt::TrainError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kExitEval;
  } catch (const kt::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
