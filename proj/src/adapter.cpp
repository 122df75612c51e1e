#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <regex>
#include <sstream>

#include "knobtuner/environment.hpp"
#include "knobtuner/errors.hpp"
#include "knobtuner/text_config.hpp"

namespace knobtuner {

CommandResult run_command(const std::string& command, double timeout_seconds) {
  int pipe_fd[2];
  if (pipe(pipe_fd) != 0) throw EvalError("pipe() failed: " + std::string(strerror(errno)));

  pid_t pid = fork();
  if (pid < 0) {
    close(pipe_fd[0]);
    close(pipe_fd[1]);
    throw EvalError("fork() failed: " + std::string(strerror(errno)));
  }
  if (pid == 0) {
    // child: own process group so a timeout kill reaps grandchildren too
    setpgid(0, 0);
    dup2(pipe_fd[1], STDOUT_FILENO);
    dup2(pipe_fd[1], STDERR_FILENO);
    close(pipe_fd[0]);
    close(pipe_fd[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), (char*)nullptr);
    _exit(127);
  }

  close(pipe_fd[1]);
  std::string output;
  auto deadline = std::chrono::steady_clock::now() +
                  std::chrono::duration<double>(timeout_seconds);
  bool timed_out = false;
  char buf[4096];
  for (;;) {
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) {
      timed_out = true;
      break;
    }
    pollfd pfd{pipe_fd[0], POLLIN, 0};
    int rc = poll(&pfd, 1, static_cast<int>(remaining.count()));
    if (rc == 0) {
      timed_out = true;
      break;
    }
    if (rc < 0) {
      if (errno == EINTR) continue;
      break;
    }
    ssize_t n = read(pipe_fd[0], buf, sizeof(buf));
    if (n > 0) {
      output.append(buf, static_cast<size_t>(n));
    } else {
      break;  // EOF or error
    }
  }
  close(pipe_fd[0]);

  if (timed_out) {
    kill(-pid, SIGKILL);
    int status = 0;
    waitpid(pid, &status, 0);
    throw EvalError("timeout after " + std::to_string(timeout_seconds) +
                    " s running: " + command);
  }

  int status = 0;
  waitpid(pid, &status, 0);
  CommandResult result;
  result.output = std::move(output);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return result;
}

namespace {

std::string substitute(const std::string& tmpl, const std::string& key,
                       const std::string& value) {
  std::string out = tmpl;
  const std::string token = "{" + key + "}";
  size_t pos = 0;
  while ((pos = out.find(token, pos)) != std::string::npos) {
    out.replace(pos, token.size(), value);
    pos += value.size();
  }
  return out;
}

}  // namespace

ExternalEnvironment::ExternalEnvironment(std::shared_ptr<const Catalog> catalog,
                                         WorkloadMix mix,
                                         std::shared_ptr<const MetricsSchema> schema,
                                         std::vector<ConditionRule> rules,
                                         AdapterSpec adapter,
                                         std::filesystem::path work_dir)
    : Environment(std::move(catalog), mix, std::move(schema), std::move(rules)),
      adapter_(std::move(adapter)),
      work_dir_(std::move(work_dir)) {}

Environment::Result ExternalEnvironment::evaluate(const KnobConfig& config,
                                                  std::uint64_t /*seed*/) {
  auto violations = validate_config(*catalog_, config);
  if (!violations.empty()) {
    throw ConfigError("evaluate: invalid config: " + to_string(violations.front()));
  }

  std::filesystem::path config_path = work_dir_ / "knob_config.cfg";
  save_knob_config(config_path, config);

  auto run_step = [&](const std::string& name, const std::string& tmpl) {
    std::string cmd = substitute(tmpl, "config_path", config_path.string());
    CommandResult r = run_command(cmd, adapter_.timeout_seconds);
    if (r.exit_code != 0) {
      throw EvalError(name + " command exited with " + std::to_string(r.exit_code) +
                      ": " + r.output);
    }
    return r;
  };

  run_step("apply-config", adapter_.apply_command);
  CommandResult bench = run_step("run-benchmark", adapter_.bench_command);
  run_step("collect-metrics", adapter_.metrics_command);

  std::regex re;
  try {
    re = std::regex(adapter_.perf_regex);
  } catch (const std::regex_error& e) {
    throw ConfigError("bad perf_regex: " + std::string(e.what()));
  }
  std::smatch m;
  if (!std::regex_search(bench.output, m, re)) {
    throw EvalError("perf not found in benchmark output");
  }
  double perf = 0.0;
  try {
    perf = std::stod(m.size() > 1 ? m[1].str() : m[0].str());
  } catch (const std::exception&) {
    throw EvalError("perf pattern matched non-numeric text '" + m[0].str() + "'");
  }
  if (!(perf > 0.0) || !std::isfinite(perf)) {
    throw EvalError("benchmark reported non-positive perf " + std::to_string(perf) +
                    " (latency-style adapters must report 1/latency)");
  }

  ConfigText metrics_text = load_config_text(adapter_.metrics_file);
  MetricsSnapshot snap;
  snap.schema = schema_;
  snap.values.resize(schema_->fields.size(), 0.0);
  for (std::size_t i = 0; i < schema_->fields.size(); ++i) {
    const ConfigEntry* e = metrics_text.globals.find(schema_->fields[i].name);
    if (!e) {
      throw EvalError("metrics file " + adapter_.metrics_file.string() +
                      " missing '" + schema_->fields[i].name + "'");
    }
    snap.values[i] = std::stod(e->value);
    if (!std::isfinite(snap.values[i])) {
      throw EvalError("metric '" + schema_->fields[i].name + "' is not finite");
    }
  }
  return Result{std::move(snap), perf};
}

}  // namespace knobtuner
