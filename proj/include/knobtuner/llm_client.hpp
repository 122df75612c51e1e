#pragma once

#include <filesystem>
#include <string>

namespace knobtuner {

struct LlmConfig {
  std::string base_url = "http://127.0.0.1:8080";
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.0;  // extraction favors reproducibility
  int max_retries = 2;       // transport retries per request
  // The credential is read from this environment variable, never from
  // config files.
  std::string api_key_env = "LLM_API_KEY";
};

// Chat-completion client. complete() returns the assistant message text or
// throws EvalError after exhausting retries.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

class HttpLlmClient : public LlmClient {
 public:
  explicit HttpLlmClient(LlmConfig config);
  std::string complete(const std::string& prompt) override;

 private:
  LlmConfig config_;
};

// Replays canned responses keyed by prompt hash; used by tests and the
// --fixtures extraction mode. A missing fixture is an endpoint failure.
class FixtureLlmClient : public LlmClient {
 public:
  explicit FixtureLlmClient(std::filesystem::path dir);
  std::string complete(const std::string& prompt) override;

  // File name a given prompt resolves to: <fnv1a-hex>.txt
  static std::string fixture_name(const std::string& prompt);

 private:
  std::filesystem::path dir_;
};

}  // namespace knobtuner
