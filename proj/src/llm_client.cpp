#include "knobtuner/llm_client.hpp"

#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "knobtuner/errors.hpp"
#include "knobtuner/text_config.hpp"

namespace knobtuner {

HttpLlmClient::HttpLlmClient(LlmConfig config) : config_(std::move(config)) {}

std::string HttpLlmClient::complete(const std::string& prompt) {
  nlohmann::ordered_json body;
  body["model"] = config_.model;
  body["temperature"] = config_.temperature;
  body["messages"] = nlohmann::ordered_json::array(
      {{{"role", "user"}, {"content", prompt}}});
  std::string payload = body.dump();

  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str());
      key && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    httplib::Client client(config_.base_url);
    client.set_read_timeout(120, 0);
    auto res = client.Post(config_.path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
      continue;
    }
    try {
      nlohmann::json j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("malformed completion payload: ") + e.what();
    }
  }
  throw EvalError("chat completion failed after " +
                  std::to_string(config_.max_retries + 1) + " attempts: " +
                  last_error);
}

FixtureLlmClient::FixtureLlmClient(std::filesystem::path dir)
    : dir_(std::move(dir)) {
  if (!std::filesystem::is_directory(dir_)) {
    throw ConfigError("fixture directory does not exist: " + dir_.string());
  }
}

std::string FixtureLlmClient::fixture_name(const std::string& prompt) {
  return to_hex(fnv1a(prompt)) + ".txt";
}

std::string FixtureLlmClient::complete(const std::string& prompt) {
  std::filesystem::path file = dir_ / fixture_name(prompt);
  if (!std::filesystem::exists(file)) {
    throw EvalError("no fixture response for prompt hash " +
                    fixture_name(prompt));
  }
  return read_text_file(file);
}

}  // namespace knobtuner
