#pragma once

#include <string>

#include <nlohmann/json.hpp>

namespace headlens {

// A hosted text-completion endpoint. Credentials are read from the
// environment variable named by api_key_env at call time and never stored.
struct EndpointConfig {
  std::string id;
  std::string url;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env;
  // "openai" (chat completions), "anthropic" (messages) or "text" (raw body
  // in, raw body out).
  std::string api_style = "openai";
  int max_retries = 3;
  int backoff_ms = 500;
  int timeout_s = 60;
  int max_tokens = 32;
};

EndpointConfig endpoint_from_json(const nlohmann::json& doc);
nlohmann::json endpoint_to_json(const EndpointConfig& config);

// Sends one prompt and returns the completion text. Transient failures
// (connection errors, HTTP 429 and 5xx) are retried up to max_retries times
// with exponential backoff. Throws JudgeError: kAuth for a missing credential
// or HTTP 401/403, kNetwork when retries are exhausted or the reply is
// malformed.
std::string complete(const EndpointConfig& config, const std::string& prompt);

}  // namespace headlens
