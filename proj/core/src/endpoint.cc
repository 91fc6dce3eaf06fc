#include "headlens/endpoint.h"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "headlens/errors.h"

namespace headlens {

using nlohmann::json;

EndpointConfig endpoint_from_json(const json& doc) {
  EndpointConfig c;
  try {
    c.id = doc.at("id").get<std::string>();
    c.url = doc.at("url").get<std::string>();
    c.path = doc.value("path", c.path);
    c.model = doc.value("model", c.model);
    c.api_key_env = doc.value("api_key_env", c.api_key_env);
    c.api_style = doc.value("api_style", c.api_style);
    c.max_retries = doc.value("max_retries", c.max_retries);
    c.backoff_ms = doc.value("backoff_ms", c.backoff_ms);
    c.timeout_s = doc.value("timeout_s", c.timeout_s);
    c.max_tokens = doc.value("max_tokens", c.max_tokens);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("endpoint config: ") + e.what());
  }
  if (c.api_style != "openai" && c.api_style != "anthropic" && c.api_style != "text") {
    throw ConfigError("endpoint '" + c.id + "': unknown api_style '" + c.api_style + "'");
  }
  if (c.max_retries < 0 || c.backoff_ms < 0) throw ConfigError("endpoint '" + c.id + "': negative retry settings");
  return c;
}

json endpoint_to_json(const EndpointConfig& c) {
  return {{"id", c.id},           {"url", c.url},
          {"path", c.path},       {"model", c.model},
          {"api_key_env", c.api_key_env}, {"api_style", c.api_style},
          {"max_retries", c.max_retries}, {"backoff_ms", c.backoff_ms},
          {"timeout_s", c.timeout_s},     {"max_tokens", c.max_tokens}};
}

namespace {

std::string extract_text(const EndpointConfig& c, const std::string& body) {
  if (c.api_style == "text") return body;
  try {
    const auto doc = json::parse(body);
    if (c.api_style == "openai") return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    return doc.at("content").at(0).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw JudgeError(JudgeError::Kind::kNetwork, "endpoint '" + c.id + "': malformed reply: " + e.what());
  }
}

}  // namespace

std::string complete(const EndpointConfig& c, const std::string& prompt) {
  httplib::Headers headers;
  if (!c.api_key_env.empty()) {
    const char* key = std::getenv(c.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw JudgeError(JudgeError::Kind::kAuth,
                       "endpoint '" + c.id + "': credential variable " + c.api_key_env + " is not set");
    }
    if (c.api_style == "anthropic") {
      headers.emplace("x-api-key", key);
    } else {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  if (c.api_style == "anthropic") headers.emplace("anthropic-version", "2023-06-01");

  std::string body;
  std::string content_type = "application/json";
  if (c.api_style == "text") {
    body = prompt;
    content_type = "text/plain";
  } else {
    json request = {{"model", c.model},
                    {"max_tokens", c.max_tokens},
                    {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
    if (c.api_style == "openai") request["temperature"] = 0;
    body = request.dump();
  }

  httplib::Client client(c.url);
  client.set_connection_timeout(c.timeout_s, 0);
  client.set_read_timeout(c.timeout_s, 0);

  std::string last_error;
  for (int attempt = 0; attempt <= c.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(c.backoff_ms) << (attempt - 1)));
    }
    auto res = client.Post(c.path, headers, body, content_type);
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 401 || res->status == 403) {
      throw JudgeError(JudgeError::Kind::kAuth,
                       "endpoint '" + c.id + "': authentication rejected (HTTP " + std::to_string(res->status) + ")");
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw JudgeError(JudgeError::Kind::kNetwork,
                       "endpoint '" + c.id + "': HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    return extract_text(c, res->body);
  }
  throw JudgeError(JudgeError::Kind::kNetwork, "endpoint '" + c.id + "': giving up after " +
                                                   std::to_string(c.max_retries + 1) + " attempts (" + last_error + ")");
}

}  // namespace headlens
