#pragma once

// Chat-completion client over HTTP(S).

#include <cstdlib>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include "eqrl/errors.hpp"
#include "eqrl/llm/client.hpp"
#include "httplib.h"
#include "json.hpp"

namespace eqrl::llm {

struct HttpClientConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4";
  std::string api_key_env = "OPENAI_API_KEY";
  int timeout_s = 120;
  int retries = 1;
  int backoff_ms = 1000;

  nlohmann::json to_json() const {
    return {{"endpoint", endpoint}, {"model", model},     {"api_key_env", api_key_env},
            {"timeout_s", timeout_s}, {"retries", retries}, {"backoff_ms", backoff_ms}};
  }
};

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline ParsedUrl parse_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ArgumentError("bad endpoint URL: " + url);
  return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

class HttpLlmClient : public LlmClient {
 public:
  explicit HttpLlmClient(HttpClientConfig cfg) : cfg_(std::move(cfg)), url_(parse_url(cfg_.endpoint)) {
    if (const char* k = std::getenv(cfg_.api_key_env.c_str())) api_key_ = k;
  }

  // A request for n samples; when the service returns fewer choices the
  // remainder is fetched one sample at a time.
  std::vector<std::string> complete(const std::string& prompt, int n, const GenerationParams& params) override {
    std::vector<std::string> out = request(prompt, n, params);
    while (static_cast<int>(out.size()) < n) {
      auto one = request(prompt, 1, params);
      if (one.empty()) throw TransportError("service returned no choices");
      out.push_back(std::move(one.front()));
    }
    out.resize(static_cast<std::size_t>(n));
    return out;
  }

  std::string name() const override { return "http(" + cfg_.model + ")"; }

 private:
  std::vector<std::string> request(const std::string& prompt, int n, const GenerationParams& params) {
    nlohmann::json body = params.to_json();
    body["model"] = cfg_.model;
    body["n"] = n;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
    const std::string payload = body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_ms << (attempt - 1)));
      httplib::Client cli(url_.origin);
      cli.set_connection_timeout(cfg_.timeout_s);
      cli.set_read_timeout(cfg_.timeout_s);
      cli.set_write_timeout(cfg_.timeout_s);
      auto res = cli.Post(url_.path, headers, payload, "application/json");
      if (!res) {
        last_error = "request failed: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200)
        throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));
      try {
        const auto j = nlohmann::json::parse(res->body);
        std::vector<std::string> out;
        for (const auto& c : j.at("choices")) {
          const auto& msg = c.contains("message") ? c.at("message") : c;
          const auto& content = msg.contains("content") ? msg.at("content") : msg.at("text");
          out.push_back(content.is_null() ? std::string() : content.get<std::string>());
        }
        return out;
      } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("malformed completion response: ") + e.what());
      }
    }
    throw TransportError(last_error + " (after " + std::to_string(cfg_.retries + 1) + " attempts)");
  }

  HttpClientConfig cfg_;
  ParsedUrl url_;
  std::string api_key_;
};

}  // namespace eqrl::llm
