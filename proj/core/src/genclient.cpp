// SPDX-License-Identifier: Apache-2.0

#include "lcdoc/genclient.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include <fmt/format.h>

#include "httplib.h"

namespace lcdoc {

namespace {

std::string mime_for(const std::filesystem::path& path) {
  const auto ext = to_lower_ascii(path.extension().string());
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".webp") return "image/webp";
  if (ext == ".gif") return "image/gif";
  return "image/png";
}

bool retryable_status(int status) { return status == 429 || (status >= 500 && status <= 599); }

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

SplitUrl split_base_url(const std::string& base) {
  const auto scheme_end = base.find("://");
  if (scheme_end == std::string::npos) {
    throw GenerationError(fmt::format("base URL '{}' lacks a scheme", base));
  }
  const auto path_start = base.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = base.substr(0, path_start);
  if (path_start != std::string::npos) {
    out.prefix = base.substr(path_start);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  }
  return out;
}

FinishReason finish_from_string(const std::string& s) {
  if (s == "length") return FinishReason::length;
  if (s == "error") return FinishReason::error;
  return FinishReason::stop;
}

}  // namespace

void ChatRequest::validate() const {
  if (messages.empty()) throw std::invalid_argument("chat request has no messages");
  if (temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
  if (max_output_tokens <= 0) throw std::invalid_argument("max_output_tokens must be > 0");
  for (const auto& m : messages) {
    for (const auto& item : m.content) {
      if (item.is_image() && item.image_ref.empty()) {
        throw std::invalid_argument("image item without a ref");
      }
    }
  }
}

std::string ChatRequest::flattened_text() const {
  std::string out;
  for (const auto& m : messages) {
    const auto t = m.joined_text();
    if (t.empty()) continue;
    if (!out.empty()) out += '\n';
    out += t;
  }
  return out;
}

std::string to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "stop";
}

EndpointConfig EndpointConfig::from_env(const std::string& base_url_override) {
  EndpointConfig cfg;
  const char* key = std::getenv("GENAI_API_KEY");
  if (key == nullptr || *key == '\0') {
    throw GenerationError("GENAI_API_KEY is not set");
  }
  cfg.api_key = key;
  if (!base_url_override.empty()) {
    cfg.base_url = base_url_override;
  } else if (const char* base = std::getenv("GENAI_BASE_URL"); base != nullptr && *base != '\0') {
    cfg.base_url = base;
  } else {
    throw GenerationError("GENAI_BASE_URL is not set and no base URL was configured");
  }
  return cfg;
}

std::string base64_encode(std::string_view bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const auto v = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16) |
                   (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8) |
                   static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 2]));
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const auto v = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const auto v = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16) |
                   (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::string image_ref_to_url(const std::string& image_ref) {
  if (image_ref.rfind("data:", 0) == 0 || image_ref.rfind("http://", 0) == 0 ||
      image_ref.rfind("https://", 0) == 0) {
    return image_ref;
  }
  std::filesystem::path path =
      image_ref.rfind("file://", 0) == 0 ? image_ref.substr(7) : image_ref;
  if (!std::filesystem::exists(path)) {
    throw GenerationError(fmt::format("image ref does not resolve: {}", image_ref));
  }
  return fmt::format("data:{};base64,{}", mime_for(path), base64_encode(read_file(path)));
}

HttpChatClient::HttpChatClient(EndpointConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)) {
  if (!sleeper_) {
    sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
}

json HttpChatClient::build_payload(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    json content = json::array();
    for (const auto& item : m.content) {
      if (item.is_text()) {
        content.push_back({{"type", "text"}, {"text", item.text}});
      } else {
        content.push_back(
            {{"type", "image_url"}, {"image_url", {{"url", image_ref_to_url(item.image_ref)}}}});
      }
    }
    messages.push_back({{"role", to_string(m.role)}, {"content", content}});
  }
  return json{{"model", request.model},
              {"messages", messages},
              {"temperature", request.temperature},
              {"max_tokens", request.max_output_tokens}};
}

GenerationResult HttpChatClient::parse_response(const json& body, const std::string& tag) {
  GenerationResult result;
  result.request_tag = tag;
  try {
    const auto& choice = body.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    if (content.is_string()) {
      result.text = content.get<std::string>();
    } else if (content.is_array()) {
      for (const auto& part : content) {
        if (part.value("type", "") == "text") result.text += part.value("text", "");
      }
    } else if (!content.is_null()) {
      throw GenerationError("message content has unexpected type");
    }
    if (choice.contains("finish_reason") && choice.at("finish_reason").is_string()) {
      result.finish_reason = finish_from_string(choice.at("finish_reason").get<std::string>());
    }
    if (body.contains("usage") && body.at("usage").is_object()) {
      result.usage.prompt_tokens = body.at("usage").value("prompt_tokens", std::int64_t{0});
      result.usage.completion_tokens = body.at("usage").value("completion_tokens", std::int64_t{0});
    }
  } catch (const json::exception& e) {
    throw GenerationError(fmt::format("malformed completion response: {}", e.what()));
  }
  if (result.finish_reason == FinishReason::error) {
    result.error = "service reported finish_reason=error";
  }
  return result;
}

std::chrono::milliseconds HttpChatClient::backoff_delay(int attempt) {
  double delay = static_cast<double>(config_.retry.initial_backoff.count());
  for (int i = 1; i < attempt; ++i) delay *= config_.retry.multiplier;
  double factor = 1.0;
  {
    std::lock_guard lock(jitter_mutex_);
    factor += config_.retry.jitter * (2.0 * jitter_rng_.uniform01() - 1.0);
  }
  return std::chrono::milliseconds(static_cast<std::int64_t>(delay * factor));
}

GenerationResult HttpChatClient::complete(const ChatRequest& request) {
  request.validate();
  if (config_.api_key.empty()) throw GenerationError("credential missing (GENAI_API_KEY)");
  const auto url = split_base_url(config_.base_url);
  const std::string path = url.prefix + "/v1/chat/completions";
  const std::string body = build_payload(request).dump();

  std::string last_error;
  int last_status = 0;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    httplib::Client http(url.origin);
    http.set_bearer_token_auth(config_.api_key);
    http.set_read_timeout(config_.timeout);
    http.set_write_timeout(config_.timeout);
    http.set_connection_timeout(std::chrono::seconds(30));

    auto res = http.Post(path, body, "application/json");
    if (!res) {
      last_error = fmt::format("transport error: {}", httplib::to_string(res.error()));
      last_status = 0;
    } else if (res->status == 200) {
      json parsed;
      try {
        parsed = json::parse(res->body);
      } catch (const json::parse_error& e) {
        throw GenerationError(fmt::format("malformed completion response: {}", e.what()), 200,
                              attempt);
      }
      auto result = parse_response(parsed, request.request_tag);
      result.attempts = attempt;
      return result;
    } else if (!retryable_status(res->status)) {
      throw GenerationError(fmt::format("HTTP {}: {}", res->status, res->body), res->status,
                            attempt);
    } else {
      last_status = res->status;
      last_error = fmt::format("HTTP {}", res->status);
    }
    if (attempt < config_.retry.max_attempts) sleeper_(backoff_delay(attempt));
  }
  throw GenerationError(
      fmt::format("retries exhausted after {} attempts: {}", config_.retry.max_attempts, last_error),
      last_status, config_.retry.max_attempts);
}

MockChatClient::MockChatClient(std::vector<MockRule> rules) : rules_(std::move(rules)) {}

MockChatClient MockChatClient::from_jsonl(const std::filesystem::path& path) {
  return MockChatClient(load_mock_rules(path));
}

std::vector<MockRule> load_mock_rules(const std::filesystem::path& path) {
  std::vector<MockRule> rules;
  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    MockRule rule;
    if (j.contains("match")) {
      const auto& m = j.at("match");
      if (m.contains("tag")) rule.tag = m.at("tag").get<std::string>();
      if (m.contains("substring")) rule.substring = m.at("substring").get<std::string>();
    }
    if (!j.contains("response_text") && !j.contains("fail")) {
      throw std::runtime_error(
          fmt::format("{}:{}: mock rule needs response_text or fail", path.string(), line));
    }
    rule.response_text = j.value("response_text", std::string{});
    rule.latency_ms = j.value("latency_ms", std::int64_t{0});
    rule.finish_reason = finish_from_string(j.value("finish_reason", std::string("stop")));
    if (j.contains("fail")) rule.fail = j.at("fail").get<std::string>();
    rules.push_back(std::move(rule));
  });
  return rules;
}

const MockRule* MockChatClient::match(const ChatRequest& request) const {
  for (const auto& rule : rules_) {
    if (rule.tag && *rule.tag == request.request_tag) return &rule;
  }
  const std::string text = request.flattened_text();
  for (const auto& rule : rules_) {
    if (rule.tag) continue;
    if (!rule.substring || text.find(*rule.substring) != std::string::npos) return &rule;
  }
  return nullptr;
}

GenerationResult MockChatClient::complete(const ChatRequest& request) {
  request.validate();
  ++calls_;
  const std::size_t now = ++in_flight_;
  std::size_t prev = peak_.load();
  while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
  }
  struct Leave {
    std::atomic<std::size_t>& counter;
    ~Leave() { --counter; }
  } leave{in_flight_};

  const MockRule* rule = match(request);
  if (rule == nullptr) {
    throw GenerationError(fmt::format("mock: no rule matches tag '{}'", request.request_tag));
  }
  if (rule->latency_ms > 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(rule->latency_ms));
  }
  if (rule->fail) throw GenerationError(fmt::format("mock failure: {}", *rule->fail), 500, 1);

  GenerationResult result;
  result.text = rule->response_text;
  result.finish_reason = rule->finish_reason;
  result.request_tag = request.request_tag;
  result.usage.prompt_tokens = estimate_text_tokens(request.flattened_text());
  result.usage.completion_tokens = estimate_text_tokens(result.text);
  if (result.finish_reason == FinishReason::error) result.error = "mock finish_reason=error";
  return result;
}

std::vector<GenerationResult> complete_batch(ChatClient& client,
                                             const std::vector<ChatRequest>& requests,
                                             std::size_t max_in_flight) {
  if (max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
  std::vector<GenerationResult> results(requests.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      try {
        results[i] = client.complete(requests[i]);
      } catch (const std::exception& e) {
        GenerationResult failed;
        failed.finish_reason = FinishReason::error;
        failed.request_tag = requests[i].request_tag;
        failed.error = e.what();
        if (const auto* ge = dynamic_cast<const GenerationError*>(&e)) {
          failed.attempts = ge->attempts();
        }
        results[i] = std::move(failed);
      }
    }
  };

  const std::size_t threads = std::min(max_in_flight, requests.size());
  if (threads <= 1) {
    worker();
    return results;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  return results;
}

std::string complete_text(ChatClient& client, const ChatRequest& request) {
  auto result = client.complete(request);
  if (!result.ok()) {
    throw GenerationError(fmt::format("generation failed for '{}': {}", request.request_tag,
                                      result.error.value_or("unknown error")));
  }
  if (trim(result.text).empty()) {
    throw GenerationError(fmt::format("empty completion for '{}'", request.request_tag));
  }
  return result.text;
}

}  // namespace lcdoc
