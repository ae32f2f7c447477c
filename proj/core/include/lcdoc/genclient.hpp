// SPDX-License-Identifier: Apache-2.0
//
// Chat-completion client over an OpenAI-compatible wire protocol, plus a
// deterministic fixture-driven mock. Every pipeline talks to a ChatClient;
// swapping the mock for the HTTP client is a configuration change only.

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lcdoc/message.hpp"

namespace lcdoc {

struct ChatRequest {
  std::string model;
  std::vector<Message> messages;
  double temperature = 0.0;
  std::int64_t max_output_tokens = 2048;
  std::string request_tag;

  /// Throws std::invalid_argument when the request breaks its invariants.
  void validate() const;

  /// All text items across messages, newline-joined (used for matching).
  std::string flattened_text() const;
};

enum class FinishReason { stop, length, error };

std::string to_string(FinishReason reason);

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct GenerationResult {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  Usage usage;
  std::string request_tag;
  std::optional<std::string> error;
  int attempts = 1;

  bool ok() const { return finish_reason != FinishReason::error; }
};

/// Raised by ChatClient::complete for non-recoverable failures.
class GenerationError : public std::runtime_error {
public:
  GenerationError(const std::string& what, int status = 0, int attempts = 0)
      : std::runtime_error(what), status_(status), attempts_(attempts) {}
  int status() const { return status_; }
  int attempts() const { return attempts_; }

private:
  int status_;
  int attempts_;
};

class ChatClient {
public:
  virtual ~ChatClient() = default;

  /// Returns the completion or throws GenerationError. Implementations must
  /// be safe to call from many threads at once.
  virtual GenerationResult complete(const ChatRequest& request) = 0;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
  double jitter = 0.2;  // +/- fraction applied to each delay
};

struct EndpointConfig {
  std::string base_url;
  std::string api_key;
  RetryPolicy retry;
  std::chrono::seconds timeout{600};

  /// Reads GENAI_BASE_URL and GENAI_API_KEY. Throws when the credential is
  /// missing; `base_url_override` wins over the environment when non-empty.
  static EndpointConfig from_env(const std::string& base_url_override = {});
};

/// HTTP POST {base}/v1/chat/completions with retries on 429 and 5xx.
class HttpChatClient : public ChatClient {
public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpChatClient(EndpointConfig config, Sleeper sleeper = {});

  GenerationResult complete(const ChatRequest& request) override;

  /// Wire payload; image items become base64 data URLs.
  static json build_payload(const ChatRequest& request);
  static GenerationResult parse_response(const json& body, const std::string& tag);

private:
  std::chrono::milliseconds backoff_delay(int attempt);

  EndpointConfig config_;
  Sleeper sleeper_;
  std::mutex jitter_mutex_;
  Rng jitter_rng_{0x5eed};
};

/// Image ref -> "data:<mime>;base64,..." (http(s) and data: refs pass through).
std::string image_ref_to_url(const std::string& image_ref);
std::string base64_encode(std::string_view bytes);

struct MockRule {
  std::optional<std::string> tag;
  std::optional<std::string> substring;
  std::string response_text;
  std::int64_t latency_ms = 0;
  FinishReason finish_reason = FinishReason::stop;
  std::optional<std::string> fail;  // permanent failure message
};

/// Fixture lines: {match: {tag|substring}, response_text, latency_ms?,
/// finish_reason?, fail?}.
std::vector<MockRule> load_mock_rules(const std::filesystem::path& path);

/// Deterministic client answering from fixture rules. Exact tag matches are
/// tried first, then substring rules in fixture order; a rule with neither
/// key is a catch-all.
class MockChatClient : public ChatClient {
public:
  MockChatClient() = default;
  explicit MockChatClient(std::vector<MockRule> rules);

  static MockChatClient from_jsonl(const std::filesystem::path& path);

  void add_rule(MockRule rule) { rules_.push_back(std::move(rule)); }

  GenerationResult complete(const ChatRequest& request) override;

  std::size_t calls() const { return calls_.load(); }
  std::size_t peak_in_flight() const { return peak_.load(); }

private:
  const MockRule* match(const ChatRequest& request) const;

  std::vector<MockRule> rules_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> peak_{0};
};

/// Runs requests with at most `max_in_flight` outstanding; results come back
/// in input order and failures are embedded per entry.
std::vector<GenerationResult> complete_batch(ChatClient& client,
                                             const std::vector<ChatRequest>& requests,
                                             std::size_t max_in_flight);

/// complete() that also rejects error results and empty text.
std::string complete_text(ChatClient& client, const ChatRequest& request);

}  // namespace lcdoc
