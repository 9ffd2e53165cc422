// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "capqa/prompt.hpp"

namespace capqa {

struct CompletionRequest {
  std::string model;
  std::vector<ChatTurn> turns;  // non-empty; first turn role = user
  double temperature = 0.0;
  std::optional<int> max_output_tokens;
};

/// One backend exchange, the unit of caching and cost accounting.
struct CompletionRecord {
  std::string request_digest;
  std::string response_text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t latency_ms = 0;
  std::string backend_id;
  std::int64_t timestamp_ms = 0;
  int attempts = 1;
};

struct RetryPolicy {
  int max_attempts = 3;
  int base_delay_ms = 250;
  int max_delay_ms = 8000;
  double jitter_fraction = 0.1;
};

struct RatePolicy {
  int requests_per_minute = 600;
  std::int64_t tokens_per_minute = 2'000'000;
  int max_in_flight = 8;
  RetryPolicy retry;
};

/// Injectable time source so rate limiting and backoff are testable under
/// simulated time.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() = 0;
  virtual void sleep_ms(std::int64_t ms) = 0;
};

class SystemClock : public Clock {
 public:
  std::int64_t now_ms() override;
  void sleep_ms(std::int64_t ms) override;
  static SystemClock& instance();
};

/// Simulated clock: sleeping advances time instantly.
class ManualClock : public Clock {
 public:
  explicit ManualClock(std::int64_t start_ms = 0) : now_(start_ms) {}
  std::int64_t now_ms() override;
  void sleep_ms(std::int64_t ms) override;
  void advance_ms(std::int64_t ms);

 private:
  std::mutex mu_;
  std::int64_t now_;
};

/// Default token estimate: ceil(byte_length / 4). An exact counter can be
/// plugged into the executor and wins over the heuristic in records.
std::int64_t estimate_tokens(std::string_view text);
using TokenCounter = std::function<std::int64_t(std::string_view)>;

/// Content digest of the canonicalized request. Deterministic function of
/// (backend_id, model, temperature, max_output_tokens, turns).
std::string request_digest(const std::string& backend_id, const CompletionRequest& request);

/// Sliding-window admission control: over any 60 s window, admitted requests
/// stay within requests_per_minute and admitted estimated tokens within
/// tokens_per_minute. acquire() blocks (through the clock) until legal.
class RateLimiter {
 public:
  RateLimiter(const RatePolicy& policy, Clock& clock);
  void acquire(std::int64_t estimated_tokens);

 private:
  struct Admission {
    std::int64_t at_ms;
    std::int64_t tokens;
  };

  RatePolicy policy_;
  Clock& clock_;
  std::mutex mu_;
  std::deque<Admission> window_;
  std::int64_t window_tokens_ = 0;
};

struct BackendReply {
  std::string text;
  std::optional<std::int64_t> prompt_tokens;
  std::optional<std::int64_t> completion_tokens;
};

/// Transport interface. Implementations throw TransportError on retryable
/// failures and SchemaError on contract violations.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual BackendReply complete(const CompletionRequest& request) = 0;
};

/// OpenAI-compatible chat-completions client.
struct HttpBackendConfig {
  std::string base_url;  // e.g. "https://api.openai.com"
  std::string api_key;
  std::string chat_path = "/v1/chat/completions";
  int timeout_s = 120;
};

class HttpChatBackend : public CompletionBackend {
 public:
  explicit HttpChatBackend(HttpBackendConfig config);
  BackendReply complete(const CompletionRequest& request) override;

  /// Number of HttpChatBackend instances constructed since process start.
  /// Lets tests assert that mock/replay paths never touch live transport.
  static std::int64_t instances_created();

 private:
  HttpBackendConfig config_;
};

/// Ordered substring rules matched against the last user turn; the first
/// match wins, the default always matches.
struct MockRule {
  std::string contains;
  std::string response;
};

struct MockRulebook {
  std::vector<MockRule> rules;
  std::string default_response = "A";

  static MockRulebook from_file(const std::filesystem::path& path);
  const std::string& respond(const CompletionRequest& request) const;
};

/// Deterministic offline backend; latency and timestamps are synthesized as
/// zero. Instrumented for concurrency assertions.
class MockBackend : public CompletionBackend {
 public:
  explicit MockBackend(MockRulebook rulebook);
  BackendReply complete(const CompletionRequest& request) override;

  void set_entry_delay_ms(int ms) { entry_delay_ms_ = ms; }
  std::int64_t calls() const { return calls_.load(); }
  int max_in_flight_observed() const { return max_in_flight_.load(); }

 private:
  MockRulebook rulebook_;
  std::atomic<std::int64_t> calls_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
  int entry_delay_ms_ = 0;
};

/// Append-only digest-indexed store of completed exchanges. Concurrent
/// readers, serialized appends; every append is flushed so an interrupted
/// run leaves a loadable cache.
class CompletionCache {
 public:
  explicit CompletionCache(std::filesystem::path file);

  std::optional<CompletionRecord> find(const std::string& digest) const;
  void append(const CompletionRequest& request, const CompletionRecord& record);
  std::size_t size() const;
  const std::filesystem::path& file() const { return file_; }

 private:
  std::filesystem::path file_;
  mutable std::shared_mutex mu_;
  std::map<std::string, CompletionRecord> by_digest_;
};

enum class BackendMode { kLive, kMock, kReplayOnly };

const char* backend_mode_name(BackendMode mode);

struct ExecutorConfig {
  BackendMode mode = BackendMode::kMock;
  std::string backend_id = "mock";
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.0;
  std::optional<int> max_output_tokens;
  RatePolicy rate;
  /// Seeds backoff jitter; live runs without a seed use a random device.
  std::optional<std::uint64_t> jitter_seed;
};

struct ExecutorStats {
  std::int64_t backend_calls = 0;
  std::int64_t cache_hits = 0;
  std::int64_t total_attempts = 0;
};

/// Shared-safe completion executor: cache check, rate-limit admission,
/// bounded in-flight transport, retry with exponential backoff, persistent
/// record. Plan rounds are strictly sequential per item; many items may
/// execute concurrently against one executor.
class Executor {
 public:
  Executor(ExecutorConfig config, std::shared_ptr<CompletionCache> cache,
           std::unique_ptr<CompletionBackend> backend, Clock* clock = nullptr);
  ~Executor();

  CompletionRecord complete(const CompletionRequest& request);

  /// Executes all rounds of a plan in order, feeding each round's output to
  /// the next (carry-slot substitution or conversation continuation).
  std::vector<CompletionRecord> execute_plan(const PromptPlan& plan);

  CompletionRequest make_request(std::vector<ChatTurn> turns,
                                 std::optional<double> temperature_override = {}) const;

  void set_token_counter(TokenCounter counter) { token_counter_ = std::move(counter); }
  ExecutorStats stats() const;
  const ExecutorConfig& config() const { return config_; }

 private:
  CompletionRecord call_backend(const CompletionRequest& request, const std::string& digest);

  ExecutorConfig config_;
  std::shared_ptr<CompletionCache> cache_;
  std::unique_ptr<CompletionBackend> backend_;
  Clock* clock_;
  RateLimiter limiter_;
  TokenCounter token_counter_;
  std::unique_ptr<class Semaphore> in_flight_;
  mutable std::mutex stats_mu_;
  ExecutorStats stats_;
  std::mutex jitter_mu_;
  std::uint64_t jitter_state_;
};

}  // namespace capqa
