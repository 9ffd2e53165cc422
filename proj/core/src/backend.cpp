// SPDX-License-Identifier: Apache-2.0
#include "capqa/backend.hpp"

#include <chrono>
#include <condition_variable>
#include <fstream>
#include <random>
#include <thread>

#include "httplib.h"

#include "capqa/errors.hpp"
#include "internal/util.hpp"

namespace capqa {

namespace {

using detail::json;

const char* role_name(Role role) { return role == Role::kUser ? "user" : "assistant"; }

}  // namespace

// ---------------------------------------------------------------------------
// Clocks

std::int64_t SystemClock::now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

void SystemClock::sleep_ms(std::int64_t ms) {
  if (ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
}

SystemClock& SystemClock::instance() {
  static SystemClock clock;
  return clock;
}

std::int64_t ManualClock::now_ms() {
  std::lock_guard lock(mu_);
  return now_;
}

void ManualClock::sleep_ms(std::int64_t ms) {
  std::lock_guard lock(mu_);
  now_ += std::max<std::int64_t>(ms, 0);
}

void ManualClock::advance_ms(std::int64_t ms) {
  std::lock_guard lock(mu_);
  now_ += ms;
}

// ---------------------------------------------------------------------------
// Token estimation and digests

std::int64_t estimate_tokens(std::string_view text) {
  return static_cast<std::int64_t>((text.size() + 3) / 4);
}

std::string request_digest(const std::string& backend_id, const CompletionRequest& request) {
  json turns = json::array();
  for (const auto& turn : request.turns) {
    turns.push_back({{"content", turn.content}, {"role", role_name(turn.role)}});
  }
  const json canonical{
      {"backend_id", backend_id},
      {"max_output_tokens",
       request.max_output_tokens ? json(*request.max_output_tokens) : json(nullptr)},
      {"model", request.model},
      {"temperature", request.temperature},
      {"turns", std::move(turns)},
  };
  return detail::sha256_hex(canonical.dump());
}

// ---------------------------------------------------------------------------
// Rate limiting

RateLimiter::RateLimiter(const RatePolicy& policy, Clock& clock) : policy_(policy), clock_(clock) {
  if (policy.requests_per_minute < 1 || policy.tokens_per_minute < 1 || policy.max_in_flight < 1) {
    throw ValidationError("rate policy budgets must be positive");
  }
}

void RateLimiter::acquire(std::int64_t estimated_tokens) {
  if (estimated_tokens > policy_.tokens_per_minute) {
    throw ValidationError("request of " + std::to_string(estimated_tokens) +
                          " estimated tokens exceeds tokens_per_minute=" +
                          std::to_string(policy_.tokens_per_minute));
  }
  for (;;) {
    std::int64_t wait_ms = 0;
    {
      std::lock_guard lock(mu_);
      const std::int64_t now = clock_.now_ms();
      while (!window_.empty() && window_.front().at_ms <= now - 60'000) {
        window_tokens_ -= window_.front().tokens;
        window_.pop_front();
      }
      const bool requests_ok =
          static_cast<int>(window_.size()) < policy_.requests_per_minute;
      const bool tokens_ok = window_tokens_ + estimated_tokens <= policy_.tokens_per_minute;
      if (requests_ok && tokens_ok) {
        window_.push_back({now, estimated_tokens});
        window_tokens_ += estimated_tokens;
        return;
      }
      wait_ms = window_.front().at_ms + 60'000 - now;
      if (wait_ms < 1) wait_ms = 1;
    }
    clock_.sleep_ms(wait_ms);
  }
}

// ---------------------------------------------------------------------------
// Backends

MockRulebook MockRulebook::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open rulebook file: " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw ValidationError("rulebook is not a JSON object: " + path.string());
  }
  MockRulebook book;
  for (const auto& rule : doc.value("rules", json::array())) {
    book.rules.push_back({rule.at("contains").get<std::string>(),
                          rule.at("response").get<std::string>()});
  }
  book.default_response = doc.value("default", std::string("A"));
  return book;
}

const std::string& MockRulebook::respond(const CompletionRequest& request) const {
  // Match against the content of the last user turn.
  for (auto it = request.turns.rbegin(); it != request.turns.rend(); ++it) {
    if (it->role != Role::kUser) continue;
    for (const auto& rule : rules) {
      if (it->content.find(rule.contains) != std::string::npos) return rule.response;
    }
    break;
  }
  return default_response;
}

MockBackend::MockBackend(MockRulebook rulebook) : rulebook_(std::move(rulebook)) {}

BackendReply MockBackend::complete(const CompletionRequest& request) {
  const int current = in_flight_.fetch_add(1) + 1;
  int observed = max_in_flight_.load();
  while (current > observed && !max_in_flight_.compare_exchange_weak(observed, current)) {
  }
  if (entry_delay_ms_ > 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(entry_delay_ms_));
  }
  calls_.fetch_add(1);
  BackendReply reply{rulebook_.respond(request), std::nullopt, std::nullopt};
  in_flight_.fetch_sub(1);
  return reply;
}

namespace {
std::atomic<std::int64_t> g_http_backend_instances{0};
}  // namespace

HttpChatBackend::HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) throw ValidationError("live backend requires a base_url");
  g_http_backend_instances.fetch_add(1);
}

std::int64_t HttpChatBackend::instances_created() { return g_http_backend_instances.load(); }

BackendReply HttpChatBackend::complete(const CompletionRequest& request) {
  json messages = json::array();
  for (const auto& turn : request.turns) {
    messages.push_back({{"role", role_name(turn.role)}, {"content", turn.content}});
  }
  json body{{"model", request.model},
            {"messages", std::move(messages)},
            {"temperature", request.temperature}};
  if (request.max_output_tokens) body["max_tokens"] = *request.max_output_tokens;

  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout_s, 0);
  client.set_read_timeout(config_.timeout_s, 0);
  if (!config_.api_key.empty()) client.set_bearer_token_auth(config_.api_key);

  auto res = client.Post(config_.chat_path, body.dump(), "application/json");
  if (!res) {
    throw TransportError("chat backend unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw TransportError("chat backend answered status " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw TransportError("chat backend rejected the request (status " +
                             std::to_string(res->status) + "): " + res->body,
                         /*retryable=*/false);
  }

  json reply = json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("choices") || !reply["choices"].is_array() ||
      reply["choices"].empty() || !reply["choices"][0].contains("message") ||
      !reply["choices"][0]["message"].contains("content")) {
    throw SchemaError("chat backend reply lacks choices[0].message.content");
  }

  BackendReply out;
  out.text = reply["choices"][0]["message"]["content"].get<std::string>();
  if (reply.contains("usage")) {
    const auto& usage = reply["usage"];
    if (usage.contains("prompt_tokens")) {
      out.prompt_tokens = usage["prompt_tokens"].get<std::int64_t>();
    }
    if (usage.contains("completion_tokens")) {
      out.completion_tokens = usage["completion_tokens"].get<std::int64_t>();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cache

CompletionCache::CompletionCache(std::filesystem::path file) : file_(std::move(file)) {
  if (std::filesystem::exists(file_)) {
    detail::read_jsonl(file_, "capqa/cache", [&](std::size_t line_no, const json& rec) {
      CompletionRecord record;
      record.request_digest = rec.at("digest").get<std::string>();
      record.response_text = rec.at("response_text").get<std::string>();
      record.prompt_tokens = rec.value("prompt_tokens", std::int64_t{0});
      record.completion_tokens = rec.value("completion_tokens", std::int64_t{0});
      record.latency_ms = rec.value("latency_ms", std::int64_t{0});
      record.backend_id = rec.value("backend_id", std::string());
      record.timestamp_ms = rec.value("timestamp_ms", std::int64_t{0});
      record.attempts = rec.value("attempts", 1);
      by_digest_[record.request_digest] = std::move(record);
      (void)line_no;
    });
  } else {
    if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path());
    std::ofstream out(file_, std::ios::trunc);
    if (!out) throw Error("cannot create cache file: " + file_.string());
    out << json{{"format", "capqa/cache"}, {"version", 1}}.dump() << '\n';
  }
}

std::optional<CompletionRecord> CompletionCache::find(const std::string& digest) const {
  std::shared_lock lock(mu_);
  const auto it = by_digest_.find(digest);
  if (it == by_digest_.end()) return std::nullopt;
  return it->second;
}

void CompletionCache::append(const CompletionRequest& request, const CompletionRecord& record) {
  std::unique_lock lock(mu_);
  json turns = json::array();
  for (const auto& turn : request.turns) {
    turns.push_back({{"role", role_name(turn.role)}, {"content", turn.content}});
  }
  json entry{
      {"digest", record.request_digest},
      {"request",
       {{"model", request.model},
        {"temperature", request.temperature},
        {"max_output_tokens",
         request.max_output_tokens ? json(*request.max_output_tokens) : json(nullptr)},
        {"turns", std::move(turns)}}},
      {"response_text", record.response_text},
      {"prompt_tokens", record.prompt_tokens},
      {"completion_tokens", record.completion_tokens},
      {"latency_ms", record.latency_ms},
      {"backend_id", record.backend_id},
      {"timestamp_ms", record.timestamp_ms},
      {"attempts", record.attempts},
  };
  std::ofstream out(file_, std::ios::app);
  if (!out) throw Error("cannot append to cache file: " + file_.string());
  out << entry.dump() << '\n';
  out.flush();
  if (!out) throw Error("cache append failed: " + file_.string());
  by_digest_[record.request_digest] = record;
}

std::size_t CompletionCache::size() const {
  std::shared_lock lock(mu_);
  return by_digest_.size();
}

// ---------------------------------------------------------------------------
// Executor

/// Counting semaphore bounding concurrent transport calls.
class Semaphore {
 public:
  explicit Semaphore(int count) : count_(count) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return count_ > 0; });
    --count_;
  }

  void release() {
    {
      std::lock_guard lock(mu_);
      ++count_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int count_;
};

namespace {

struct SemaphoreGuard {
  explicit SemaphoreGuard(Semaphore& s) : sem(s) { sem.acquire(); }
  ~SemaphoreGuard() { sem.release(); }
  Semaphore& sem;
};

}  // namespace

const char* backend_mode_name(BackendMode mode) {
  switch (mode) {
    case BackendMode::kLive: return "live";
    case BackendMode::kMock: return "mock";
    case BackendMode::kReplayOnly: return "replay";
  }
  return "unknown";
}

Executor::Executor(ExecutorConfig config, std::shared_ptr<CompletionCache> cache,
                   std::unique_ptr<CompletionBackend> backend, Clock* clock)
    : config_(std::move(config)),
      cache_(std::move(cache)),
      backend_(std::move(backend)),
      clock_(clock ? clock : &SystemClock::instance()),
      limiter_(config_.rate, *clock_),
      token_counter_(estimate_tokens),
      in_flight_(std::make_unique<Semaphore>(config_.rate.max_in_flight)) {
  if (!cache_) throw ValidationError("executor requires a completion cache");
  if (config_.mode != BackendMode::kReplayOnly && !backend_) {
    throw ValidationError("executor requires a backend unless replay-only");
  }
  jitter_state_ = config_.jitter_seed.value_or(std::random_device{}());
  if (jitter_state_ == 0) jitter_state_ = 0x9e3779b97f4a7c15ull;
}

Executor::~Executor() = default;

ExecutorStats Executor::stats() const {
  std::lock_guard lock(stats_mu_);
  return stats_;
}

CompletionRequest Executor::make_request(std::vector<ChatTurn> turns,
                                         std::optional<double> temperature_override) const {
  CompletionRequest request;
  request.model = config_.model;
  request.turns = std::move(turns);
  request.temperature = temperature_override.value_or(config_.temperature);
  request.max_output_tokens = config_.max_output_tokens;
  return request;
}

CompletionRecord Executor::complete(const CompletionRequest& request) {
  if (request.turns.empty() || request.turns.front().role != Role::kUser) {
    throw ValidationError("completion request must start with a user turn");
  }
  const std::string digest = request_digest(config_.backend_id, request);

  if (auto hit = cache_->find(digest)) {
    std::lock_guard lock(stats_mu_);
    ++stats_.cache_hits;
    return *hit;
  }
  if (config_.mode == BackendMode::kReplayOnly) {
    throw CacheMissError("replay-only run has no cached record for digest " + digest);
  }

  std::int64_t estimated = 0;
  for (const auto& turn : request.turns) estimated += token_counter_(turn.content);
  limiter_.acquire(estimated);

  const CompletionRecord record = call_backend(request, digest);
  cache_->append(request, record);
  return record;
}

CompletionRecord Executor::call_backend(const CompletionRequest& request,
                                        const std::string& digest) {
  const RetryPolicy& retry = config_.rate.retry;
  for (int attempt = 1; attempt <= retry.max_attempts; ++attempt) {
    try {
      SemaphoreGuard guard(*in_flight_);
      const std::int64_t t0 = clock_->now_ms();
      BackendReply reply = backend_->complete(request);
      const std::int64_t t1 = clock_->now_ms();

      CompletionRecord record;
      record.request_digest = digest;
      record.response_text = std::move(reply.text);
      std::int64_t prompt_estimate = 0;
      for (const auto& turn : request.turns) prompt_estimate += token_counter_(turn.content);
      record.prompt_tokens = reply.prompt_tokens.value_or(prompt_estimate);
      record.completion_tokens =
          reply.completion_tokens.value_or(token_counter_(record.response_text));
      record.backend_id = config_.backend_id;
      record.attempts = attempt;
      // Mock exchanges synthesize zero latency and timestamp so record
      // multisets are run-independent.
      record.latency_ms = config_.mode == BackendMode::kMock ? 0 : t1 - t0;
      record.timestamp_ms = config_.mode == BackendMode::kMock ? 0 : t1;

      {
        std::lock_guard lock(stats_mu_);
        ++stats_.backend_calls;
        stats_.total_attempts += attempt;
      }
      return record;
    } catch (const TransportError& e) {
      if (!e.retryable() || attempt == retry.max_attempts) {
        throw TransportError(std::string(e.what()) + " (after " + std::to_string(attempt) +
                                 " attempt(s))",
                             false);
      }
      std::int64_t delay = std::min<std::int64_t>(
          retry.max_delay_ms, static_cast<std::int64_t>(retry.base_delay_ms) << (attempt - 1));
      {
        std::lock_guard lock(jitter_mu_);
        jitter_state_ ^= jitter_state_ >> 12;
        jitter_state_ ^= jitter_state_ << 25;
        jitter_state_ ^= jitter_state_ >> 27;
        const double unit =
            static_cast<double>(jitter_state_ * 0x2545f4914f6cdd1dull >> 11) / 9007199254740992.0;
        delay = static_cast<std::int64_t>(delay * (1.0 + retry.jitter_fraction * (2.0 * unit - 1.0)));
      }
      clock_->sleep_ms(std::max<std::int64_t>(delay, 0));
    }
  }
  throw TransportError("unreachable retry state", false);
}

std::vector<CompletionRecord> Executor::execute_plan(const PromptPlan& plan) {
  if (plan.rounds.empty()) throw ValidationError("prompt plan has no rounds");

  std::vector<CompletionRecord> records;
  std::vector<ChatTurn> conversation;
  std::string previous_output;

  for (std::size_t i = 0; i < plan.rounds.size(); ++i) {
    const RoundSpec& round = plan.rounds[i];
    std::string user_text = round.user_text;

    if (round.carry_slot) {
      if (i == 0) throw ValidationError("first round cannot carry a previous output");
      if (detail::trim(previous_output).empty()) {
        throw Error("substitution failure: round " + std::to_string(i) +
                    " received an empty output from the previous round");
      }
      const std::string slot = "${" + *round.carry_slot + "}";
      const std::size_t at = user_text.find(slot);
      if (at == std::string::npos) {
        throw TemplateError("round template lacks the carry slot " + slot);
      }
      user_text.replace(at, slot.size(), previous_output);
    }

    std::vector<ChatTurn> turns;
    if (round.continues_conversation && i > 0) turns = conversation;
    turns.push_back({Role::kUser, std::move(user_text)});

    const CompletionRecord record = complete(make_request(turns, round.temperature_override));
    previous_output = record.response_text;
    conversation = std::move(turns);
    conversation.push_back({Role::kAssistant, previous_output});
    records.push_back(record);
  }
  return records;
}

}  // namespace capqa
