#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "skillmatch/common.hpp"

namespace skillmatch {

// ---------------------------------------------------------------------------
// Errors

class ProviderError : public Error {
 public:
  using Error::Error;
};

// Network failure, timeout, rate limit or 5xx. Retried with backoff.
class TransportError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

// The provider refused the request on content policy grounds. Never retried.
class ContentFilteredError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class MalformedReplyError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

// ---------------------------------------------------------------------------
// Chat

enum class Role { kSystem, kUser, kAssistant };

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view text);

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 1024;

  // Throws ProviderError when the request breaks the message invariants.
  void validate() const;

  bool operator==(const ChatRequest&) const = default;
};

// Chat-completions wire shape: {model, messages:[{role, content}], temperature, max_tokens}.
nlohmann::json to_json(const ChatRequest& request);
ChatRequest chat_request_from_json(const nlohmann::json& json);

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  // Returns the assistant message content. Must be safe to call concurrently.
  virtual std::string complete_chat(const ChatRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Embeddings

enum class EmbedKind { kQuery, kPassage };

std::string_view to_string(EmbedKind kind);

struct EmbedRequest {
  std::string model_id;
  std::string text;
  EmbedKind kind = EmbedKind::kPassage;
  std::size_t dimension = 0;
};

nlohmann::json to_json(const EmbedRequest& request);

// Unit-norm dense vector. Construction normalizes; zero or non-finite input is
// rejected.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  static EmbeddingVector normalized(std::vector<double> raw);
  // Adopts values that are already unit norm (within 1e-6) without
  // rescaling, so cached vectors round-trip bit for bit.
  static EmbeddingVector from_unit(std::vector<double> values);

  std::span<const double> values() const noexcept { return values_; }
  std::size_t dimension() const noexcept { return values_.size(); }
  bool unit_norm() const noexcept { return !values_.empty(); }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbeddingVector embed_text(std::string_view text, EmbedKind kind) = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string model_id() const = 0;
};

// ---------------------------------------------------------------------------
// Cache

// Canonical serialization: JSON with sorted keys and content bytes preserved.
std::string canonical_request(const ChatRequest& request);
std::string canonical_request(const EmbedRequest& request);

// SHA-256 hex of the canonical serialization.
std::string cache_key(const ChatRequest& request);
std::string cache_key(const EmbedRequest& request);

struct CacheStats {
  std::size_t entries = 0;
  std::uintmax_t bytes = 0;
};

// One JSON file per key at {dir}/{key[0:2]}/{key}.json holding
// {key, response, created_at}. Writes are atomic renames.
class ResponseCache {
 public:
  explicit ResponseCache(std::string directory);

  const std::string& directory() const noexcept { return directory_; }
  std::string path_for(std::string_view key) const;

  std::optional<std::string> get(std::string_view key) const;
  void put(std::string_view key, std::string_view response) const;

  CacheStats stats() const;
  std::size_t clear() const;

 private:
  std::string directory_;
};

// Serializes work per key so identical concurrent requests collapse into one.
class KeyedMutex {
 public:
  std::shared_ptr<std::mutex> lock_for(const std::string& key);

 private:
  std::mutex mutex_;
  std::unordered_map<std::string, std::shared_ptr<std::mutex>> locks_;
};

class CachingChatProvider final : public ChatProvider {
 public:
  CachingChatProvider(std::shared_ptr<ChatProvider> inner, std::shared_ptr<ResponseCache> cache);

  std::string complete_chat(const ChatRequest& request) override;

  std::size_t hits() const noexcept { return hits_; }
  std::size_t misses() const noexcept { return misses_; }

 private:
  std::shared_ptr<ChatProvider> inner_;
  std::shared_ptr<ResponseCache> cache_;
  KeyedMutex locks_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

class CachingEmbeddingProvider final : public EmbeddingProvider {
 public:
  CachingEmbeddingProvider(std::shared_ptr<EmbeddingProvider> inner, std::shared_ptr<ResponseCache> cache);

  EmbeddingVector embed_text(std::string_view text, EmbedKind kind) override;
  std::size_t dimension() const override { return inner_->dimension(); }
  std::string model_id() const override { return inner_->model_id(); }

  std::size_t hits() const noexcept { return hits_; }
  std::size_t misses() const noexcept { return misses_; }

 private:
  std::shared_ptr<EmbeddingProvider> inner_;
  std::shared_ptr<ResponseCache> cache_;
  KeyedMutex locks_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

// ---------------------------------------------------------------------------
// Offline providers

// Seeded projection of token hashes: every lowercase alphanumeric token maps
// to a fixed pseudo-random direction, the text vector is their sum, then
// normalized. The kind argument does not change the vector.
class MockEmbedder final : public EmbeddingProvider {
 public:
  explicit MockEmbedder(std::size_t dimension, std::uint64_t seed = 0);

  EmbeddingVector embed_text(std::string_view text, EmbedKind kind) override;
  std::size_t dimension() const override { return dimension_; }
  std::string model_id() const override;

  std::size_t calls() const noexcept { return calls_; }

  // Tokens the embedder hashes; exposed so tests can recompute vectors.
  static std::vector<std::string> tokenize(std::string_view text);
  // Raw (unnormalized) direction assigned to one token.
  std::vector<double> token_direction(std::string_view token) const;

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
  std::atomic<std::size_t> calls_{0};
};

// Table-driven chat mock. A rule matches when its `contains` text occurs in
// any message of the request; rules are tried in order. A rule either raises
// a content-filter rejection or returns its responses in sequence (the last
// one repeats). Unmatched requests go to the fallback, or fail.
class FixtureChatProvider final : public ChatProvider {
 public:
  struct Rule {
    std::string contains;
    std::vector<std::string> responses;
    bool content_filter = false;
  };

  explicit FixtureChatProvider(std::vector<Rule> rules, std::shared_ptr<ChatProvider> fallback = nullptr);

  // {"rules": [{"contains": ..., "responses": [...] | "response": ..., "content_filter": bool}]}
  static std::vector<Rule> load_rules(const std::string& path);

  std::string complete_chat(const ChatRequest& request) override;

  std::size_t calls() const noexcept { return calls_; }

 private:
  std::vector<Rule> rules_;
  std::vector<std::size_t> served_;
  std::shared_ptr<ChatProvider> fallback_;
  std::mutex mutex_;
  std::atomic<std::size_t> calls_{0};
};

// Deterministic stand-in for a chat model, good enough to drive every
// pipeline stage offline. Recognizes the generation prompt (answers with a
// numbered list of synthetic sentences) and both reranking prompts (ranks the
// listed candidates by token overlap with the extract and answers as a
// numbered list or a `rank_skills` code block).
class OfflineChatModel final : public ChatProvider {
 public:
  explicit OfflineChatModel(std::uint64_t seed = 0);

  std::string complete_chat(const ChatRequest& request) override;

  std::size_t calls() const noexcept { return calls_; }

 private:
  std::string generate_examples(std::string_view prompt) const;
  std::string rank_candidates(std::string_view prompt, bool as_code) const;

  std::uint64_t seed_;
  std::atomic<std::size_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Remote providers

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};
};

// Calls fn until it succeeds, retrying only TransportError with bounded
// exponential backoff. The final TransportError is rethrown.
std::string with_retry(const RetryPolicy& policy, const std::function<std::string()>& fn);

struct HttpOptions {
  std::string endpoint;  // full URL, e.g. https://api.example.com/v1/chat/completions
  std::string api_key;   // sent as a bearer token when non-empty
  std::chrono::seconds timeout{120};
  std::size_t max_in_flight = 4;
  RetryPolicy retry;
};

struct Endpoint {
  std::string scheme_host_port;  // "https://host:443"
  std::string path;              // "/v1/chat/completions"
};

Endpoint parse_endpoint(std::string_view url);

class InFlightLimiter;

class HttpChatProvider final : public ChatProvider {
 public:
  explicit HttpChatProvider(HttpOptions options);
  ~HttpChatProvider() override;

  std::string complete_chat(const ChatRequest& request) override;

 private:
  std::string post_once(const std::string& body);

  HttpOptions options_;
  Endpoint endpoint_;
  std::unique_ptr<InFlightLimiter> limiter_;
};

// Interprets a chat-completions reply body. Throws ContentFilteredError when
// the provider reports a content-filter stop, MalformedReplyError otherwise.
std::string parse_chat_reply(std::string_view body);

struct HttpEmbeddingOptions {
  HttpOptions http;
  std::string model_id;
  std::size_t dimension = 1024;
  // Prepend "query: " / "passage: " as the e5 model family expects.
  bool kind_prefixes = true;
};

class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(HttpEmbeddingOptions options);
  ~HttpEmbeddingProvider() override;

  EmbeddingVector embed_text(std::string_view text, EmbedKind kind) override;
  std::size_t dimension() const override { return options_.dimension; }
  std::string model_id() const override { return options_.model_id; }

 private:
  HttpEmbeddingOptions options_;
  Endpoint endpoint_;
  std::unique_ptr<InFlightLimiter> limiter_;
};

// Parses {"data":[{"embedding":[...]}]} and checks the dimension.
EmbeddingVector parse_embedding_reply(std::string_view body, std::size_t expected_dimension);

}  // namespace skillmatch
