#include "skillmatch/providers.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace skillmatch {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

std::optional<Role> parse_role(std::string_view text) {
  if (text == "system") return Role::kSystem;
  if (text == "user") return Role::kUser;
  if (text == "assistant") return Role::kAssistant;
  return std::nullopt;
}

std::string_view to_string(EmbedKind kind) {
  return kind == EmbedKind::kQuery ? "query" : "passage";
}

void ChatRequest::validate() const {
  if (messages.empty()) throw ProviderError("chat request has no messages");
  if (messages.front().role != Role::kSystem) throw ProviderError("first chat message must have role system");
  for (const auto& message : messages) {
    if (message.content.empty()) throw ProviderError("chat message content must be non-empty");
  }
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ProviderError("temperature must be >= 0");
  if (max_tokens <= 0) throw ProviderError("max_tokens must be positive");
}

json to_json(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& message : request.messages) {
    messages.push_back({{"role", to_string(message.role)}, {"content", message.content}});
  }
  return {{"model", request.model_id},
          {"messages", std::move(messages)},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens}};
}

ChatRequest chat_request_from_json(const json& doc) {
  ChatRequest request;
  try {
    request.model_id = doc.at("model").get<std::string>();
    for (const auto& message : doc.at("messages")) {
      const auto role = parse_role(message.at("role").get<std::string>());
      if (!role) throw ProviderError("unknown chat role");
      request.messages.push_back({*role, message.at("content").get<std::string>()});
    }
    request.temperature = doc.at("temperature").get<double>();
    request.max_tokens = doc.at("max_tokens").get<int>();
  } catch (const json::exception& e) {
    throw ProviderError(fmt::format("invalid chat request json: {}", e.what()));
  }
  return request;
}

json to_json(const EmbedRequest& request) {
  return {{"model", request.model_id},
          {"input", request.text},
          {"kind", to_string(request.kind)},
          {"dimension", request.dimension}};
}

EmbeddingVector EmbeddingVector::normalized(std::vector<double> raw) {
  double sum = 0.0;
  for (double v : raw) {
    if (!std::isfinite(v)) throw ProviderError("embedding contains a non-finite value");
    sum += v * v;
  }
  if (raw.empty() || sum == 0.0) throw ProviderError("cannot normalize an empty or zero embedding");
  const double norm = std::sqrt(sum);
  for (double& v : raw) v /= norm;
  EmbeddingVector out;
  out.values_ = std::move(raw);
  return out;
}

EmbeddingVector EmbeddingVector::from_unit(std::vector<double> values) {
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw ProviderError("embedding contains a non-finite value");
    sum += v * v;
  }
  if (values.empty() || std::abs(std::sqrt(sum) - 1.0) > 1e-6) {
    throw ProviderError("embedding is not unit norm");
  }
  EmbeddingVector out;
  out.values_ = std::move(values);
  return out;
}

namespace {

std::string dump_canonical(const json& doc) {
  // nlohmann::json objects keep keys sorted, so dump() is canonical.
  return doc.dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace

std::string canonical_request(const ChatRequest& request) {
  json doc = to_json(request);
  doc["type"] = "chat";
  return dump_canonical(doc);
}

std::string canonical_request(const EmbedRequest& request) {
  json doc = to_json(request);
  doc["type"] = "embedding";
  return dump_canonical(doc);
}

std::string cache_key(const ChatRequest& request) { return util::sha256_hex(canonical_request(request)); }

std::string cache_key(const EmbedRequest& request) { return util::sha256_hex(canonical_request(request)); }

// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(std::string directory) : directory_(std::move(directory)) {
  std::error_code ec;
  fs::create_directories(directory_, ec);
  if (ec) throw IoError(fmt::format("cannot create cache directory '{}': {}", directory_, ec.message()));
}

std::string ResponseCache::path_for(std::string_view key) const {
  if (key.size() < 3) throw Error("cache key too short");
  return (fs::path(directory_) / std::string(key.substr(0, 2)) / (std::string(key) + ".json")).string();
}

std::optional<std::string> ResponseCache::get(std::string_view key) const {
  const std::string path = path_for(key);
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  try {
    const json entry = json::parse(util::read_file(path));
    if (entry.at("key").get<std::string>() != key) {
      spdlog::warn("cache entry {} does not match its key; ignoring", path);
      return std::nullopt;
    }
    return entry.at("response").get<std::string>();
  } catch (const json::exception& e) {
    spdlog::warn("unreadable cache entry {}: {}", path, e.what());
    return std::nullopt;
  }
}

void ResponseCache::put(std::string_view key, std::string_view response) const {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);
  const json entry = {{"key", key}, {"response", response}, {"created_at", stamp}};
  util::write_file_atomic(path_for(key), entry.dump(2, ' ', false, json::error_handler_t::replace));
}

CacheStats ResponseCache::stats() const {
  CacheStats stats;
  std::error_code ec;
  for (const auto& entry : fs::recursive_directory_iterator(directory_, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      ++stats.entries;
      stats.bytes += entry.file_size();
    }
  }
  return stats;
}

std::size_t ResponseCache::clear() const {
  std::size_t removed = 0;
  std::error_code ec;
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(directory_, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  for (const auto& file : files) {
    if (fs::remove(file, ec)) ++removed;
  }
  return removed;
}

std::shared_ptr<std::mutex> KeyedMutex::lock_for(const std::string& key) {
  std::lock_guard guard(mutex_);
  auto& slot = locks_[key];
  if (!slot) slot = std::make_shared<std::mutex>();
  return slot;
}

CachingChatProvider::CachingChatProvider(std::shared_ptr<ChatProvider> inner,
                                         std::shared_ptr<ResponseCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {
  if (!inner_ || !cache_) throw Error("CachingChatProvider needs a provider and a cache");
}

std::string CachingChatProvider::complete_chat(const ChatRequest& request) {
  const std::string key = cache_key(request);
  const auto key_lock = locks_.lock_for(key);
  std::lock_guard guard(*key_lock);
  if (auto cached = cache_->get(key)) {
    ++hits_;
    return *std::move(cached);
  }
  ++misses_;
  std::string response = inner_->complete_chat(request);
  cache_->put(key, response);
  return response;
}

CachingEmbeddingProvider::CachingEmbeddingProvider(std::shared_ptr<EmbeddingProvider> inner,
                                                   std::shared_ptr<ResponseCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {
  if (!inner_ || !cache_) throw Error("CachingEmbeddingProvider needs a provider and a cache");
}

EmbeddingVector CachingEmbeddingProvider::embed_text(std::string_view text, EmbedKind kind) {
  const EmbedRequest request{inner_->model_id(), std::string(text), kind, inner_->dimension()};
  const std::string key = cache_key(request);
  const auto key_lock = locks_.lock_for(key);
  std::lock_guard guard(*key_lock);
  if (auto cached = cache_->get(key)) {
    try {
      auto values = json::parse(*cached).get<std::vector<double>>();
      if (values.size() == inner_->dimension()) {
        ++hits_;
        return EmbeddingVector::from_unit(std::move(values));
      }
    } catch (const std::exception& e) {
      spdlog::warn("discarding bad cached embedding {}: {}", key, e.what());
    }
  }
  ++misses_;
  EmbeddingVector vector = inner_->embed_text(text, kind);
  if (vector.dimension() != inner_->dimension()) {
    throw ProviderError(fmt::format("embedding dimension {} != configured {}", vector.dimension(),
                                    inner_->dimension()));
  }
  const json values(std::vector<double>(vector.values().begin(), vector.values().end()));
  cache_->put(key, values.dump());
  return vector;
}

// ---------------------------------------------------------------------------

std::string with_retry(const RetryPolicy& policy, const std::function<std::string()>& fn) {
  auto backoff = policy.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const TransportError& e) {
      if (attempt >= policy.max_attempts) throw;
      spdlog::warn("transport error (attempt {}/{}): {}; retrying in {} ms", attempt,
                   policy.max_attempts, e.what(), backoff.count());
      std::this_thread::sleep_for(backoff);
      const auto next = std::chrono::milliseconds(
          static_cast<std::chrono::milliseconds::rep>(static_cast<double>(backoff.count()) * policy.multiplier));
      backoff = std::min(next, policy.max_backoff);
    }
  }
}

Endpoint parse_endpoint(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw ConfigError(fmt::format("endpoint '{}' lacks a scheme", url));
  const std::string_view scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError(fmt::format("endpoint '{}' must use http or https", url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint endpoint;
  endpoint.scheme_host_port = std::string(url.substr(0, path_start));
  endpoint.path = path_start == std::string_view::npos ? "/" : std::string(url.substr(path_start));
  if (endpoint.scheme_host_port.size() <= scheme_end + 3) {
    throw ConfigError(fmt::format("endpoint '{}' lacks a host", url));
  }
  return endpoint;
}

}  // namespace skillmatch
