#include <semaphore>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "skillmatch/providers.hpp"

namespace skillmatch {

using nlohmann::json;

class InFlightLimiter {
 public:
  explicit InFlightLimiter(std::size_t limit)
      : semaphore_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(limit, 1))) {}

  class Permit {
   public:
    explicit Permit(InFlightLimiter& owner) : owner_(owner) { owner_.semaphore_.acquire(); }
    ~Permit() { owner_.semaphore_.release(); }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

   private:
    InFlightLimiter& owner_;
  };

 private:
  std::counting_semaphore<> semaphore_;
};

namespace {

bool mentions_content_filter(const json& doc) {
  if (!doc.is_object()) return false;
  if (const auto it = doc.find("error"); it != doc.end() && it->is_object()) {
    const std::string code = it->value("code", "");
    const std::string type = it->value("type", "");
    return code == "content_filter" || code == "content_policy_violation" || type == "content_filter";
  }
  return false;
}

std::string post_json(const Endpoint& endpoint, const HttpOptions& options, const std::string& body) {
  httplib::Client client(endpoint.scheme_host_port);
  client.set_connection_timeout(options.timeout);
  client.set_read_timeout(options.timeout);
  client.set_write_timeout(options.timeout);
  httplib::Headers headers;
  if (!options.api_key.empty()) headers.emplace("Authorization", "Bearer " + options.api_key);
  auto result = client.Post(endpoint.path, headers, body, "application/json");
  if (!result) {
    throw TransportError(fmt::format("POST {}{} failed: {}", endpoint.scheme_host_port, endpoint.path,
                                     httplib::to_string(result.error())));
  }
  const int status = result->status;
  if (status == 200) return result->body;
  if (status == 408 || status == 409 || status == 429 || status >= 500) {
    throw TransportError(fmt::format("provider returned HTTP {}", status));
  }
  const json error_doc = json::parse(result->body, nullptr, false);
  if (mentions_content_filter(error_doc)) {
    throw ContentFilteredError(fmt::format("provider rejected the request (HTTP {}, content filter)", status));
  }
  throw ProviderError(fmt::format("provider returned HTTP {}: {}", status, result->body.substr(0, 300)));
}

}  // namespace

std::string parse_chat_reply(std::string_view body) {
  const json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded()) throw MalformedReplyError("chat reply is not valid JSON");
  if (mentions_content_filter(doc)) throw ContentFilteredError("chat reply reports a content filter");
  const auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty()) {
    throw MalformedReplyError("chat reply has no choices");
  }
  const json& choice = choices->front();
  if (choice.value("finish_reason", "") == "content_filter") {
    throw ContentFilteredError("chat completion stopped by the content filter");
  }
  const auto message = choice.find("message");
  if (message == choice.end() || !message->is_object()) throw MalformedReplyError("chat reply has no message");
  const auto content = message->find("content");
  if (content == message->end() || !content->is_string()) {
    throw MalformedReplyError("chat reply message has no string content");
  }
  return content->get<std::string>();
}

EmbeddingVector parse_embedding_reply(std::string_view body, std::size_t expected_dimension) {
  const json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded()) throw MalformedReplyError("embedding reply is not valid JSON");
  std::vector<double> values;
  try {
    values = doc.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw MalformedReplyError(fmt::format("embedding reply lacks data[0].embedding: {}", e.what()));
  }
  if (values.size() != expected_dimension) {
    throw ProviderError(fmt::format("embedding dimension {} != configured {}", values.size(), expected_dimension));
  }
  return EmbeddingVector::normalized(std::move(values));
}

HttpChatProvider::HttpChatProvider(HttpOptions options)
    : options_(std::move(options)),
      endpoint_(parse_endpoint(options_.endpoint)),
      limiter_(std::make_unique<InFlightLimiter>(options_.max_in_flight)) {}

HttpChatProvider::~HttpChatProvider() = default;

std::string HttpChatProvider::post_once(const std::string& body) {
  InFlightLimiter::Permit permit(*limiter_);
  return parse_chat_reply(post_json(endpoint_, options_, body));
}

std::string HttpChatProvider::complete_chat(const ChatRequest& request) {
  request.validate();
  const std::string body = to_json(request).dump(-1, ' ', false, json::error_handler_t::replace);
  return with_retry(options_.retry, [&] { return post_once(body); });
}

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEmbeddingOptions options)
    : options_(std::move(options)),
      endpoint_(parse_endpoint(options_.http.endpoint)),
      limiter_(std::make_unique<InFlightLimiter>(options_.http.max_in_flight)) {
  if (options_.dimension == 0) throw ConfigError("embedding dimension must be positive");
}

HttpEmbeddingProvider::~HttpEmbeddingProvider() = default;

EmbeddingVector HttpEmbeddingProvider::embed_text(std::string_view text, EmbedKind kind) {
  if (util::trim(text).empty()) throw ProviderError("cannot embed empty text");
  std::string input;
  if (options_.kind_prefixes) input = kind == EmbedKind::kQuery ? "query: " : "passage: ";
  input += text;
  const json request = {{"model", options_.model_id}, {"input", json::array({input})}};
  const std::string body = request.dump(-1, ' ', false, json::error_handler_t::replace);
  const std::string reply = with_retry(options_.http.retry, [&] {
    InFlightLimiter::Permit permit(*limiter_);
    return post_json(endpoint_, options_.http, body);
  });
  return parse_embedding_reply(reply, options_.dimension);
}

}  // namespace skillmatch
