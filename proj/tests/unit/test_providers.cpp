#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "skillmatch/providers.hpp"
#include "test_support.hpp"

using namespace skillmatch;

namespace {

ChatRequest sample_request(std::string user = "hello") {
  ChatRequest request;
  request.model_id = "m";
  request.messages = {{Role::kSystem, "You are terse."}, {Role::kUser, std::move(user)}};
  return request;
}

class CountingChat final : public ChatProvider {
 public:
  std::string complete_chat(const ChatRequest& request) override {
    ++calls;
    return "reply to " + request.messages.back().content;
  }
  std::atomic<int> calls{0};
};

}  // namespace

TEST_CASE("embedding vectors are unit norm") {
  const auto v = EmbeddingVector::normalized({3.0, 4.0});
  CHECK(v.values()[0] == doctest::Approx(0.6));
  CHECK(v.values()[1] == doctest::Approx(0.8));
  CHECK_THROWS_AS(EmbeddingVector::normalized({0.0, 0.0}), ProviderError);
  CHECK_THROWS_AS(EmbeddingVector::normalized({}), ProviderError);
  CHECK_THROWS_AS(EmbeddingVector::normalized({1.0, NAN}), ProviderError);
  CHECK_THROWS_AS(EmbeddingVector::from_unit({1.0, 1.0}), ProviderError);
  const auto exact = EmbeddingVector::from_unit(std::vector<double>(v.values().begin(), v.values().end()));
  CHECK(exact == v);
}

TEST_CASE("chat request validation") {
  auto request = sample_request();
  CHECK_NOTHROW(request.validate());

  auto no_messages = request;
  no_messages.messages.clear();
  CHECK_THROWS_AS(no_messages.validate(), ProviderError);

  auto user_first = request;
  user_first.messages.erase(user_first.messages.begin());
  CHECK_THROWS_AS(user_first.validate(), ProviderError);

  auto empty_content = request;
  empty_content.messages[1].content.clear();
  CHECK_THROWS_AS(empty_content.validate(), ProviderError);

  auto hot = request;
  hot.temperature = -0.1;
  CHECK_THROWS_AS(hot.validate(), ProviderError);

  auto no_tokens = request;
  no_tokens.max_tokens = 0;
  CHECK_THROWS_AS(no_tokens.validate(), ProviderError);
}

TEST_CASE("chat request json round trip") {
  const auto request = sample_request("line one\nline \"two\"");
  CHECK(chat_request_from_json(to_json(request)) == request);
  CHECK_THROWS_AS(chat_request_from_json(nlohmann::json::parse(R"({"model":"m"})")), ProviderError);
}

TEST_CASE("cache keys are stable and sensitive to every field") {
  const auto base = sample_request();
  CHECK(cache_key(base) == cache_key(sample_request()));
  CHECK(cache_key(base).size() == 64);

  auto other_text = base;
  other_text.messages[1].content += " ";
  auto other_temp = base;
  other_temp.temperature = 0.5;
  auto other_model = base;
  other_model.model_id = "n";
  CHECK(cache_key(other_text) != cache_key(base));
  CHECK(cache_key(other_temp) != cache_key(base));
  CHECK(cache_key(other_model) != cache_key(base));

  const EmbedRequest query{"e", "text", EmbedKind::kQuery, 8};
  const EmbedRequest passage{"e", "text", EmbedKind::kPassage, 8};
  CHECK(cache_key(query) != cache_key(passage));
  CHECK(canonical_request(query).find("\"type\":\"embedding\"") != std::string::npos);
}

TEST_CASE("response cache stores, counts and clears entries") {
  testing::TempDir dir;
  ResponseCache cache(dir.file("cache"));
  const std::string key = cache_key(sample_request());
  CHECK_FALSE(cache.get(key).has_value());
  cache.put(key, "payload \xc3\xa9");
  REQUIRE(cache.get(key).has_value());
  CHECK(*cache.get(key) == "payload \xc3\xa9");
  CHECK(cache.path_for(key).find("/" + key.substr(0, 2) + "/") != std::string::npos);
  CHECK(cache.stats().entries == 1);
  CHECK(cache.stats().bytes > 0);
  CHECK_THROWS_AS(cache.path_for("ab"), Error);

  // A file whose recorded key differs is ignored.
  const std::string other = std::string(64, 'f');
  std::filesystem::create_directories(std::filesystem::path(cache.path_for(other)).parent_path());
  std::ofstream(cache.path_for(other)) << R"({"key":"nope","response":"x"})";
  CHECK_FALSE(cache.get(other).has_value());

  CHECK(cache.clear() == 2);
  CHECK(cache.stats().entries == 0);
}

TEST_CASE("caching chat provider serves repeats from disk") {
  testing::TempDir dir;
  auto inner = std::make_shared<CountingChat>();
  auto cache = std::make_shared<ResponseCache>(dir.file("cache"));
  CachingChatProvider chat(inner, cache);
  CHECK(chat.complete_chat(sample_request("a")) == "reply to a");
  CHECK(chat.complete_chat(sample_request("a")) == "reply to a");
  CHECK(chat.complete_chat(sample_request("b")) == "reply to b");
  CHECK(inner->calls == 2);
  CHECK(chat.hits() == 1);
  CHECK(chat.misses() == 2);

  CachingChatProvider reopened(inner, std::make_shared<ResponseCache>(dir.file("cache")));
  CHECK(reopened.complete_chat(sample_request("b")) == "reply to b");
  CHECK(inner->calls == 2);
}

TEST_CASE("cached embeddings round-trip bit for bit") {
  testing::TempDir dir;
  auto inner = std::make_shared<MockEmbedder>(32, 5);
  auto cache = std::make_shared<ResponseCache>(dir.file("cache"));
  CachingEmbeddingProvider embedder(inner, cache);
  const auto first = embedder.embed_text("manage cloud infrastructure", EmbedKind::kPassage);
  const auto second = embedder.embed_text("manage cloud infrastructure", EmbedKind::kPassage);
  CHECK(embedder.hits() == 1);
  CHECK(embedder.misses() == 1);
  REQUIRE(first.dimension() == second.dimension());
  for (std::size_t i = 0; i < first.dimension(); ++i) CHECK(first.values()[i] == second.values()[i]);
  embedder.embed_text("manage cloud infrastructure", EmbedKind::kQuery);
  CHECK(embedder.misses() == 2);
}

TEST_CASE("mock embedder matches a recomputation from token directions") {
  MockEmbedder embedder(16, 11);
  const std::string text = "Build ETL pipelines, in SQL!";
  const auto tokens = MockEmbedder::tokenize(text);
  REQUIRE(tokens == std::vector<std::string>{"build", "etl", "pipelines", "in", "sql"});
  std::vector<double> sum(16, 0.0);
  for (const auto& token : tokens) {
    const auto direction = embedder.token_direction(token);
    for (std::size_t i = 0; i < 16; ++i) sum[i] += direction[i];
  }
  double norm = 0.0;
  for (double v : sum) norm += v * v;
  norm = std::sqrt(norm);
  const auto vector = embedder.embed_text(text, EmbedKind::kQuery);
  for (std::size_t i = 0; i < 16; ++i) CHECK(vector.values()[i] == doctest::Approx(sum[i] / norm).epsilon(1e-12));
  CHECK(embedder.embed_text(text, EmbedKind::kPassage) == vector);

  MockEmbedder reseeded(16, 12);
  CHECK_FALSE(reseeded.embed_text(text, EmbedKind::kQuery) == vector);
  CHECK_THROWS_AS(embedder.embed_text("   ", EmbedKind::kQuery), ProviderError);
  CHECK_THROWS_AS(MockEmbedder(0), ConfigError);
}

TEST_CASE("fixture chat provider sequences, filters and falls back") {
  std::vector<FixtureChatProvider::Rule> rules = {
      {"blocked", {}, true},
      {"alpha", {"one", "two"}, false},
  };
  auto fallback = std::make_shared<CountingChat>();
  FixtureChatProvider chat(rules, fallback);
  CHECK(chat.complete_chat(sample_request("alpha")) == "one");
  CHECK(chat.complete_chat(sample_request("alpha")) == "two");
  CHECK(chat.complete_chat(sample_request("alpha")) == "two");
  CHECK_THROWS_AS(chat.complete_chat(sample_request("blocked alpha")), ContentFilteredError);
  CHECK(chat.complete_chat(sample_request("other")) == "reply to other");
  CHECK(fallback->calls == 1);

  FixtureChatProvider strict(rules);
  CHECK_THROWS_AS(strict.complete_chat(sample_request("other")), ProviderError);
  CHECK_THROWS_AS(FixtureChatProvider({{"x", {}, false}}), ConfigError);
}

TEST_CASE("fixture rules load from json") {
  testing::TempDir dir;
  const std::string path = dir.file("rules.json");
  std::ofstream(path) << R"({"rules":[{"contains":"a","response":"r"},{"contains":"b","content_filter":true}]})";
  const auto rules = FixtureChatProvider::load_rules(path);
  REQUIRE(rules.size() == 2);
  CHECK(rules[0].responses == std::vector<std::string>{"r"});
  CHECK(rules[1].content_filter);
  std::ofstream(path) << "{not json";
  CHECK_THROWS_AS(FixtureChatProvider::load_rules(path), ConfigError);
}

TEST_CASE("offline chat model answers generation and ranking prompts") {
  OfflineChatModel model(3);
  auto generation = sample_request("Skill: statistics\nYou are asked to provide five examples of sentences.");
  const std::string examples = model.complete_chat(generation);
  CHECK(examples.find("1. ") != std::string::npos);
  CHECK(examples.find("5. ") != std::string::npos);
  CHECK(examples.find("6. ") == std::string::npos);
  CHECK(model.complete_chat(generation) == examples);

  const auto ranking = sample_request("Potential skills:\nbake bread\nstatistics\n\nExtract: statistics for sales\n");
  const std::string ranked = model.complete_chat(ranking);
  CHECK(ranked.find("1. statistics\n") != std::string::npos);
  CHECK(ranked.find("2. bake bread\n") != std::string::npos);

  CHECK_THROWS_AS(model.complete_chat(sample_request("what?")), MalformedReplyError);
}

TEST_CASE("retry loop retries transport errors only") {
  const RetryPolicy fast{3, std::chrono::milliseconds(1), 2.0, std::chrono::milliseconds(2)};
  int attempts = 0;
  CHECK(with_retry(fast, [&]() -> std::string {
          if (++attempts < 3) throw TransportError("flaky");
          return "ok";
        }) == "ok");
  CHECK(attempts == 3);

  attempts = 0;
  CHECK_THROWS_AS(with_retry(fast, [&]() -> std::string {
                    ++attempts;
                    throw TransportError("down");
                  }),
                  TransportError);
  CHECK(attempts == 3);

  attempts = 0;
  CHECK_THROWS_AS(with_retry(fast, [&]() -> std::string {
                    ++attempts;
                    throw ContentFilteredError("no");
                  }),
                  ContentFilteredError);
  CHECK(attempts == 1);
}

TEST_CASE("endpoint parsing") {
  const auto endpoint = parse_endpoint("https://api.example.com:8443/v1/chat");
  CHECK(endpoint.scheme_host_port == "https://api.example.com:8443");
  CHECK(endpoint.path == "/v1/chat");
  CHECK(parse_endpoint("http://localhost").path == "/");
  CHECK_THROWS_AS(parse_endpoint("localhost/v1"), ConfigError);
  CHECK_THROWS_AS(parse_endpoint("ftp://host/x"), ConfigError);
  CHECK_THROWS_AS(parse_endpoint("http:///x"), ConfigError);
}

TEST_CASE("reply parsers") {
  CHECK(parse_chat_reply(R"({"choices":[{"message":{"content":"hi"},"finish_reason":"stop"}]})") == "hi");
  CHECK_THROWS_AS(parse_chat_reply(R"({"choices":[{"message":{"content":""},"finish_reason":"content_filter"}]})"),
                  ContentFilteredError);
  CHECK_THROWS_AS(parse_chat_reply(R"({"choices":[]})"), MalformedReplyError);
  CHECK_THROWS_AS(parse_chat_reply("nope"), MalformedReplyError);

  const auto v = parse_embedding_reply(R"({"data":[{"embedding":[0,3,4]}]})", 3);
  CHECK(v.values()[2] == doctest::Approx(0.8));
  CHECK_THROWS_AS(parse_embedding_reply(R"({"data":[{"embedding":[1,2]}]})", 3), ProviderError);
  CHECK_THROWS_AS(parse_embedding_reply(R"({"data":[]})", 3), MalformedReplyError);
}

TEST_CASE("http providers against a local server") {
  httplib::Server server;
  std::atomic<int> chat_hits{0};
  server.Post("/chat", [&](const httplib::Request& req, httplib::Response& res) {
    if (++chat_hits == 1) {
      res.status = 429;
      return;
    }
    const auto body = nlohmann::json::parse(req.body);
    const std::string user = body["messages"].back()["content"];
    if (user == "filtered") {
      res.status = 400;
      res.set_content(R"({"error":{"code":"content_filter"}})", "application/json");
      return;
    }
    if (user == "bad") {
      res.status = 400;
      res.set_content(R"({"error":{"code":"invalid"}})", "application/json");
      return;
    }
    const nlohmann::json reply = {{"choices", {{{"message", {{"content", "echo " + user}}}, {"finish_reason", "stop"}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  server.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    const std::string input = body["input"][0];
    const double marker = input.rfind("query: ", 0) == 0 ? 1.0 : 2.0;
    res.set_content(nlohmann::json({{"data", {{{"embedding", {marker, 0.0, 0.0, 1.0}}}}}}).dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const RetryPolicy fast{3, std::chrono::milliseconds(1), 2.0, std::chrono::milliseconds(2)};
  HttpOptions options;
  options.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/chat";
  options.timeout = std::chrono::seconds(5);
  options.retry = fast;
  HttpChatProvider chat(options);
  CHECK(chat.complete_chat(sample_request("ping")) == "echo ping");
  CHECK(chat_hits == 2);
  CHECK_THROWS_AS(chat.complete_chat(sample_request("filtered")), ContentFilteredError);
  CHECK_THROWS_AS(chat.complete_chat(sample_request("bad")), ProviderError);

  HttpEmbeddingOptions embed_options;
  embed_options.http = options;
  embed_options.http.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/embed";
  embed_options.model_id = "e";
  embed_options.dimension = 4;
  HttpEmbeddingProvider embedder(embed_options);
  const auto query = embedder.embed_text("x", EmbedKind::kQuery);
  const auto passage = embedder.embed_text("x", EmbedKind::kPassage);
  CHECK(query.values()[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(passage.values()[0] == doctest::Approx(2.0 / std::sqrt(5.0)));

  server.stop();
  worker.join();

  HttpChatProvider unreachable(options);
  CHECK_THROWS_AS(unreachable.complete_chat(sample_request("ping")), TransportError);
}
