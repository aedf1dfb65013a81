#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <future>
#include <thread>

#include "caslie/error.hpp"
#include "caslie/inference.hpp"
#include "synthetic.hpp"

using namespace caslie;
namespace t = caslie::testing;

namespace {

RenderedPrompt text_prompt(const std::string& text) {
  RenderedPrompt p;
  p.text = text;
  return p;
}

RenderedPrompt image_prompt(const std::string& text, const std::string& locator) {
  RenderedPrompt p = text_prompt(text);
  p.attached_images.push_back({locator, std::nullopt, std::nullopt});
  return p;
}

t::MockReply ok(const std::string& content) {
  t::MockReply r;
  r.content = content;
  return r;
}

}  // namespace

TEST(RequestBody, TextOnlyUsesPlainContent) {
  EndpointConfig e;
  e.model = "m";
  e.max_tokens = 17;
  const auto body = build_request_body(e, text_prompt("hello"));
  EXPECT_EQ(body["model"], "m");
  EXPECT_EQ(body["messages"][0]["role"], "user");
  EXPECT_EQ(body["messages"][0]["content"], "hello");
  EXPECT_EQ(body["max_tokens"], 17);
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(body["stream"], false);
}

TEST(RequestBody, ImagesBecomeContentParts) {
  const auto dir = t::fresh_dir("inf-img");
  {
    std::ofstream out(dir / "p.png", std::ios::binary);
    out << "abc";
  }
  EndpointConfig e;
  e.model = "m";
  RenderedPrompt p = image_prompt("look", "https://img.example/x.jpg");
  p.attached_images.push_back({(dir / "p.png").string(), std::nullopt, std::nullopt});
  const auto content = build_request_body(e, p)["messages"][0]["content"];
  ASSERT_EQ(content.size(), 3u);
  EXPECT_EQ(content[0]["type"], "text");
  EXPECT_EQ(content[0]["text"], "look");
  EXPECT_EQ(content[1]["image_url"]["url"], "https://img.example/x.jpg");
  EXPECT_EQ(content[2]["image_url"]["url"], "data:image/png;base64,YWJj");
}

TEST(ResponseBody, Shapes) {
  const auto c = parse_response_body(R"({"choices":[{"message":{"content":"Yes"},"finish_reason":"stop"}]})");
  EXPECT_EQ(c.text, "Yes");
  EXPECT_EQ(c.finish_reason, "stop");
  EXPECT_EQ(parse_response_body(R"({"choices":[{"message":{"content":""},"finish_reason":"stop"}]})").finish_reason,
            "empty");
  EXPECT_EQ(parse_response_body(R"({"choices":[{"message":{"content":"x"},"finish_reason":"length"}]})").finish_reason,
            "length");
  EXPECT_THROW(parse_response_body(R"({"choices":[]})"), ProtocolError);
  EXPECT_THROW(parse_response_body("not json"), ProtocolError);
}

TEST(Endpoint, ValidationListsProblems) {
  EndpointConfig e;
  e.name = "x";
  e.base_url = "ftp://nope";
  e.max_in_flight = 0;
  try {
    e.validate();
    FAIL();
  } catch (const ConfigError& err) {
    const std::string msg = err.what();
    EXPECT_NE(msg.find("base_url"), std::string::npos);
    EXPECT_NE(msg.find("model"), std::string::npos);
    EXPECT_NE(msg.find("max_in_flight"), std::string::npos);
  }
}

TEST(Endpoint, InlineCredentialsRejected) {
  EXPECT_THROW(endpoint_from_json("x", {{"base_url", "http://h/v1"}, {"model", "m"}, {"api_key", "sk"}}), ConfigError);
  const auto e = endpoint_from_json("x", {{"base_url", "http://h/v1"}, {"model", "m"}, {"api_key_env", "K"}});
  EXPECT_EQ(e.api_key_env, "K");
  EXPECT_EQ(endpoint_from_json("x", to_json(e)).model, "m");
}

TEST(CacheKey, SensitiveToEveryInput) {
  EndpointConfig e;
  e.model = "m";
  const auto base = cache_key(e, image_prompt("p", "https://a"));
  EXPECT_EQ(base, cache_key(e, image_prompt("p", "https://a")));
  EXPECT_NE(base, cache_key(e, image_prompt("q", "https://a")));
  EXPECT_NE(base, cache_key(e, image_prompt("p", "https://b")));
  EndpointConfig e2 = e;
  e2.model = "m2";
  EXPECT_NE(base, cache_key(e2, image_prompt("p", "https://a")));
  e2 = e;
  e2.temperature = 0.5;
  EXPECT_NE(base, cache_key(e2, image_prompt("p", "https://a")));
  e2 = e;
  e2.max_tokens = 9;
  EXPECT_NE(base, cache_key(e2, image_prompt("p", "https://a")));
  // not part of the identity
  e2 = e;
  e2.name = "other";
  e2.timeout_seconds = 3;
  EXPECT_EQ(base, cache_key(e2, image_prompt("p", "https://a")));
}

TEST(ChatClient, ReturnsCompletion) {
  t::MockChatServer server([](const t::MockCall& c) { return ok("echo " + c.text); });
  ChatClient client(server.endpoint("e", "m"));
  const auto c = client.complete(text_prompt("hi"));
  EXPECT_EQ(c.text, "echo hi");
  EXPECT_EQ(c.retries, 0);
  EXPECT_FALSE(c.from_cache);
  EXPECT_EQ(server.requests(), 1u);
}

TEST(ChatClient, BearerTokenFromEnvironment) {
  std::string seen;
  std::mutex mu;
  t::MockChatServer server([&](const t::MockCall& c) {
    std::lock_guard lock(mu);
    seen = c.authorization;
    return ok("x");
  });
  ::setenv("CASLIE_TEST_KEY", "sk-test", 1);
  auto e = server.endpoint("e", "m");
  e.api_key_env = "CASLIE_TEST_KEY";
  ChatClient(e).complete(text_prompt("hi"));
  EXPECT_EQ(seen, "Bearer sk-test");
  ::unsetenv("CASLIE_TEST_KEY");
}

TEST(ChatClient, RetriesTransientFailures) {
  std::atomic<int> calls{0};
  t::MockChatServer server([&](const t::MockCall&) {
    t::MockReply r = ok("done");
    if (calls++ < 2) r.status = 503;
    return r;
  });
  auto e = server.endpoint("e", "m");
  e.max_retries = 3;
  ChatClient client(e);
  const auto c = client.complete(text_prompt("x"));
  EXPECT_EQ(c.text, "done");
  EXPECT_EQ(c.retries, 2);
  EXPECT_EQ(server.requests(), 3u);
  EXPECT_EQ(client.requests_sent(), 3u);
}

TEST(ChatClient, GivesUpAfterRetries) {
  t::MockChatServer server([](const t::MockCall&) {
    t::MockReply r;
    r.status = 429;
    return r;
  });
  auto e = server.endpoint("e", "m");
  e.max_retries = 2;
  EXPECT_THROW(ChatClient(e).complete(text_prompt("x")), TransportError);
  EXPECT_EQ(server.requests(), 3u);
}

TEST(ChatClient, ClientErrorIsNotRetried) {
  t::MockChatServer server([](const t::MockCall&) {
    t::MockReply r;
    r.status = 400;
    r.raw_body = R"({"error":"bad"})";
    return r;
  });
  try {
    ChatClient(server.endpoint("e", "m")).complete(text_prompt("x"));
    FAIL();
  } catch (const ProtocolError& err) {
    EXPECT_EQ(err.status(), 400);
  }
  EXPECT_EQ(server.requests(), 1u);
}

TEST(ChatClient, MalformedBodyIsProtocolError) {
  t::MockChatServer server([](const t::MockCall&) {
    t::MockReply r;
    r.raw_body = R"({"unexpected":true})";
    return r;
  });
  EXPECT_THROW(ChatClient(server.endpoint("e", "m")).complete(text_prompt("x")), ProtocolError);
}

TEST(ChatClient, ConnectionRefusedIsTransportError) {
  EndpointConfig e;
  e.name = "dead";
  e.base_url = "http://127.0.0.1:" + std::to_string(t::unused_port()) + "/v1";
  e.model = "m";
  e.max_retries = 1;
  e.timeout_seconds = 2;
  e.backoff_initial = std::chrono::milliseconds(1);
  EXPECT_THROW(ChatClient(e).complete(text_prompt("x")), TransportError);
}

TEST(ChatClient, TimeoutIsTransportError) {
  t::MockChatServer server([](const t::MockCall&) {
    t::MockReply r = ok("late");
    r.delay = std::chrono::milliseconds(1500);
    return r;
  });
  auto e = server.endpoint("e", "m");
  e.timeout_seconds = 0.2;
  e.max_retries = 0;
  EXPECT_THROW(ChatClient(e).complete(text_prompt("x")), TransportError);
}

TEST(ChatClient, TextOnlyEndpointRefusesImagesBeforeSending) {
  t::MockChatServer server([](const t::MockCall&) { return ok("x"); });
  ChatClient client(server.endpoint("e", "m", false));
  EXPECT_THROW(client.complete(image_prompt("x", "https://a")), ConfigError);
  const auto cache_dir = t::fresh_dir("inf-vision");
  CompletionCache cache(cache_dir);
  EXPECT_THROW(cached_complete(client, image_prompt("x", "https://a"), cache), ConfigError);
  EXPECT_EQ(server.requests(), 0u);
}

TEST(ChatClient, InFlightNeverExceedsLimit) {
  t::MockChatServer server([](const t::MockCall&) {
    t::MockReply r = ok("x");
    r.delay = std::chrono::milliseconds(5);
    return r;
  });
  auto e = server.endpoint("e", "m");
  e.max_in_flight = 4;
  ChatClient client(e);
  std::vector<std::future<Completion>> futures;
  for (int i = 0; i < 64; ++i)
    futures.push_back(std::async(std::launch::async, [&, i] { return client.complete(text_prompt(std::to_string(i))); }));
  for (auto& f : futures) f.get();
  EXPECT_EQ(server.requests(), 64u);
  EXPECT_LE(server.max_in_flight(), 4);
  EXPECT_GE(server.max_in_flight(), 2);
}

TEST(Cache, HitSendsNothing) {
  t::MockChatServer server([](const t::MockCall& c) { return ok("answer to " + c.text); });
  ChatClient client(server.endpoint("e", "m"));
  CompletionCache cache(t::fresh_dir("inf-cache"));
  const auto first = cached_complete(client, text_prompt("q"), cache);
  EXPECT_FALSE(first.from_cache);
  server.reset_counters();
  const auto second = cached_complete(client, text_prompt("q"), cache);
  EXPECT_TRUE(second.from_cache);
  EXPECT_EQ(second.text, first.text);
  EXPECT_EQ(second.finish_reason, first.finish_reason);
  EXPECT_EQ(server.requests(), 0u);

  // a new cache object over the same directory also hits
  CompletionCache reopened(cache.directory());
  EXPECT_TRUE(cached_complete(client, text_prompt("q"), reopened).from_cache);
  EXPECT_EQ(server.requests(), 0u);
}

TEST(Cache, LayoutUsesKeyPrefixes) {
  CompletionCache cache(t::fresh_dir("inf-layout"));
  const std::string key(64, 'a');
  const auto p = cache.entry_path("abcd" + key.substr(4));
  EXPECT_EQ(p.parent_path().filename(), "cd");
  EXPECT_EQ(p.parent_path().parent_path().filename(), "ab");
  EXPECT_EQ(p.extension(), ".json");
}

TEST(Cache, CorruptEntryQuarantinedAndRecomputed) {
  t::MockChatServer server([](const t::MockCall&) { return ok("fresh"); });
  ChatClient client(server.endpoint("e", "m"));
  CompletionCache cache(t::fresh_dir("inf-corrupt"));
  const auto prompt = text_prompt("q");
  cached_complete(client, prompt, cache);
  const auto path = cache.entry_path(cache_key(client.config(), prompt));
  {
    std::ofstream out(path, std::ios::trunc);
    out << "{truncated";
  }
  server.reset_counters();
  const auto c = cached_complete(client, prompt, cache);
  EXPECT_FALSE(c.from_cache);
  EXPECT_EQ(c.text, "fresh");
  EXPECT_EQ(server.requests(), 1u);
  EXPECT_EQ(cache.quarantined(), 1u);
  EXPECT_TRUE(std::filesystem::exists(cache.directory() / "quarantine"));
  EXPECT_TRUE(cache.load(cache_key(client.config(), prompt)).has_value());
}

TEST(Cache, ConcurrentIdenticalRequestsShareOneCall) {
  t::MockChatServer server([](const t::MockCall&) {
    t::MockReply r = ok("shared");
    r.delay = std::chrono::milliseconds(200);
    return r;
  });
  auto e = server.endpoint("e", "m");
  e.max_in_flight = 16;
  ChatClient client(e);
  CompletionCache cache(t::fresh_dir("inf-single"));
  std::vector<std::future<Completion>> futures;
  for (int i = 0; i < 16; ++i)
    futures.push_back(std::async(std::launch::async, [&] { return cached_complete(client, text_prompt("same"), cache); }));
  for (auto& f : futures) EXPECT_EQ(f.get().text, "shared");
  EXPECT_EQ(server.requests(), 1u);
}

TEST(Cache, FailuresAreNotCached) {
  std::atomic<int> calls{0};
  t::MockChatServer server([&](const t::MockCall&) {
    t::MockReply r = ok("ok");
    if (calls++ == 0) r.status = 400;
    return r;
  });
  ChatClient client(server.endpoint("e", "m"));
  CompletionCache cache(t::fresh_dir("inf-nofail"));
  EXPECT_THROW(cached_complete(client, text_prompt("q"), cache), ProtocolError);
  EXPECT_EQ(cached_complete(client, text_prompt("q"), cache).text, "ok");
}

TEST(ImageDigest, LocalFilesHashedByContent) {
  const auto dir = t::fresh_dir("inf-digest");
  {
    std::ofstream(dir / "a.jpg") << "same";
    std::ofstream(dir / "b.jpg") << "same";
  }
  EXPECT_EQ(image_digest({(dir / "a.jpg").string(), {}, {}}), image_digest({(dir / "b.jpg").string(), {}, {}}));
  EXPECT_EQ(image_digest({"https://x/a.jpg", {}, {}}).rfind("url:", 0), 0u);
}
