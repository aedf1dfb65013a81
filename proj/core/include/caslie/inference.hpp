#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "caslie/prompting.hpp"
#include "json.hpp"

namespace caslie {

/// One remote chat-completions endpoint.
struct EndpointConfig {
  std::string name;
  /// Up to and including the API version segment, e.g.
  /// "https://api.example.com/v1". Requests go to <base_url>/chat/completions.
  std::string base_url;
  std::string model;
  /// Environment variable holding the bearer token; empty means no auth.
  std::string api_key_env;
  double timeout_seconds = 60.0;
  int max_retries = 3;
  int max_in_flight = 4;
  double temperature = 0.0;
  int max_tokens = 256;
  bool vision = false;
  std::chrono::milliseconds backoff_initial{200};
  std::chrono::milliseconds backoff_max{5000};

  /// Throws ConfigError listing every violated invariant.
  void validate() const;
};

EndpointConfig endpoint_from_json(const std::string& name, const nlohmann::json& j);
nlohmann::json to_json(const EndpointConfig& endpoint);

struct Completion {
  std::string text;
  /// Upstream finish reason; "empty" when a success carried no text.
  std::string finish_reason;
  double latency_ms = 0.0;
  bool from_cache = false;
  /// Attempts beyond the first.
  int retries = 0;
};

/// "url:<sha256 of locator>" for remote/inline images, "file:<sha256 of bytes>"
/// for readable local files.
std::string image_digest(const ImageRef& image);

/// Inputs that identify a request; the cache key is their digest.
nlohmann::json cache_key_inputs(const EndpointConfig& endpoint, const RenderedPrompt& prompt);
std::string cache_key(const EndpointConfig& endpoint, const RenderedPrompt& prompt);

/// Chat-completions request body:
///   {"model", "messages": [{"role": "user", "content": ...}],
///    "temperature", "max_tokens", "stream": false}
/// Content is a plain string without images, otherwise an array of
/// {"type":"text","text"} followed by {"type":"image_url","image_url":{"url"}}
/// parts; local files are inlined as base64 data URLs.
nlohmann::json build_request_body(const EndpointConfig& endpoint, const RenderedPrompt& prompt);

/// Reads choices[0].message.content and choices[0].finish_reason. Throws
/// ProtocolError on any other shape.
Completion parse_response_body(const std::string& body);

/// Thread-safe client for one endpoint. At most max_in_flight requests are
/// outstanding at any time.
class ChatClient {
 public:
  explicit ChatClient(EndpointConfig config);
  ~ChatClient();
  ChatClient(const ChatClient&) = delete;
  ChatClient& operator=(const ChatClient&) = delete;

  const EndpointConfig& config() const { return config_; }

  /// Sends the prompt, retrying transient failures (connection errors,
  /// timeouts, 408, 429, 5xx) with exponential backoff.
  ///
  /// Throws ConfigError before any request when images are attached and the
  /// endpoint is not vision-capable, ProtocolError on other non-2xx answers,
  /// TransportError once retries are exhausted.
  Completion complete(const RenderedPrompt& prompt);

  /// HTTP requests actually sent, including retries.
  std::uint64_t requests_sent() const { return requests_.load(); }

 private:
  class Slots;

  EndpointConfig config_;
  std::string host_;
  std::string path_;
  std::unique_ptr<Slots> slots_;
  std::atomic<std::uint64_t> requests_{0};
};

/// On-disk completion cache, one JSON file per key under <dir>/ab/cd/<key>.json.
/// Concurrent lookups for the same key share one computation.
class CompletionCache {
 public:
  explicit CompletionCache(std::filesystem::path dir);

  const std::filesystem::path& directory() const { return dir_; }
  std::filesystem::path entry_path(const std::string& key) const;

  /// Corrupt entries are moved to <dir>/quarantine and reported as a miss.
  std::optional<Completion> load(const std::string& key) const;

  /// Atomic write via rename.
  void store(const std::string& key, const nlohmann::json& inputs, const Completion& completion) const;

  Completion get_or_compute(const std::string& key, const nlohmann::json& inputs,
                            const std::function<Completion()>& compute);

  std::uint64_t quarantined() const { return quarantined_.load(); }

 private:
  std::filesystem::path dir_;
  std::mutex mu_;
  std::map<std::string, std::shared_future<Completion>> in_flight_;
  mutable std::atomic<std::uint64_t> quarantined_{0};
};

/// complete() behind the cache. A hit returns from_cache=true and sends
/// nothing.
Completion cached_complete(ChatClient& client, const RenderedPrompt& prompt, CompletionCache& cache);

}  // namespace caslie
