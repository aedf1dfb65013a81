#include "caslie/inference.hpp"

#include <spdlog/spdlog.h>

#include <condition_variable>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "caslie/digest.hpp"
#include "caslie/error.hpp"
#include "httplib.h"

namespace caslie {
namespace {

bool is_remote_locator(std::string_view loc) {
  return loc.starts_with("http://") || loc.starts_with("https://") || loc.starts_with("data:");
}

std::string mime_for(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".webp") return "image/webp";
  if (ext == ".gif") return "image/gif";
  return "image/jpeg";
}

std::string image_url(const ImageRef& image) {
  if (is_remote_locator(image.locator)) return image.locator;
  std::ifstream in(image.locator, std::ios::binary);
  if (!in) throw DataError("image not readable: " + image.locator);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return "data:" + mime_for(image.locator) + ";base64," + base64_encode(bytes);
}

bool transient_status(int status) { return status == 408 || status == 429 || status >= 500; }

std::string excerpt(const std::string& body) {
  constexpr std::size_t kMax = 200;
  return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string unique_suffix() {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  std::ostringstream os;
  os << std::hex << rng();
  return os.str();
}

}  // namespace

void EndpointConfig::validate() const {
  std::vector<std::string> problems;
  if (name.empty()) problems.emplace_back("endpoint name empty");
  if (!base_url.starts_with("http://") && !base_url.starts_with("https://")) {
    problems.push_back(name + ": base_url must start with http:// or https://");
  }
  if (model.empty()) problems.push_back(name + ": model empty");
  if (!(timeout_seconds > 0)) problems.push_back(name + ": timeout must be > 0");
  if (max_retries < 0) problems.push_back(name + ": max_retries must be >= 0");
  if (max_in_flight < 1) problems.push_back(name + ": max_in_flight must be >= 1");
  if (max_tokens < 1) problems.push_back(name + ": max_tokens must be >= 1");
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    throw ConfigError(msg);
  }
}

EndpointConfig endpoint_from_json(const std::string& name, const nlohmann::json& j) {
  EndpointConfig e;
  e.name = name;
  try {
    e.base_url = j.at("base_url").get<std::string>();
    e.model = j.at("model").get<std::string>();
    e.api_key_env = j.value("api_key_env", "");
    e.timeout_seconds = j.value("timeout_seconds", e.timeout_seconds);
    e.max_retries = j.value("max_retries", e.max_retries);
    e.max_in_flight = j.value("max_in_flight", e.max_in_flight);
    e.temperature = j.value("temperature", e.temperature);
    e.max_tokens = j.value("max_tokens", e.max_tokens);
    e.vision = j.value("vision", e.vision);
    e.backoff_initial = std::chrono::milliseconds(j.value("backoff_initial_ms", e.backoff_initial.count()));
    e.backoff_max = std::chrono::milliseconds(j.value("backoff_max_ms", e.backoff_max.count()));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("endpoint " + name + ": " + ex.what());
  }
  if (j.contains("api_key")) {
    throw ConfigError("endpoint " + name + ": credentials are read from api_key_env only");
  }
  return e;
}

nlohmann::json to_json(const EndpointConfig& e) {
  return {{"base_url", e.base_url},
          {"model", e.model},
          {"api_key_env", e.api_key_env},
          {"timeout_seconds", e.timeout_seconds},
          {"max_retries", e.max_retries},
          {"max_in_flight", e.max_in_flight},
          {"temperature", e.temperature},
          {"max_tokens", e.max_tokens},
          {"vision", e.vision},
          {"backoff_initial_ms", e.backoff_initial.count()},
          {"backoff_max_ms", e.backoff_max.count()}};
}

std::string image_digest(const ImageRef& image) {
  if (!is_remote_locator(image.locator) && std::filesystem::is_regular_file(image.locator)) {
    return "file:" + sha256_file(image.locator);
  }
  return "url:" + sha256_hex(image.locator);
}

nlohmann::json cache_key_inputs(const EndpointConfig& endpoint, const RenderedPrompt& prompt) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& img : prompt.attached_images) images.push_back(image_digest(img));
  return {{"model", endpoint.model},
          {"prompt", prompt.text},
          {"images", images},
          {"temperature", endpoint.temperature},
          {"max_tokens", endpoint.max_tokens}};
}

std::string cache_key(const EndpointConfig& endpoint, const RenderedPrompt& prompt) {
  return sha256_hex(cache_key_inputs(endpoint, prompt).dump());
}

nlohmann::json build_request_body(const EndpointConfig& endpoint, const RenderedPrompt& prompt) {
  nlohmann::json content;
  if (prompt.attached_images.empty()) {
    content = prompt.text;
  } else {
    content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", prompt.text}});
    for (const auto& img : prompt.attached_images) {
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", image_url(img)}}}});
    }
  }
  return {{"model", endpoint.model},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
          {"temperature", endpoint.temperature},
          {"max_tokens", endpoint.max_tokens},
          {"stream", false}};
}

Completion parse_response_body(const std::string& body) {
  Completion c;
  try {
    const auto j = nlohmann::json::parse(body);
    const auto& choice = j.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    c.text = content.is_null() ? std::string() : content.get<std::string>();
    const auto& reason = choice.contains("finish_reason") ? choice["finish_reason"] : nlohmann::json();
    c.finish_reason = reason.is_string() ? reason.get<std::string>() : "stop";
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(200, std::string("malformed completion body: ") + e.what() + ": " + excerpt(body));
  }
  if (c.text.empty() && (c.finish_reason == "stop" || c.finish_reason.empty())) {
    c.finish_reason = "empty";
  }
  return c;
}

class ChatClient::Slots {
 public:
  explicit Slots(int n) : free_(n) {}
  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return free_ > 0; });
    --free_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      ++free_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int free_;
};

ChatClient::ChatClient(EndpointConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto scheme_end = config_.base_url.find("://");
  const auto path_start = config_.base_url.find('/', scheme_end + 3);
  host_ = config_.base_url.substr(0, path_start);
  path_ = path_start == std::string::npos ? std::string() : config_.base_url.substr(path_start);
  while (!path_.empty() && path_.back() == '/') path_.pop_back();
  path_ += "/chat/completions";
  slots_ = std::make_unique<Slots>(config_.max_in_flight);
}

ChatClient::~ChatClient() = default;

Completion ChatClient::complete(const RenderedPrompt& prompt) {
  if (!prompt.attached_images.empty() && !config_.vision) {
    throw ConfigError("endpoint " + config_.name + " is text-only but the prompt carries " +
                      std::to_string(prompt.attached_images.size()) + " image(s)");
  }
  const std::string body = build_request_body(config_, prompt).dump();
  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  const auto timeout_s = static_cast<time_t>(config_.timeout_seconds);
  const auto timeout_us =
      static_cast<time_t>((config_.timeout_seconds - static_cast<double>(timeout_s)) * 1e6);

  std::string last_error;
  for (int attempt = 0;; ++attempt) {
    const auto start = std::chrono::steady_clock::now();
    httplib::Result res{nullptr, httplib::Error::Unknown};
    {
      slots_->acquire();
      struct Release {
        Slots* s;
        ~Release() { s->release(); }
      } release{slots_.get()};
      httplib::Client cli(host_);
      cli.set_connection_timeout(timeout_s, timeout_us);
      cli.set_read_timeout(timeout_s, timeout_us);
      cli.set_write_timeout(timeout_s, timeout_us);
      ++requests_;
      res = cli.Post(path_, headers, body, "application/json");
    }
    const double latency =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    if (res) {
      if (res->status >= 200 && res->status < 300) {
        Completion c = parse_response_body(res->body);
        c.latency_ms = latency;
        c.retries = attempt;
        return c;
      }
      last_error = "HTTP " + std::to_string(res->status) + ": " + excerpt(res->body);
      if (!transient_status(res->status)) {
        throw ProtocolError(res->status, config_.name + ": " + last_error);
      }
    } else {
      last_error = httplib::to_string(res.error());
    }

    if (attempt >= config_.max_retries) {
      throw TransportError(config_.name + ": giving up after " + std::to_string(attempt + 1) +
                           " attempt(s): " + last_error);
    }
    spdlog::debug("{}: attempt {} failed ({}), retrying", config_.name, attempt + 1, last_error);
    auto delay = config_.backoff_initial * (1LL << std::min(attempt, 20));
    std::this_thread::sleep_for(std::min<std::chrono::milliseconds>(delay, config_.backoff_max));
  }
}

CompletionCache::CompletionCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path CompletionCache::entry_path(const std::string& key) const {
  return dir_ / key.substr(0, 2) / key.substr(2, 2) / (key + ".json");
}

std::optional<Completion> CompletionCache::load(const std::string& key) const {
  const auto path = entry_path(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  in.close();
  try {
    const auto j = nlohmann::json::parse(buf.str());
    if (j.at("key").get<std::string>() != key) throw std::runtime_error("key mismatch");
    Completion c;
    c.text = j.at("text").get<std::string>();
    c.finish_reason = j.at("finish_reason").get<std::string>();
    c.from_cache = true;
    return c;
  } catch (const std::exception& e) {
    const auto qdir = dir_ / "quarantine";
    std::error_code ec;
    std::filesystem::create_directories(qdir, ec);
    std::filesystem::rename(path, qdir / (key + "." + unique_suffix() + ".json"), ec);
    ++quarantined_;
    spdlog::warn("cache entry {} is corrupt ({}); quarantined", path.string(), e.what());
    return std::nullopt;
  }
}

void CompletionCache::store(const std::string& key, const nlohmann::json& inputs,
                            const Completion& completion) const {
  const auto path = entry_path(key);
  std::filesystem::create_directories(path.parent_path());
  const nlohmann::json j = {{"key", key},
                            {"inputs", inputs},
                            {"text", completion.text},
                            {"finish_reason", completion.finish_reason},
                            {"timestamp", utc_timestamp()}};
  const auto tmp = path.parent_path() / ("." + key + ".tmp." + unique_suffix());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write cache entry " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out.flush()) throw Error("cannot write cache entry " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Completion CompletionCache::get_or_compute(const std::string& key, const nlohmann::json& inputs,
                                           const std::function<Completion()>& compute) {
  if (auto hit = load(key)) return *hit;

  std::promise<Completion> promise;
  {
    std::unique_lock lock(mu_);
    if (auto it = in_flight_.find(key); it != in_flight_.end()) {
      auto shared = it->second;
      lock.unlock();
      Completion c = shared.get();
      c.from_cache = true;
      c.retries = 0;
      return c;
    }
    // an owner may have stored and left between the first load and the lock
    if (auto hit = load(key)) return *hit;
    in_flight_.emplace(key, promise.get_future().share());
  }

  try {
    Completion c = compute();
    store(key, inputs, c);
    promise.set_value(c);
    std::lock_guard lock(mu_);
    in_flight_.erase(key);
    return c;
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(mu_);
    in_flight_.erase(key);
    throw;
  }
}

Completion cached_complete(ChatClient& client, const RenderedPrompt& prompt, CompletionCache& cache) {
  if (!prompt.attached_images.empty() && !client.config().vision) {
    throw ConfigError("endpoint " + client.config().name + " is text-only but the prompt carries " +
                      std::to_string(prompt.attached_images.size()) + " image(s)");
  }
  return cache.get_or_compute(cache_key(client.config(), prompt),
                              cache_key_inputs(client.config(), prompt),
                              [&] { return client.complete(prompt); });
}

}  // namespace caslie
