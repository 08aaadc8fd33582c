#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "depthwise/errors.hpp"

namespace depthwise {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);
Role parse_role(std::string_view name);

struct ChatMessage {
  Role role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct GenerationRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.7;
  double top_p = 1.0;
  int max_tokens = 1024;
  bool want_logprobs = false;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

struct TokenLogprob {
  std::string token;
  double logprob;

  friend bool operator==(const TokenLogprob&, const TokenLogprob&) = default;
};

struct GenerationResult {
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  nlohmann::json provider_meta = nlohmann::json::object();
};

struct EmbeddingVector {
  std::vector<double> values;
  std::string model_id;
};

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Transport or upstream failure. `retryable` distinguishes transient faults.
class ProviderError : public Error {
public:
  ProviderError(const std::string& what, bool retryable) : Error(what), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

private:
  bool retryable_;
};

/// A backend that serves one or more model ids.
class Provider {
public:
  virtual ~Provider() = default;

  virtual std::string name() const = 0;
  virtual bool serves(std::string_view model_id) const = 0;
  virtual GenerationResult complete(const GenerationRequest& request) = 0;
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts, const std::string& model_id) = 0;
};

/// Canonical key fields for a completion: model, exact message bytes and every sampling parameter.
nlohmann::ordered_json completion_key_fields(const GenerationRequest& request);
nlohmann::ordered_json embedding_key_fields(const std::string& model_id, const std::string& text);
std::string cache_key(const nlohmann::ordered_json& key_fields);

nlohmann::ordered_json result_to_json(const GenerationResult& result);
GenerationResult result_from_json(const nlohmann::json& j);

struct CacheStats {
  std::size_t hits = 0;
  std::size_t misses = 0;
  std::size_t corrupt = 0;
  std::size_t writes = 0;
};

/// One JSON file per key hash under a root directory.
///
/// Readers never lock; writers serialize per key through a striped mutex and publish with an
/// atomic rename, so a reader sees either the old entry, the new entry, or nothing.
class ResponseCache {
public:
  explicit ResponseCache(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }

  /// Returns the stored value or nullopt. Corrupt entries are logged, removed and counted as misses.
  std::optional<nlohmann::json> lookup(const nlohmann::ordered_json& key_fields);
  void store(const nlohmann::ordered_json& key_fields, const nlohmann::ordered_json& value);

  CacheStats stats() const;

  struct DiskUsage {
    std::size_t entries = 0;
    std::uintmax_t bytes = 0;
  };
  DiskUsage disk_usage() const;
  /// Removes every entry; returns how many were removed.
  std::size_t clear();

  std::filesystem::path path_for(const std::string& key) const;

private:
  std::mutex& stripe(const std::string& key);

  std::filesystem::path root_;
  std::array<std::mutex, 64> stripes_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
  std::atomic<std::size_t> corrupt_{0};
  std::atomic<std::size_t> writes_{0};
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  double backoff_multiplier = 2.0;
};

/// Counting semaphore usable with a runtime bound.
class ConcurrencyLimiter {
public:
  explicit ConcurrencyLimiter(std::size_t limit);
  void acquire();
  void release();

private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::size_t available_;
};

enum class CachePolicy { use, refresh, bypass };

struct GatewayCounters {
  std::size_t provider_calls = 0;
  std::size_t provider_failures = 0;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
};

/// Routes requests to providers with caching, retry and a bound on in-flight calls. Thread-safe.
class Gateway {
public:
  struct Options {
    RetryPolicy retry;
    std::size_t parallelism = 4;
  };

  Gateway(std::vector<std::shared_ptr<Provider>> providers, std::shared_ptr<ResponseCache> cache,
          Options options);
  explicit Gateway(std::vector<std::shared_ptr<Provider>> providers)
      : Gateway(std::move(providers), nullptr, Options{}) {}

  GenerationResult complete(const GenerationRequest& request, CachePolicy policy = CachePolicy::use);

  /// One vector per text, order preserved. Vectors are cached per (model, text).
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts, const std::string& model_id);

  GatewayCounters counters() const;
  std::size_t parallelism() const noexcept { return options_.parallelism; }
  ResponseCache* cache() const noexcept { return cache_.get(); }

  /// Throws ConfigurationError when no provider serves `model_id`.
  Provider& provider_for(std::string_view model_id) const;

private:
  template <typename Fn>
  auto with_retry(Fn&& fn) -> decltype(fn());

  std::vector<std::shared_ptr<Provider>> providers_;
  std::shared_ptr<ResponseCache> cache_;
  Options options_;
  ConcurrencyLimiter limiter_;
  std::atomic<std::size_t> provider_calls_{0};
  std::atomic<std::size_t> provider_failures_{0};
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> cache_misses_{0};
};

}  // namespace depthwise
