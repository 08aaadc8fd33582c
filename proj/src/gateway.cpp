#include "depthwise/gateway.hpp"

#include <cmath>
#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <stdexcept>
#include <thread>

#include "depthwise/hashing.hpp"
#include "depthwise/io_util.hpp"

namespace depthwise {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view name) {
  if (name == "system") return Role::system;
  if (name == "user") return Role::user;
  if (name == "assistant") return Role::assistant;
  throw DataError(fmt::format("unknown chat role '{}'", name));
}

void GenerationRequest::validate() const {
  if (model_id.empty()) throw std::invalid_argument("model_id is empty");
  if (messages.empty()) throw std::invalid_argument("request has no messages");
  if (messages.front().role == Role::assistant) {
    throw std::invalid_argument("first message must be a system or user message");
  }
  for (const auto& m : messages) {
    if (m.content.empty()) throw std::invalid_argument("chat message content is empty");
  }
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("temperature must be non-negative");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must lie in (0, 1]");
  if (max_tokens <= 0) throw std::invalid_argument("max_tokens must be positive");
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DataError(fmt::format("embedding dimensionality mismatch: {} vs {}", a.size(), b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw DataError("cosine similarity of a zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

ordered_json completion_key_fields(const GenerationRequest& request) {
  ordered_json key;
  key["op"] = "complete";
  key["model_id"] = request.model_id;
  key["messages"] = ordered_json::array();
  for (const auto& m : request.messages) {
    key["messages"].push_back(ordered_json::array({std::string(to_string(m.role)), m.content}));
  }
  key["temperature"] = request.temperature;
  key["top_p"] = request.top_p;
  key["max_tokens"] = request.max_tokens;
  key["want_logprobs"] = request.want_logprobs;
  return key;
}

ordered_json embedding_key_fields(const std::string& model_id, const std::string& text) {
  ordered_json key;
  key["op"] = "embed";
  key["model_id"] = model_id;
  key["text"] = text;
  return key;
}

std::string cache_key(const ordered_json& key_fields) { return sha256_hex(key_fields.dump()); }

ordered_json result_to_json(const GenerationResult& result) {
  ordered_json j;
  j["text"] = result.text;
  if (result.token_logprobs) {
    j["token_logprobs"] = ordered_json::array();
    for (const auto& t : *result.token_logprobs) {
      j["token_logprobs"].push_back(ordered_json::array({t.token, t.logprob}));
    }
  } else {
    j["token_logprobs"] = nullptr;
  }
  j["provider_meta"] = result.provider_meta;
  return j;
}

GenerationResult result_from_json(const json& j) {
  GenerationResult r;
  r.text = j.at("text").get<std::string>();
  if (j.contains("token_logprobs") && !j.at("token_logprobs").is_null()) {
    std::vector<TokenLogprob> lps;
    for (const auto& t : j.at("token_logprobs")) {
      lps.push_back({t.at(0).get<std::string>(), t.at(1).get<double>()});
    }
    r.token_logprobs = std::move(lps);
  }
  r.provider_meta = j.value("provider_meta", json::object());
  return r;
}

// ---------------------------------------------------------------------------
// ResponseCache

ResponseCache::ResponseCache(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

fs::path ResponseCache::path_for(const std::string& key) const { return root_ / (key + ".json"); }

std::mutex& ResponseCache::stripe(const std::string& key) {
  return stripes_[std::hash<std::string>{}(key) % stripes_.size()];
}

std::optional<json> ResponseCache::lookup(const ordered_json& key_fields) {
  const std::string key = cache_key(key_fields);
  const fs::path path = path_for(key);
  std::error_code ec;
  if (!fs::exists(path, ec)) {
    ++misses_;
    return std::nullopt;
  }
  try {
    json entry = json::parse(read_text_file(path));
    if (entry.at("key") != json(key_fields)) throw std::runtime_error("stored key does not match");
    ++hits_;
    return entry.at("value");
  } catch (const std::exception& e) {
    spdlog::warn("discarding corrupt cache entry {}: {}", path.string(), e.what());
    std::lock_guard lock(stripe(key));
    fs::remove(path, ec);
    ++corrupt_;
    ++misses_;
    return std::nullopt;
  }
}

void ResponseCache::store(const ordered_json& key_fields, const ordered_json& value) {
  const std::string key = cache_key(key_fields);
  ordered_json entry;
  entry["key"] = key_fields;
  entry["value"] = value;
  std::lock_guard lock(stripe(key));
  write_text_file(path_for(key), entry.dump());
  ++writes_;
}

CacheStats ResponseCache::stats() const { return {hits_.load(), misses_.load(), corrupt_.load(), writes_.load()}; }

ResponseCache::DiskUsage ResponseCache::disk_usage() const {
  DiskUsage usage;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      ++usage.entries;
      usage.bytes += entry.file_size();
    }
  }
  return usage;
}

std::size_t ResponseCache::clear() {
  std::size_t removed = 0;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      fs::remove(entry.path());
      ++removed;
    }
  }
  return removed;
}

// ---------------------------------------------------------------------------
// Gateway

ConcurrencyLimiter::ConcurrencyLimiter(std::size_t limit) : available_(limit == 0 ? 1 : limit) {}

void ConcurrencyLimiter::acquire() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return available_ > 0; });
  --available_;
}

void ConcurrencyLimiter::release() {
  {
    std::lock_guard lock(mutex_);
    ++available_;
  }
  cv_.notify_one();
}

namespace {

class LimiterGuard {
public:
  explicit LimiterGuard(ConcurrencyLimiter& l) : limiter_(l) { limiter_.acquire(); }
  ~LimiterGuard() { limiter_.release(); }
  LimiterGuard(const LimiterGuard&) = delete;
  LimiterGuard& operator=(const LimiterGuard&) = delete;

private:
  ConcurrencyLimiter& limiter_;
};

}  // namespace

Gateway::Gateway(std::vector<std::shared_ptr<Provider>> providers, std::shared_ptr<ResponseCache> cache,
                 Options options)
    : providers_(std::move(providers)),
      cache_(std::move(cache)),
      options_(options),
      limiter_(options.parallelism) {
  if (options_.retry.max_attempts < 1) throw ConfigurationError("retry.max_attempts must be >= 1");
}

Provider& Gateway::provider_for(std::string_view model_id) const {
  for (const auto& p : providers_) {
    if (p->serves(model_id)) return *p;
  }
  throw ConfigurationError(fmt::format("no provider configured for model '{}'", model_id));
}

template <typename Fn>
auto Gateway::with_retry(Fn&& fn) -> decltype(fn()) {
  auto backoff = options_.retry.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      LimiterGuard guard(limiter_);
      ++provider_calls_;
      return fn();
    } catch (const ProviderError& e) {
      ++provider_failures_;
      if (!e.retryable() || attempt >= options_.retry.max_attempts) throw;
      spdlog::warn("provider call failed (attempt {}/{}): {}", attempt, options_.retry.max_attempts, e.what());
    }
    std::this_thread::sleep_for(backoff);
    backoff = std::chrono::milliseconds(
        static_cast<long long>(static_cast<double>(backoff.count()) * options_.retry.backoff_multiplier));
  }
}

GenerationResult Gateway::complete(const GenerationRequest& request, CachePolicy policy) {
  request.validate();
  Provider& provider = provider_for(request.model_id);
  const ordered_json key = completion_key_fields(request);

  if (cache_ && policy == CachePolicy::use) {
    if (auto hit = cache_->lookup(key)) {
      try {
        GenerationResult cached = result_from_json(*hit);
        ++cache_hits_;
        return cached;
      } catch (const json::exception& e) {
        spdlog::warn("cached completion has the wrong shape, recomputing: {}", e.what());
      }
    }
  }
  ++cache_misses_;

  GenerationResult result = with_retry([&] { return provider.complete(request); });
  if (result.token_logprobs) {
    for (const auto& t : *result.token_logprobs) {
      if (!(t.logprob <= 0.0)) {
        throw ProviderError(fmt::format("provider '{}' returned logprob {} > 0", provider.name(), t.logprob),
                            false);
      }
    }
  }
  if (!result.provider_meta.is_object()) result.provider_meta = json::object();
  if (request.want_logprobs && !result.token_logprobs) {
    result.provider_meta["warning"] = "logprobs_unavailable";
  }
  if (cache_ && policy != CachePolicy::bypass) cache_->store(key, result_to_json(result));
  return result;
}

std::vector<EmbeddingVector> Gateway::embed(std::span<const std::string> texts, const std::string& model_id) {
  if (texts.empty()) return {};
  Provider& provider = provider_for(model_id);

  std::vector<std::optional<EmbeddingVector>> slots(texts.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (cache_) {
      if (auto hit = cache_->lookup(embedding_key_fields(model_id, texts[i]))) {
        try {
          slots[i] = EmbeddingVector{hit->at("values").get<std::vector<double>>(), model_id};
          ++cache_hits_;
          continue;
        } catch (const json::exception& e) {
          spdlog::warn("cached embedding has the wrong shape, recomputing: {}", e.what());
        }
      }
    }
    ++cache_misses_;
    missing.push_back(i);
  }

  if (!missing.empty()) {
    std::vector<std::string> batch;
    batch.reserve(missing.size());
    for (auto i : missing) batch.push_back(texts[i]);
    auto vectors = with_retry([&] { return provider.embed(batch, model_id); });
    if (vectors.size() != batch.size()) {
      throw ProviderError(fmt::format("provider '{}' returned {} embeddings for {} texts", provider.name(),
                                      vectors.size(), batch.size()),
                          false);
    }
    for (std::size_t j = 0; j < missing.size(); ++j) {
      vectors[j].model_id = model_id;
      if (cache_) {
        ordered_json value;
        value["values"] = vectors[j].values;
        cache_->store(embedding_key_fields(model_id, batch[j]), value);
      }
      slots[missing[j]] = std::move(vectors[j]);
    }
  }

  std::vector<EmbeddingVector> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  const std::size_t dim = out.front().values.size();
  for (const auto& v : out) {
    if (v.values.size() != dim) {
      throw DataError(fmt::format("embedding dimensionality mismatch for model '{}': {} vs {}", model_id,
                                  v.values.size(), dim));
    }
    double norm = 0.0;
    for (double x : v.values) norm += x * x;
    if (norm == 0.0) throw DataError(fmt::format("model '{}' returned a zero embedding", model_id));
  }
  return out;
}

GatewayCounters Gateway::counters() const {
  return {provider_calls_.load(), provider_failures_.load(), cache_hits_.load(), cache_misses_.load()};
}

}  // namespace depthwise
