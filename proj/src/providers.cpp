#include "depthwise/providers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fmt/format.h>

#include "depthwise/hashing.hpp"
#include "depthwise/io_util.hpp"

namespace depthwise {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

bool list_serves(const std::vector<std::string>& models, std::string_view model_id) {
  return std::find(models.begin(), models.end(), model_id) != models.end();
}

}  // namespace

// ---------------------------------------------------------------------------
// StubProvider

StubProvider::StubProvider(std::string name, std::vector<std::string> models, CompleteFn complete, EmbedFn embed)
    : name_(std::move(name)), models_(std::move(models)), complete_(std::move(complete)), embed_(std::move(embed)) {}

bool StubProvider::serves(std::string_view model_id) const { return list_serves(models_, model_id); }

GenerationResult StubProvider::complete(const GenerationRequest& request) {
  ++complete_calls_;
  if (!complete_) throw ProviderError(fmt::format("stub '{}' has no completion behaviour", name_), false);
  return complete_(request);
}

std::vector<EmbeddingVector> StubProvider::embed(std::span<const std::string> texts, const std::string& model_id) {
  ++embed_calls_;
  if (!embed_) throw ProviderError(fmt::format("stub '{}' has no embedding behaviour", name_), false);
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back({embed_(t), model_id});
  return out;
}

StubProvider::EmbedFn hashed_bag_of_words_embedder(std::size_t dimensions) {
  return [dimensions](const std::string& text) {
    std::vector<double> v(dimensions, 0.0);
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      const std::string h = sha256_hex(token);
      const std::size_t slot = std::stoull(h.substr(0, 8), nullptr, 16) % dimensions;
      const double sign = (std::stoul(h.substr(8, 2), nullptr, 16) & 1U) != 0U ? 1.0 : -1.0;
      v[slot] += sign;
      token.clear();
    };
    for (char c : text) {
      auto uc = static_cast<unsigned char>(c);
      if (std::isalnum(uc) || uc >= 0x80) {
        token.push_back(static_cast<char>(std::tolower(uc)));
      } else {
        flush();
      }
    }
    flush();
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) {
      v[0] = 1.0;
      norm = 1.0;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
  };
}

// ---------------------------------------------------------------------------
// ReplayProvider

std::string ReplayProvider::prompt_key(const std::string& model_id, const std::vector<ChatMessage>& messages) {
  ordered_json key;
  key["model_id"] = model_id;
  key["messages"] = ordered_json::array();
  for (const auto& m : messages) {
    key["messages"].push_back(ordered_json::array({std::string(to_string(m.role)), m.content}));
  }
  return sha256_hex(key.dump());
}

ReplayProvider::ReplayProvider(std::string name, std::vector<std::string> models,
                               const std::vector<std::filesystem::path>& files)
    : name_(std::move(name)), models_(std::move(models)) {
  for (const auto& file : files) {
    for (const auto& rec : read_jsonl_file(file)) {
      try {
        const std::string model_id = rec.at("model_id").get<std::string>();
        if (rec.contains("embedding")) {
          embeddings_[model_id + '\x1f' + rec.at("text").get<std::string>()] =
              rec.at("embedding").get<std::vector<double>>();
          continue;
        }
        std::vector<ChatMessage> messages;
        for (const auto& m : rec.at("messages")) {
          messages.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
        }
        GenerationResult r;
        r.text = rec.at("text").get<std::string>();
        if (rec.contains("token_logprobs") && !rec.at("token_logprobs").is_null()) {
          std::vector<TokenLogprob> lps;
          for (const auto& t : rec.at("token_logprobs")) {
            lps.push_back({t.at(0).get<std::string>(), t.at(1).get<double>()});
          }
          r.token_logprobs = std::move(lps);
        }
        r.provider_meta = json::object();
        r.provider_meta["provider"] = name_;
        r.provider_meta["replayed"] = true;
        if (rec.contains("logprob_source")) r.provider_meta["logprob_source"] = rec.at("logprob_source");
        completions_[prompt_key(model_id, messages)] = std::move(r);
      } catch (const json::exception& e) {
        throw DataError(fmt::format("bad replay record in '{}': {}", file.string(), e.what()));
      }
    }
  }
}

bool ReplayProvider::serves(std::string_view model_id) const { return list_serves(models_, model_id); }

GenerationResult ReplayProvider::complete(const GenerationRequest& request) {
  auto it = completions_.find(prompt_key(request.model_id, request.messages));
  if (it == completions_.end()) {
    throw ProviderError(fmt::format("replay '{}' has no recorded response for this {} request", name_,
                                    request.model_id),
                        false);
  }
  return it->second;
}

std::vector<EmbeddingVector> ReplayProvider::embed(std::span<const std::string> texts, const std::string& model_id) {
  std::vector<EmbeddingVector> out;
  for (const auto& t : texts) {
    auto it = embeddings_.find(model_id + '\x1f' + t);
    if (it == embeddings_.end()) {
      throw ProviderError(fmt::format("replay '{}' has no recorded embedding for '{}'", name_, t), false);
    }
    out.push_back({it->second, model_id});
  }
  return out;
}

ordered_json ReplayProvider::make_record(const GenerationRequest& request, const GenerationResult& result,
                                         const std::string& logprob_source) {
  ordered_json rec;
  rec["model_id"] = request.model_id;
  rec["messages"] = ordered_json::array();
  for (const auto& m : request.messages) {
    ordered_json msg;
    msg["role"] = std::string(to_string(m.role));
    msg["content"] = m.content;
    rec["messages"].push_back(std::move(msg));
  }
  rec["text"] = result.text;
  const auto r = result_to_json(result);
  rec["token_logprobs"] = r["token_logprobs"];
  rec["logprob_source"] = logprob_source;
  return rec;
}

// ---------------------------------------------------------------------------
// Provider config

std::vector<std::shared_ptr<Provider>> make_providers(const json& config, const std::filesystem::path& base_dir,
                                                      const PromptLibrary& prompts) {
  if (!config.is_object() || !config.contains("providers") || !config.at("providers").is_array()) {
    throw ConfigurationError("provider config needs a \"providers\" array");
  }
  std::vector<std::shared_ptr<Provider>> out;
  for (const auto& p : config.at("providers")) {
    for (const auto& [key, _] : p.items()) {
      std::string lower = key;
      std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
      if (lower != "api_key_env" &&
          (lower.find("api_key") != std::string::npos || lower == "token" || lower == "secret")) {
        throw ConfigurationError(fmt::format(
            "provider config field '{}' looks like a credential; pass keys through \"api_key_env\"", key));
      }
    }
    try {
      const std::string name = p.at("name").get<std::string>();
      const std::string kind = p.at("kind").get<std::string>();
      const auto models = p.at("models").get<std::vector<std::string>>();
      if (kind == "stub") {
        out.push_back(std::make_shared<StubProvider>(name, models, simulated_responder(prompts),
                                                     hashed_bag_of_words_embedder(p.value("dimensions", 256))));
      } else if (kind == "replay") {
        std::vector<std::filesystem::path> files;
        for (const auto& f : p.at("files")) {
          std::filesystem::path path = f.get<std::string>();
          files.push_back(path.is_absolute() ? path : base_dir / path);
        }
        out.push_back(std::make_shared<ReplayProvider>(name, models, files));
      } else if (kind == "http_chat" || kind == "http_embeddings") {
        HttpEndpoint ep;
        ep.base_url = p.at("base_url").get<std::string>();
        ep.api_key_env = p.value("api_key_env", "");
        ep.timeout_seconds = p.value("timeout_seconds", 120);
        if (kind == "http_chat") {
          ep.path = p.value("path", "/v1/chat/completions");
          out.push_back(std::make_shared<HttpChatProvider>(name, models, ep));
        } else {
          ep.path = p.value("path", "/v1/embeddings");
          out.push_back(std::make_shared<HttpEmbeddingProvider>(name, models, ep));
        }
      } else {
        throw ConfigurationError(fmt::format("unknown provider kind '{}'", kind));
      }
    } catch (const json::exception& e) {
      throw ConfigurationError(fmt::format("bad provider entry {}: {}", p.dump(), e.what()));
    }
  }
  return out;
}

}  // namespace depthwise
