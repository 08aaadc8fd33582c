#include <algorithm>
#include <cstdlib>
#include <fmt/format.h>

#include <httplib.h>

#include "depthwise/providers.hpp"

namespace depthwise {

using nlohmann::json;

namespace {

httplib::Headers auth_headers(const HttpEndpoint& ep) {
  httplib::Headers headers;
  if (ep.api_key_env.empty()) return headers;
  const char* key = std::getenv(ep.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw ConfigurationError(fmt::format("environment variable {} is not set", ep.api_key_env));
  }
  headers.emplace("Authorization", fmt::format("Bearer {}", key));
  return headers;
}

json post_json(const HttpEndpoint& ep, const json& body) {
  httplib::Client client(ep.base_url);
  client.set_connection_timeout(ep.timeout_seconds, 0);
  client.set_read_timeout(ep.timeout_seconds, 0);
  client.set_write_timeout(ep.timeout_seconds, 0);
  auto res = client.Post(ep.path, auth_headers(ep), body.dump(), "application/json");
  if (!res) {
    throw ProviderError(fmt::format("{}{}: {}", ep.base_url, ep.path, httplib::to_string(res.error())), true);
  }
  if (res->status == 429 || res->status >= 500) {
    throw ProviderError(fmt::format("{}{} returned HTTP {}", ep.base_url, ep.path, res->status), true);
  }
  if (res->status < 200 || res->status >= 300) {
    throw ProviderError(
        fmt::format("{}{} returned HTTP {}: {}", ep.base_url, ep.path, res->status, res->body.substr(0, 500)), false);
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw ProviderError(fmt::format("{}{} returned invalid JSON: {}", ep.base_url, ep.path, e.what()), false);
  }
}

bool list_serves(const std::vector<std::string>& models, std::string_view model_id) {
  return std::find(models.begin(), models.end(), model_id) != models.end();
}

}  // namespace

HttpChatProvider::HttpChatProvider(std::string name, std::vector<std::string> models, HttpEndpoint endpoint)
    : name_(std::move(name)), models_(std::move(models)), endpoint_(std::move(endpoint)) {}

bool HttpChatProvider::serves(std::string_view model_id) const { return list_serves(models_, model_id); }

json HttpChatProvider::request_body(const GenerationRequest& request) {
  json body;
  body["model"] = request.model_id;
  body["messages"] = json::array();
  for (const auto& m : request.messages) {
    body["messages"].push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  body["temperature"] = request.temperature;
  body["top_p"] = request.top_p;
  body["max_tokens"] = request.max_tokens;
  if (request.want_logprobs) body["logprobs"] = true;
  return body;
}

GenerationResult HttpChatProvider::parse_response(const json& body) {
  try {
    const auto& choice = body.at("choices").at(0);
    GenerationResult r;
    const auto& content = choice.at("message").at("content");
    r.text = content.is_null() ? std::string() : content.get<std::string>();
    if (choice.contains("logprobs") && choice.at("logprobs").is_object() &&
        choice.at("logprobs").contains("content") && choice.at("logprobs").at("content").is_array()) {
      std::vector<TokenLogprob> lps;
      for (const auto& t : choice.at("logprobs").at("content")) {
        lps.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
      }
      r.token_logprobs = std::move(lps);
    }
    if (choice.contains("finish_reason") && !choice.at("finish_reason").is_null()) {
      r.provider_meta["finish_reason"] = choice.at("finish_reason");
    }
    if (body.contains("usage")) r.provider_meta["usage"] = body.at("usage");
    return r;
  } catch (const json::exception& e) {
    throw ProviderError(fmt::format("unexpected chat completion payload: {}", e.what()), false);
  }
}

GenerationResult HttpChatProvider::complete(const GenerationRequest& request) {
  auto r = parse_response(post_json(endpoint_, request_body(request)));
  r.provider_meta["provider"] = name_;
  return r;
}

std::vector<EmbeddingVector> HttpChatProvider::embed(std::span<const std::string>, const std::string& model_id) {
  throw ProviderError(fmt::format("chat provider '{}' cannot embed with {}", name_, model_id), false);
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string name, std::vector<std::string> models,
                                             HttpEndpoint endpoint)
    : name_(std::move(name)), models_(std::move(models)), endpoint_(std::move(endpoint)) {}

bool HttpEmbeddingProvider::serves(std::string_view model_id) const { return list_serves(models_, model_id); }

GenerationResult HttpEmbeddingProvider::complete(const GenerationRequest& request) {
  throw ProviderError(fmt::format("embedding provider '{}' cannot complete with {}", name_, request.model_id),
                      false);
}

std::vector<EmbeddingVector> HttpEmbeddingProvider::embed(std::span<const std::string> texts,
                                                          const std::string& model_id) {
  json body;
  body["model"] = model_id;
  body["input"] = std::vector<std::string>(texts.begin(), texts.end());
  const json reply = post_json(endpoint_, body);
  try {
    std::vector<EmbeddingVector> out(texts.size());
    const auto& data = reply.at("data");
    if (data.size() != texts.size()) {
      throw ProviderError(fmt::format("asked for {} embeddings, got {}", texts.size(), data.size()), false);
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto idx = data[i].value("index", i);
      if (idx >= out.size()) throw ProviderError("embedding index out of range", false);
      out[idx] = {data[i].at("embedding").get<std::vector<double>>(), model_id};
    }
    return out;
  } catch (const json::exception& e) {
    throw ProviderError(fmt::format("unexpected embeddings payload: {}", e.what()), false);
  }
}

}  // namespace depthwise
