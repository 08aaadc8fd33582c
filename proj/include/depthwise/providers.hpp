#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "depthwise/gateway.hpp"
#include "depthwise/prompts.hpp"

namespace depthwise {

/// Deterministic in-process provider. Behaviour comes from the two callables, so tests can
/// script outputs while the CLI uses the simulated responder below.
class StubProvider : public Provider {
public:
  using CompleteFn = std::function<GenerationResult(const GenerationRequest&)>;
  using EmbedFn = std::function<std::vector<double>(const std::string&)>;

  StubProvider(std::string name, std::vector<std::string> models, CompleteFn complete, EmbedFn embed = {});

  std::string name() const override { return name_; }
  bool serves(std::string_view model_id) const override;
  GenerationResult complete(const GenerationRequest& request) override;
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts, const std::string& model_id) override;

  std::size_t complete_calls() const noexcept { return complete_calls_.load(); }
  std::size_t embed_calls() const noexcept { return embed_calls_.load(); }

private:
  std::string name_;
  std::vector<std::string> models_;
  CompleteFn complete_;
  EmbedFn embed_;
  std::atomic<std::size_t> complete_calls_{0};
  std::atomic<std::size_t> embed_calls_{0};
};

/// Plausible, deterministic outputs for every prompt family in `prompts`: depth classifications,
/// reference answers, JSON decompositions, answers with token logprobs, and judge verdicts.
StubProvider::CompleteFn simulated_responder(const PromptLibrary& prompts);

/// Signed feature-hashing bag of words over lowercase alphanumeric tokens, L2-normalised.
StubProvider::EmbedFn hashed_bag_of_words_embedder(std::size_t dimensions = 256);

/// Serves pre-recorded completions and embeddings from JSONL files.
///
/// Completion records: {"model_id", "messages": [{"role","content"}...], "text",
/// "token_logprobs": [[token, logprob]...] | null, "logprob_source": "generation"|"teacher_forced"}.
/// Embedding records: {"model_id", "text", "embedding": [...]}.
/// Completions are matched on model id and exact message bytes; sampling parameters are ignored.
class ReplayProvider : public Provider {
public:
  ReplayProvider(std::string name, std::vector<std::string> models,
                 const std::vector<std::filesystem::path>& files);

  std::string name() const override { return name_; }
  bool serves(std::string_view model_id) const override;
  GenerationResult complete(const GenerationRequest& request) override;
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts, const std::string& model_id) override;

  static nlohmann::ordered_json make_record(const GenerationRequest& request, const GenerationResult& result,
                                            const std::string& logprob_source = "generation");

private:
  static std::string prompt_key(const std::string& model_id, const std::vector<ChatMessage>& messages);

  std::string name_;
  std::vector<std::string> models_;
  std::unordered_map<std::string, GenerationResult> completions_;
  std::unordered_map<std::string, std::vector<double>> embeddings_;
};

struct HttpEndpoint {
  std::string base_url;  // scheme://host[:port]
  std::string path;
  std::string api_key_env;  // empty: no Authorization header
  int timeout_seconds = 120;
};

/// OpenAI-compatible chat-completions client.
class HttpChatProvider : public Provider {
public:
  HttpChatProvider(std::string name, std::vector<std::string> models, HttpEndpoint endpoint);

  std::string name() const override { return name_; }
  bool serves(std::string_view model_id) const override;
  GenerationResult complete(const GenerationRequest& request) override;
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts, const std::string& model_id) override;

  static nlohmann::json request_body(const GenerationRequest& request);
  static GenerationResult parse_response(const nlohmann::json& body);

private:
  std::string name_;
  std::vector<std::string> models_;
  HttpEndpoint endpoint_;
};

/// OpenAI-compatible embeddings client.
class HttpEmbeddingProvider : public Provider {
public:
  HttpEmbeddingProvider(std::string name, std::vector<std::string> models, HttpEndpoint endpoint);

  std::string name() const override { return name_; }
  bool serves(std::string_view model_id) const override;
  GenerationResult complete(const GenerationRequest& request) override;
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts, const std::string& model_id) override;

private:
  std::string name_;
  std::vector<std::string> models_;
  HttpEndpoint endpoint_;
};

/// Builds providers from a provider config document:
///   {"providers": [{"name", "kind": "stub"|"replay"|"http_chat"|"http_embeddings",
///                   "models": [...], "base_url", "path", "api_key_env", "files": [...]}]}
/// Relative replay file paths resolve against `base_dir`. Literal API keys are rejected.
std::vector<std::shared_ptr<Provider>> make_providers(const nlohmann::json& config,
                                                      const std::filesystem::path& base_dir,
                                                      const PromptLibrary& prompts);

}  // namespace depthwise
