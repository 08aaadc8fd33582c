#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthwise/construction.hpp"
#include "depthwise/gateway.hpp"
#include "depthwise/inference.hpp"
#include "depthwise/judging.hpp"
#include "depthwise/prompts.hpp"
#include "depthwise/report.hpp"

namespace depthwise {

struct ModelSpec {
  std::string id;
  SamplingParams sampling;
};

struct AnnotationConfig {
  std::filesystem::path batches_dir;
  std::filesystem::path log_path;
  std::optional<std::filesystem::path> static_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
};

/// Harness configuration. Relative paths resolve against the config file's directory.
struct HarnessConfig {
  std::filesystem::path config_path;
  std::string config_hash;  // SHA-256 of the file bytes

  std::filesystem::path provider_config;
  std::filesystem::path cache_root;
  std::filesystem::path dataset;
  std::optional<std::filesystem::path> seeds;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> prompt_dir;  // bundled templates when empty

  ConstructionOptions construction;
  DedupPolicy dedup;
  std::vector<ModelSpec> models;
  std::vector<InferenceMode> modes;
  bool want_logprobs = true;
  MultiTurnSource multi_turn_source = MultiTurnSource::in_session;
  JudgeOptions judge;
  MetricsOptions metrics;
  std::size_t parallelism = 4;
  RetryPolicy retry;
  AnnotationConfig annotation;

  const ModelSpec& model(const std::string& id) const;  // ConfigurationError when absent
};

/// Parses and validates a config document. Unknown keys are rejected; so are keys that look
/// like credentials.
HarnessConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
HarnessConfig load_config(const std::filesystem::path& path);

PromptLibrary load_prompts(const HarnessConfig& config);

/// Providers from the provider config file, a response cache under cache_root, and the
/// configured retry and parallelism.
std::unique_ptr<Gateway> make_gateway(const HarnessConfig& config, const PromptLibrary& prompts);

/// Model id made safe for use as a path component.
std::string path_component(std::string_view model_id);

}  // namespace depthwise
