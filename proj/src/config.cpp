#include "depthwise/config.hpp"

#include <set>

#include <fmt/format.h>

#include "depthwise/hashing.hpp"
#include "depthwise/io_util.hpp"
#include "depthwise/providers.hpp"

namespace depthwise {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigurationError(fmt::format("{} must be a JSON object", where));
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigurationError(fmt::format("unknown key '{}' in {}", key, where));
    }
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const json& value) {
  std::filesystem::path p = value.get<std::string>();
  return (p.is_absolute() ? p : base / p).lexically_normal();
}

SamplingParams sampling_from(const json& j, SamplingParams s) {
  s.temperature = j.value("temperature", s.temperature);
  s.top_p = j.value("top_p", s.top_p);
  s.max_tokens = j.value("max_tokens", s.max_tokens);
  GenerationRequest probe;
  probe.model_id = "probe";
  probe.messages = {{Role::user, "probe"}};
  probe.temperature = s.temperature;
  probe.top_p = s.top_p;
  probe.max_tokens = s.max_tokens;
  try {
    probe.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigurationError(e.what());
  }
  return s;
}

}  // namespace

const ModelSpec& HarnessConfig::model(const std::string& id) const {
  for (const auto& m : models) {
    if (m.id == id) return m;
  }
  throw ConfigurationError(fmt::format("model '{}' is not in the config", id));
}

HarnessConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  check_keys(doc, "config",
             {"provider_config", "cache_root", "dataset", "seeds", "output_dir", "prompt_dir", "construction", "dedup",
              "models", "modes", "want_logprobs", "multi_turn_source", "judge", "min_k", "gate", "parallelism",
              "retry", "annotation"});
  HarnessConfig c;
  try {
    for (const char* required : {"provider_config", "cache_root", "dataset", "output_dir", "models", "judge"}) {
      if (!doc.contains(required)) throw ConfigurationError(fmt::format("config is missing '{}'", required));
    }
    c.provider_config = resolve(base_dir, doc.at("provider_config"));
    c.cache_root = resolve(base_dir, doc.at("cache_root"));
    c.dataset = resolve(base_dir, doc.at("dataset"));
    c.output_dir = resolve(base_dir, doc.at("output_dir"));
    if (doc.contains("seeds")) c.seeds = resolve(base_dir, doc.at("seeds"));
    if (doc.contains("prompt_dir")) c.prompt_dir = resolve(base_dir, doc.at("prompt_dir"));

    if (doc.contains("construction")) {
      const auto& k = doc.at("construction");
      check_keys(k, "construction",
                 {"model", "embedding_model", "temperature", "top_p", "max_tokens", "parse_retries"});
      c.construction.model_id = k.value("model", "");
      c.construction.embedding_model_id = k.value("embedding_model", "");
      auto s = sampling_from(k, {c.construction.temperature, c.construction.top_p, c.construction.max_tokens});
      c.construction.temperature = s.temperature;
      c.construction.top_p = s.top_p;
      c.construction.max_tokens = s.max_tokens;
      c.construction.parse_retries = k.value("parse_retries", c.construction.parse_retries);
    }
    if (doc.contains("dedup")) {
      const auto& d = doc.at("dedup");
      check_keys(d, "dedup", {"same_depth", "d2_near_d1", "d1_near_d2_low", "d1_near_d2_high"});
      c.dedup.same_depth_threshold = d.value("same_depth", c.dedup.same_depth_threshold);
      c.dedup.cross_remove_d2_threshold = d.value("d2_near_d1", c.dedup.cross_remove_d2_threshold);
      c.dedup.cross_remove_d1_low = d.value("d1_near_d2_low", c.dedup.cross_remove_d1_low);
      c.dedup.cross_remove_d1_high = d.value("d1_near_d2_high", c.dedup.cross_remove_d1_high);
      try {
        c.dedup.validate();
      } catch (const DomainError& e) {
        throw ConfigurationError(e.what());
      }
    }

    std::set<std::string> seen;
    for (const auto& m : doc.at("models")) {
      check_keys(m, "models[]", {"id", "temperature", "top_p", "max_tokens"});
      ModelSpec spec{m.at("id").get<std::string>(), sampling_from(m, {})};
      if (spec.id.empty() || !seen.insert(spec.id).second) {
        throw ConfigurationError(fmt::format("model id '{}' is empty or repeated", spec.id));
      }
      c.models.push_back(std::move(spec));
    }
    if (c.models.empty()) throw ConfigurationError("config lists no models");

    if (doc.contains("modes")) {
      for (const auto& m : doc.at("modes")) c.modes.push_back(parse_mode(m.get<std::string>()));
    } else {
      c.modes.assign(kAllModes.begin(), kAllModes.end());
    }
    c.want_logprobs = doc.value("want_logprobs", true);
    if (doc.contains("multi_turn_source")) {
      c.multi_turn_source = parse_multi_turn_source(doc.at("multi_turn_source").get<std::string>());
    }

    const auto& judge = doc.at("judge");
    check_keys(judge, "judge", {"model", "temperature", "top_p", "max_tokens", "parse_retries"});
    c.judge.model_id = judge.at("model").get<std::string>();
    auto js = sampling_from(judge, {c.judge.temperature, c.judge.top_p, c.judge.max_tokens});
    c.judge.temperature = js.temperature;
    c.judge.top_p = js.top_p;
    c.judge.max_tokens = js.max_tokens;
    c.judge.parse_retries = judge.value("parse_retries", c.judge.parse_retries);

    if (doc.contains("min_k")) {
      const auto& mk = doc.at("min_k");
      check_keys(mk, "min_k", {"k_percent", "window"});
      c.metrics.min_k_percent = mk.value("k_percent", c.metrics.min_k_percent);
      c.metrics.min_k_window = mk.value("window", c.metrics.min_k_window);
      if (!(c.metrics.min_k_percent > 0.0 && c.metrics.min_k_percent <= 100.0) || c.metrics.min_k_window == 0) {
        throw ConfigurationError("min_k needs k_percent in (0, 100] and a positive window");
      }
    }
    if (doc.contains("gate")) {
      const auto& g = doc.at("gate");
      check_keys(g, "gate", {"threshold", "operator"});
      c.metrics.gate.threshold = g.value("threshold", c.metrics.gate.threshold);
      if (g.contains("operator")) {
        try {
          c.metrics.gate.op = parse_gate_operator(g.at("operator").get<std::string>());
        } catch (const Error& e) {
          throw ConfigurationError(e.what());
        }
      }
    }

    c.parallelism = doc.value("parallelism", std::size_t{4});
    if (c.parallelism == 0) throw ConfigurationError("parallelism must be positive");
    if (doc.contains("retry")) {
      const auto& r = doc.at("retry");
      check_keys(r, "retry", {"max_attempts", "initial_backoff_ms", "backoff_multiplier"});
      c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
      c.retry.initial_backoff = std::chrono::milliseconds(r.value("initial_backoff_ms", 200));
      c.retry.backoff_multiplier = r.value("backoff_multiplier", c.retry.backoff_multiplier);
      if (c.retry.max_attempts < 1) throw ConfigurationError("retry.max_attempts must be at least 1");
    }

    c.annotation.batches_dir = c.output_dir / "annotation" / "batches";
    c.annotation.log_path = c.output_dir / "annotation" / "annotations.jsonl";
    if (doc.contains("annotation")) {
      const auto& a = doc.at("annotation");
      check_keys(a, "annotation", {"batches_dir", "log", "static_dir", "host", "port"});
      if (a.contains("batches_dir")) c.annotation.batches_dir = resolve(base_dir, a.at("batches_dir"));
      if (a.contains("log")) c.annotation.log_path = resolve(base_dir, a.at("log"));
      if (a.contains("static_dir")) c.annotation.static_dir = resolve(base_dir, a.at("static_dir"));
      c.annotation.host = a.value("host", c.annotation.host);
      c.annotation.port = a.value("port", c.annotation.port);
    }
  } catch (const json::exception& e) {
    throw ConfigurationError(fmt::format("invalid config: {}", e.what()));
  }
  return c;
}

HarnessConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigurationError(fmt::format("config file {} not found", path.string()));
  const auto text = read_text_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigurationError(fmt::format("config file {} is not valid JSON: {}", path.string(), e.what()));
  }
  auto base = std::filesystem::absolute(path).parent_path();
  auto c = parse_config(doc, base);
  c.config_path = std::filesystem::absolute(path).lexically_normal();
  c.config_hash = sha256_hex(text);
  return c;
}

PromptLibrary load_prompts(const HarnessConfig& config) {
  return config.prompt_dir ? PromptLibrary::load(*config.prompt_dir) : PromptLibrary::bundled();
}

std::unique_ptr<Gateway> make_gateway(const HarnessConfig& config, const PromptLibrary& prompts) {
  if (!std::filesystem::exists(config.provider_config)) {
    throw ConfigurationError(fmt::format("provider config {} not found", config.provider_config.string()));
  }
  auto providers = make_providers(read_json_file(config.provider_config), config.provider_config.parent_path(), prompts);
  auto cache = std::make_shared<ResponseCache>(config.cache_root);
  Gateway::Options options;
  options.retry = config.retry;
  options.parallelism = config.parallelism;
  return std::make_unique<Gateway>(std::move(providers), std::move(cache), options);
}

std::string path_component(std::string_view model_id) {
  std::string out;
  for (char ch : model_id) {
    const bool keep = std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.';
    out += keep ? ch : '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

}  // namespace depthwise
