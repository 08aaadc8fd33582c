#include "depthwise/cli.hpp"

#include <algorithm>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "depthwise/annotation.hpp"
#include "depthwise/annotation_server.hpp"
#include "depthwise/config.hpp"
#include "depthwise/construction.hpp"
#include "depthwise/graph_io.hpp"
#include "depthwise/hashing.hpp"
#include "depthwise/inference.hpp"
#include "depthwise/io_util.hpp"
#include "depthwise/judging.hpp"
#include "depthwise/report.hpp"

namespace depthwise {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

class UsageError : public Error {
public:
  using Error::Error;
};

struct Options {
  std::string config;
  bool verbose = false;
  bool quiet = false;

  std::string graph;
  std::string out;
  std::string seeds;
  std::vector<std::string> models;
  std::vector<std::string> modes;

  std::string host;
  int port = 0;

  std::string cache_action;

  std::string kind;
  std::vector<std::string> raters;
  double overlap = 0.0;
  std::uint64_t seed = 0;
  std::size_t limit = 0;
  bool show_reference = false;
  std::string batch;
};

/// State shared by one command invocation.
class Run {
public:
  Run(std::string command, const Options& opts, std::ostream& out)
      : command_(std::move(command)), opts_(opts), out_(out), started_(utc_timestamp()) {}

  bool has_config() const { return !opts_.config.empty(); }

  const HarnessConfig& config() {
    if (!config_) {
      if (opts_.config.empty()) throw UsageError(fmt::format("'{}' needs --config", command_));
      config_ = load_config(opts_.config);
    }
    return *config_;
  }

  const PromptLibrary& prompts() {
    if (!prompts_) prompts_ = load_prompts(config());
    return *prompts_;
  }

  Gateway& gateway() {
    if (!gateway_) {
      gateway_ = make_gateway(config(), prompts());
    }
    return *gateway_;
  }

  fs::path graph_path() { return opts_.graph.empty() ? config().dataset : fs::path(opts_.graph); }

  const KnowledgeGraph& graph() {
    if (!graph_) {
      graph_path_ = graph_path();
      graph_ = load_graph(graph_path_);
    }
    return *graph_;
  }

  std::vector<const ModelSpec*> models() {
    std::vector<const ModelSpec*> out;
    if (opts_.models.empty()) {
      for (const auto& m : config().models) out.push_back(&m);
    } else {
      for (const auto& id : opts_.models) out.push_back(&config().model(id));
    }
    return out;
  }

  /// Requested modes in canonical order, so zero-shot runs before the modes that reuse it.
  std::vector<InferenceMode> modes() {
    std::vector<InferenceMode> wanted;
    if (opts_.modes.empty()) {
      wanted = config().modes;
    } else {
      for (const auto& m : opts_.modes) wanted.push_back(parse_mode(m));
    }
    std::vector<InferenceMode> out;
    for (auto m : kAllModes) {
      if (std::find(wanted.begin(), wanted.end(), m) != wanted.end()) out.push_back(m);
    }
    return out;
  }

  fs::path cell_path(const std::string& area, const std::string& model, InferenceMode mode, const std::string& ext) {
    return config().output_dir / area / path_component(model) / (std::string(to_string(mode)) + ext);
  }

  std::ostream& out() { return out_; }
  ordered_json& details() { return details_; }

  /// Writes manifests/<command>[-suffix].json.
  void write_manifest(const std::string& suffix = "") {
    if (!has_config()) return;
    ordered_json m;
    m["command"] = command_;
    m["started_at"] = started_;
    m["finished_at"] = utc_timestamp();
    m["config_path"] = config().config_path.string();
    m["config_hash"] = config().config_hash;
    if (graph_) {
      m["graph_path"] = graph_path_.string();
      m["graph_fingerprint"] = graph_fingerprint(*graph_);
    }
    m["details"] = details_;
    if (gateway_) {
      const auto c = gateway_->counters();
      m["gateway"] = {{"provider_calls", c.provider_calls},
                      {"provider_failures", c.provider_failures},
                      {"cache_hits", c.cache_hits},
                      {"cache_misses", c.cache_misses}};
      if (auto* cache = gateway_->cache()) {
        const auto s = cache->stats();
        m["cache"] = {{"root", cache->root().string()}, {"hits", s.hits}, {"misses", s.misses},
                      {"corrupt", s.corrupt}, {"writes", s.writes}};
      }
    }
    auto name = suffix.empty() ? command_ : fmt::format("{}-{}", command_, suffix);
    write_text_file(config().output_dir / "manifests" / (name + ".json"), m.dump(2) + "\n");
  }

private:
  std::string command_;
  const Options& opts_;
  std::ostream& out_;
  std::string started_;
  std::optional<HarnessConfig> config_;
  std::optional<PromptLibrary> prompts_;
  std::unique_ptr<Gateway> gateway_;
  std::optional<KnowledgeGraph> graph_;
  fs::path graph_path_;
  ordered_json details_ = ordered_json::object();
};

void print_census(std::ostream& out, const KnowledgeGraph& graph) {
  const auto c = depth_census(graph);
  fmt::print(out, "nodes: {} (D1 {}, D2 {}, D3 {})\n", c.total_nodes(), c.nodes[0], c.nodes[1], c.nodes[2]);
  fmt::print(out, "edges: {} (D1->D2 {}, D2->D3 {})\n", c.total_edges(), c.edges_between(1, 2), c.edges_between(2, 3));
}

void save_removals(const fs::path& path, const std::vector<RemovalRecord>& removals) {
  std::vector<ordered_json> lines;
  for (const auto& r : removals) lines.push_back(r.to_json());
  write_jsonl_file(path, lines);
}

ConstructionOptions construction_options(const HarnessConfig& config) {
  if (config.construction.model_id.empty() || config.construction.embedding_model_id.empty()) {
    throw ConfigurationError("construction needs 'model' and 'embedding_model' in the config");
  }
  return config.construction;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_validate(Run& run) {
  const auto& graph = run.graph();
  const auto report = validate_graph(graph);
  print_census(run.out(), graph);
  for (const auto& v : report.violations) {
    fmt::print(run.out(), "violation {} {}{}: {}\n", to_string(v.kind), v.node_id,
               v.other_id.empty() ? "" : " -> " + v.other_id, v.message);
  }
  fmt::print(run.out(), "{} violations, {} warnings\n", report.violations.size(), report.warnings.size());
  const auto c = depth_census(graph);
  run.details() = {{"nodes", c.total_nodes()}, {"edges", c.total_edges()},
                   {"violations", report.violations.size()}, {"warnings", report.warnings.size()}};
  run.write_manifest();
  return report.ok() ? kExitOk : kExitFailure;
}

int cmd_build(Run& run, const Options& opts) {
  const auto& config = run.config();
  fs::path seeds_path;
  if (!opts.seeds.empty()) {
    seeds_path = opts.seeds;
  } else if (config.seeds) {
    seeds_path = *config.seeds;
  } else {
    throw UsageError("build needs --seeds or a 'seeds' entry in the config");
  }
  const auto seeds = load_seeds(seeds_path);
  auto result = build_graph(seeds, run.gateway(), run.prompts(), construction_options(config), config.dedup);
  const fs::path out = opts.out.empty() ? config.output_dir / "built_graph.json" : fs::path(opts.out);
  save_graph(result.graph, out);
  save_removals(config.output_dir / "build" / "removals.jsonl", result.report.removals);
  write_text_file(config.output_dir / "build" / "build_report.json", result.report.to_json().dump(2) + "\n");
  print_census(run.out(), result.graph);
  fmt::print(run.out(), "wrote {}\n", out.string());
  run.details() = {{"seeds_path", seeds_path.string()},
                   {"seeds_hash", sha256_hex(read_text_file(seeds_path))},
                   {"output", out.string()},
                   {"graph_fingerprint", graph_fingerprint(result.graph)},
                   {"rejected_seeds", result.report.rejected_seeds.size()},
                   {"removals", result.report.removals.size()}};
  run.write_manifest();
  return kExitOk;
}

int cmd_dedupe(Run& run, const Options& opts) {
  const auto& config = run.config();
  auto result = deduplicate(run.graph(), config.dedup, run.gateway(), construction_options(config).embedding_model_id);
  const fs::path out = opts.out.empty() ? config.output_dir / "deduped_graph.json" : fs::path(opts.out);
  save_graph(result.graph, out);
  save_removals(config.output_dir / "dedupe" / "removals.jsonl", result.removals);
  fmt::print(run.out(), "removed {} nodes\n", result.removals.size());
  print_census(run.out(), result.graph);
  run.details() = {{"output", out.string()}, {"removals", result.removals.size()}};
  run.write_manifest();
  return kExitOk;
}

int cmd_infer(Run& run) {
  const auto& config = run.config();
  const auto& graph = run.graph();
  const auto modes = run.modes();
  for (const auto* model : run.models()) {
    std::optional<ResponseStore> zero_shot;
    auto zero_path = run.cell_path("responses", model->id, InferenceMode::zero_shot, ".jsonl");
    for (auto mode : modes) {
      const bool needs_zero_shot =
          mode == InferenceMode::prompt_pred ||
          (mode == InferenceMode::multi_turn && config.multi_turn_source == MultiTurnSource::zero_shot_cache);
      if (needs_zero_shot && !zero_shot && fs::exists(zero_path)) zero_shot = ResponseStore::load(zero_path);

      CampaignOptions options;
      options.model_id = model->id;
      options.mode = mode;
      options.sampling = model->sampling;
      options.want_logprobs = config.want_logprobs;
      options.multi_turn_source = config.multi_turn_source;
      options.zero_shot = zero_shot ? &*zero_shot : nullptr;
      auto result = run_campaign(graph, run.gateway(), run.prompts(), options);

      result.responses.save(run.cell_path("responses", model->id, mode, ".jsonl"));
      auto manifest = result.manifest;
      manifest["graph_fingerprint"] = graph_fingerprint(graph);
      manifest["config_hash"] = config.config_hash;
      write_text_file(run.cell_path("responses", model->id, mode, ".manifest.json"), manifest.dump(2) + "\n");
      fmt::print(run.out(), "{} / {}: {} responses\n", model->id, to_string(mode), result.responses.size());
      run.details()[fmt::format("{}/{}", model->id, to_string(mode))] = {{"responses", result.responses.size()},
                                                                        {"complete", result.complete}};
      if (!result.complete) {
        run.write_manifest();
        throw Error(fmt::format("campaign {} / {} incomplete: {}", model->id, to_string(mode), result.error));
      }
      if (mode == InferenceMode::zero_shot) zero_shot = std::move(result.responses);
    }
  }
  run.write_manifest();
  return kExitOk;
}

ResponseStore load_cell_responses(Run& run, const std::string& model, InferenceMode mode) {
  auto path = run.cell_path("responses", model, mode, ".jsonl");
  if (!fs::exists(path)) {
    throw CoverageError("no responses stored for the requested cells", {fmt::format("{}/{}", model, to_string(mode))});
  }
  return ResponseStore::load(path);
}

int cmd_judge(Run& run) {
  const auto& config = run.config();
  const auto& graph = run.graph();
  for (const auto* model : run.models()) {
    for (auto mode : run.modes()) {
      const auto responses = load_cell_responses(run, model->id, mode);
      auto verdicts = judge_responses(graph, responses, run.gateway(), run.prompts(), config.judge);
      verdicts.save(run.cell_path("verdicts", model->id, mode, ".jsonl"));
      fmt::print(run.out(), "{} / {}: {} verdicts\n", model->id, to_string(mode), verdicts.size());
      run.details()[fmt::format("{}/{}", model->id, to_string(mode))] = {{"verdicts", verdicts.size()}};
    }
  }
  run.details()["judge_model"] = config.judge.model_id;
  run.write_manifest();
  return kExitOk;
}

int cmd_metrics(Run& run) {
  const auto& config = run.config();
  const auto& graph = run.graph();
  for (const auto* model : run.models()) {
    for (auto mode : run.modes()) {
      const auto responses = load_cell_responses(run, model->id, mode);
      const auto verdict_path = run.cell_path("verdicts", model->id, mode, ".jsonl");
      if (!fs::exists(verdict_path)) {
        throw CoverageError("no verdicts stored for the requested cells", {fmt::format("{}/{}", model->id, to_string(mode))});
      }
      const auto verdicts = VerdictStore::load(verdict_path);
      std::vector<std::string> unanswered;
      for (const auto& id : eligible_ids(graph, mode)) {
        if (!responses.contains(id)) unanswered.push_back(id);
      }
      if (!unanswered.empty()) {
        throw CoverageError(fmt::format("{} / {} has no responses for some questions", model->id, to_string(mode)),
                            std::move(unanswered));
      }
      const auto bundle = compute_metrics(graph, verdicts.scores(), responses, model->id, mode, config.metrics);
      write_text_file(run.cell_path("metrics", model->id, mode, ".json"), bundle.to_json().dump(2) + "\n");
      write_text_file(run.cell_path("metrics", model->id, mode, ".discrepancies.csv"), discrepancy_records_csv(bundle));
      write_text_file(run.cell_path("metrics", model->id, mode, ".min_k.csv"), min_k_csv(bundle));
      write_text_file(run.cell_path("metrics", model->id, mode, ".memorization.csv"), memorization_csv(bundle));
      fmt::print(run.out(), "{} / {}: overall {}\n", model->id, to_string(mode), format_fixed(bundle.accuracy.overall, 3));
      run.details()[fmt::format("{}/{}", model->id, to_string(mode))] = {{"overall", bundle.accuracy.overall}};
    }
  }
  run.write_manifest();
  return kExitOk;
}

int cmd_report(Run& run) {
  const auto& config = run.config();
  std::vector<MetricsBundle> bundles;
  std::vector<std::pair<std::string, InferenceMode>> requested;
  for (const auto* model : run.models()) {
    for (auto mode : run.modes()) {
      requested.emplace_back(model->id, mode);
      const auto path = run.cell_path("metrics", model->id, mode, ".json");
      if (fs::exists(path)) bundles.push_back(MetricsBundle::from_json(read_json_file(path)));
    }
  }
  const auto files = render_report(bundles, requested);
  const auto dir = config.output_dir / "report";
  write_report(files, dir);
  fmt::print(run.out(), "wrote {}\n", (dir / "report.md").string());
  run.details() = {{"cells", requested.size()}, {"report_sha256", sha256_hex(files.markdown)}};
  run.write_manifest();
  return kExitOk;
}

int cmd_cache(Run& run, const Options& opts) {
  ResponseCache cache(run.config().cache_root);
  if (opts.cache_action == "stats") {
    const auto usage = cache.disk_usage();
    fmt::print(run.out(), "cache root: {}\nentries: {}\nbytes: {}\n", cache.root().string(), usage.entries, usage.bytes);
    run.details() = {{"action", "stats"}, {"entries", usage.entries}, {"bytes", usage.bytes}};
  } else {
    const auto removed = cache.clear();
    fmt::print(run.out(), "removed {} entries\n", removed);
    run.details() = {{"action", "clear"}, {"removed", removed}};
  }
  run.write_manifest(opts.cache_action);
  return kExitOk;
}

AnnotationServiceOptions service_options(const HarnessConfig& config) {
  fs::create_directories(config.annotation.batches_dir);
  return {config.annotation.batches_dir, config.annotation.log_path, config.annotation.static_dir};
}

int cmd_serve(Run& run, const Options& opts) {
  const auto& config = run.config();
  const std::string host = opts.host.empty() ? config.annotation.host : opts.host;
  const int port = opts.port > 0 ? opts.port : config.annotation.port;
  AnnotationService service(service_options(config));
  run.details() = {{"host", host}, {"port", port}, {"batches", service.batches().size()}};
  run.write_manifest();
  service.run(host, port);
  return kExitOk;
}

int cmd_create_batch(Run& run, const Options& opts) {
  const auto& config = run.config();
  BatchSpec spec;
  spec.batch_id = opts.batch;
  spec.kind = parse_annotation_kind(opts.kind);
  spec.raters = opts.raters;
  spec.overlap_fraction = opts.overlap;
  spec.seed = opts.seed;
  spec.limit = opts.limit;
  const auto& graph = run.graph();
  std::vector<TaskItem> candidates;
  if (spec.kind == AnnotationKind::response_rating) {
    if (opts.models.size() != 1 || opts.modes.size() != 1) {
      throw UsageError("rating batches need exactly one --model and one --mode");
    }
    const auto mode = parse_mode(opts.modes.front());
    const auto responses = load_cell_responses(run, opts.models.front(), mode);
    std::optional<VerdictStore> verdicts;
    const auto verdict_path = run.cell_path("verdicts", opts.models.front(), mode, ".jsonl");
    if (fs::exists(verdict_path)) verdicts = VerdictStore::load(verdict_path);
    candidates = rating_candidates(graph, responses, verdicts ? &*verdicts : nullptr,
                                   run.prompts().text(PromptId::rating_rubric_summary), opts.show_reference);
  } else {
    candidates = relation_candidates(graph, spec.kind);
  }
  const auto batch = create_task_batch(std::move(candidates), spec);
  const auto path = config.annotation.batches_dir / (batch.batch_id + ".json");
  batch.save(path);
  fmt::print(run.out(), "batch {}: {} tasks, {} overlap, written to {}\n", batch.batch_id, batch.items.size(),
             std::count_if(batch.items.begin(), batch.items.end(), [](const TaskItem& t) { return t.overlap; }),
             path.string());
  run.details() = {{"batch_id", batch.batch_id}, {"kind", opts.kind}, {"seed", spec.seed},
                   {"overlap_fraction", spec.overlap_fraction}, {"raters", spec.raters}, {"items", batch.items.size()}};
  run.write_manifest(batch.batch_id);
  return kExitOk;
}

TaskBatch load_batch(const HarnessConfig& config, const std::string& batch_id) {
  const auto path = config.annotation.batches_dir / (batch_id + ".json");
  if (!fs::exists(path)) throw LookupError(fmt::format("unknown batch '{}'", batch_id));
  return TaskBatch::load(path);
}

int cmd_agreement(Run& run, const Options& opts) {
  const auto& config = run.config();
  const auto batch = load_batch(config, opts.batch);
  AnnotationStore store(config.annotation.log_path);
  const auto summary = agreement_summary(batch, store);
  fmt::print(run.out(), "{}\n", summary.dump(2));
  run.details() = summary;
  run.write_manifest(opts.batch);
  return kExitOk;
}

int cmd_apply_rewrites(Run& run, const Options& opts) {
  const auto& config = run.config();
  const auto batch = load_batch(config, opts.batch);
  AnnotationStore store(config.annotation.log_path);
  const auto rewrites = collect_rewrites(batch, store);
  auto updated = apply_rewrites(run.graph(), rewrites);
  const fs::path out = opts.out.empty() ? config.output_dir / "rewritten_graph.json" : fs::path(opts.out);
  save_graph(updated, out);
  fmt::print(run.out(), "applied {} rewrites, wrote {}\n", rewrites.size(), out.string());
  run.details() = {{"batch_id", batch.batch_id}, {"rewrites", rewrites.size()}, {"output", out.string()},
                   {"new_graph_fingerprint", graph_fingerprint(updated)}};
  run.write_manifest();
  return kExitOk;
}

void configure_logging(const Options& opts, std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("depthwise", sink);
  logger->set_pattern("[%l] %v");
  logger->set_level(opts.verbose ? spdlog::level::debug : opts.quiet ? spdlog::level::warn : spdlog::level::info);
  spdlog::set_default_logger(logger);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options opts;
  CLI::App app{"Depth-of-knowledge question graph evaluation harness", "depthwise"};
  app.require_subcommand(1);
  app.add_option("-c,--config", opts.config, "Harness config file (JSON)");
  app.add_flag("-v,--verbose", opts.verbose, "Debug logging");
  app.add_flag("-q,--quiet", opts.quiet, "Warnings and errors only");

  auto* validate = app.add_subcommand("validate", "Check graph invariants and print depth counts");
  validate->add_option("--graph", opts.graph, "Graph file (defaults to the config dataset)");

  auto* build = app.add_subcommand("build", "Build a graph from depth-3 seed questions");
  build->add_option("--seeds", opts.seeds, "Seed file (defaults to the config seeds)");
  build->add_option("--out", opts.out, "Output graph file");

  auto* dedupe = app.add_subcommand("dedupe", "Remove near-duplicate questions from a graph");
  dedupe->add_option("--graph", opts.graph, "Graph file");
  dedupe->add_option("--out", opts.out, "Output graph file");

  auto* infer = app.add_subcommand("infer", "Answer every question with the configured models");
  auto* judge = app.add_subcommand("judge", "Score stored responses with the judge model");
  auto* metrics = app.add_subcommand("metrics", "Compute accuracy, discrepancy and memorization metrics");
  auto* report = app.add_subcommand("report", "Render report tables from stored metrics");
  for (auto* sub : {infer, judge, metrics, report}) {
    sub->add_option("--model", opts.models, "Model id (repeatable; defaults to every configured model)");
    sub->add_option("--mode", opts.modes, "zero_shot, prompt_gold, prompt_pred or multi_turn (repeatable)");
    if (sub != report) sub->add_option("--graph", opts.graph, "Graph file");
  }

  auto* serve = app.add_subcommand("serve-annotation", "Serve the annotation HTTP API");
  serve->add_option("--port", opts.port, "Port (defaults to the config value)");
  serve->add_option("--host", opts.host, "Bind address");

  auto* cache = app.add_subcommand("cache", "Inspect or clear the response cache");
  cache->add_option("action", opts.cache_action, "stats or clear")->required()->check(CLI::IsMember({"stats", "clear"}));

  auto* annotate = app.add_subcommand("annotate", "Annotation batches");
  annotate->require_subcommand(1);
  auto* create = annotate->add_subcommand("create-batch", "Sample and assign an annotation batch");
  create->add_option("--kind", opts.kind, "relation_c1, question_c2, question_c3, response_rating or question_rewrite")
      ->required();
  create->add_option("--rater", opts.raters, "Rater id (repeatable)")->required();
  create->add_option("--overlap", opts.overlap, "Fraction of items given to every rater");
  create->add_option("--seed", opts.seed, "Sampling seed");
  create->add_option("--limit", opts.limit, "Keep at most this many items");
  create->add_option("--batch-id", opts.batch, "Batch id (derived from the content when omitted)");
  create->add_option("--model", opts.models, "Model id for rating batches");
  create->add_option("--mode", opts.modes, "Inference mode for rating batches");
  create->add_option("--graph", opts.graph, "Graph file");
  create->add_flag("--show-reference", opts.show_reference, "Show reference answers to raters");
  auto* agreement = annotate->add_subcommand("agreement", "Print the agreement summary of a batch");
  agreement->add_option("--batch", opts.batch, "Batch id")->required();

  auto* rewrites = app.add_subcommand("apply-rewrites", "Merge human question rewrites into a new graph version");
  rewrites->add_option("--batch", opts.batch, "Rewrite batch id")->required();
  rewrites->add_option("--graph", opts.graph, "Graph file");
  rewrites->add_option("--out", opts.out, "Output graph file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  configure_logging(opts, err);
  auto* sub = app.get_subcommands().front();
  std::string name = sub->get_name();
  if (sub == annotate) name = "annotate-" + annotate->get_subcommands().front()->get_name();
  Run run(name, opts, out);
  try {
    if (sub == validate) return cmd_validate(run);
    if (sub == build) return cmd_build(run, opts);
    if (sub == dedupe) return cmd_dedupe(run, opts);
    if (sub == infer) return cmd_infer(run);
    if (sub == judge) return cmd_judge(run);
    if (sub == metrics) return cmd_metrics(run);
    if (sub == report) return cmd_report(run);
    if (sub == serve) return cmd_serve(run, opts);
    if (sub == cache) return cmd_cache(run, opts);
    if (sub == rewrites) return cmd_apply_rewrites(run, opts);
    if (create->parsed()) return cmd_create_batch(run, opts);
    if (agreement->parsed()) return cmd_agreement(run, opts);
  } catch (const UsageError& e) {
    fmt::print(err, "usage error: {}\n", e.what());
    return kExitUsage;
  } catch (const ConfigurationError& e) {
    fmt::print(err, "configuration error: {}\n", e.what());
    return kExitFailure;
  } catch (const CoverageError& e) {
    fmt::print(err, "coverage error: {}\n", e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace depthwise
