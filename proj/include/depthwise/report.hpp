#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "depthwise/inference.hpp"
#include "depthwise/metrics.hpp"

namespace depthwise {

struct MetricsOptions {
  GatePolicy gate;
  double min_k_percent = 20.0;
  std::size_t min_k_window = 128;
};

/// Everything computed for one (model, mode) campaign.
struct MetricsBundle {
  std::string model_id;
  InferenceMode mode = InferenceMode::zero_shot;
  DepthAccuracy accuracy;
  std::optional<DiscrepancySummary> forward;
  std::optional<DiscrepancySummary> backward;
  std::vector<DiscrepancyRecord> forward_records;
  std::vector<DiscrepancyRecord> backward_records;
  MetricsOptions options;
  /// Min-K% of the model's prediction per question (nodes whose responses carry logprobs).
  std::map<std::string, double> min_k;
  std::optional<MemorizationGaps> memorization;

  /// Summary document at full precision.
  nlohmann::ordered_json to_json() const;
  static MetricsBundle from_json(const nlohmann::json& j);
};

/// Computes accuracy, both discrepancy directions, Min-K% and memorization gaps. Modes that
/// skip depth 1 get accuracy over depths 2 and 3 only and no discrepancies. Throws
/// CoverageError when scores are missing for nodes the mode answers.
MetricsBundle compute_metrics(const KnowledgeGraph& graph, const ScoreTable& scores, const ResponseStore& responses,
                              const std::string& model_id, InferenceMode mode, const MetricsOptions& options);

/// Per-record CSV tables for plotting.
std::string discrepancy_records_csv(const MetricsBundle& bundle);
std::string min_k_csv(const MetricsBundle& bundle);
std::string memorization_csv(const MetricsBundle& bundle);

struct ReportFiles {
  std::string markdown;
  std::string json;
  std::string performance_csv;
  std::string intensity_frequency_csv;
  std::string mode_comparison_csv;
};

/// Renders the requested (model, mode) cells in request order. Throws CoverageError naming
/// every cell without a bundle.
ReportFiles render_report(const std::vector<MetricsBundle>& bundles,
                          const std::vector<std::pair<std::string, InferenceMode>>& requested);

void write_report(const ReportFiles& files, const std::filesystem::path& dir);

}  // namespace depthwise
