#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthwise/graph.hpp"

namespace depthwise {

/// Judge scores (1..5) for one (model, mode) pair, keyed by question id.
using ScoreTable = std::map<std::string, int>;

// ---------------------------------------------------------------------------
// Accuracy

struct DepthAccuracy {
  std::array<std::optional<double>, 3> per_depth;  // empty when the depth has no nodes in scope
  std::array<std::size_t, 3> counts{};
  double overall = 0.0;
};

/// Per-depth means and the node-count-weighted overall mean over the nodes at `depths`.
/// Throws CoverageError listing every node without a score.
DepthAccuracy average_accuracy(const ScoreTable& scores, const KnowledgeGraph& graph,
                               std::span<const int> depths = std::array{1, 2, 3});

/// Sum(mean_i * count_i) / Sum(count_i). Throws DomainError on empty or mismatched input.
double weighted_overall(std::span<const double> means, std::span<const std::size_t> counts);

// ---------------------------------------------------------------------------
// Discrepancy

enum class DiscrepancyDirection { forward, backward };
enum class Transition { d1_d2, d2_d3 };

std::string_view to_string(DiscrepancyDirection direction);
std::string_view to_string(Transition transition);  // "D1->D2", "D2->D3"

enum class GateOperator { greater_equal, greater };

struct GatePolicy {
  double threshold = 4.0;
  GateOperator op = GateOperator::greater_equal;

  bool admits(double neighbor_mean) const {
    return op == GateOperator::greater_equal ? neighbor_mean >= threshold : neighbor_mean > threshold;
  }
};

GateOperator parse_gate_operator(std::string_view text);  // ">=" or ">"

struct DiscrepancyRecord {
  std::string question_id;
  DiscrepancyDirection direction;
  Transition transition;
  double neighbor_mean;
  int own_score;
  double value;  // max(0, (neighbor_mean - own_score) / 4)
  bool gated_in;
};

/// Against the direct predecessors of a depth-2 or depth-3 node.
DiscrepancyRecord node_forward_discrepancy(const std::string& question_id, const ScoreTable& scores,
                                           const KnowledgeGraph& graph, const GatePolicy& gate = {});
/// Against the direct successors of a depth-1 or depth-2 node.
DiscrepancyRecord node_backward_discrepancy(const std::string& question_id, const ScoreTable& scores,
                                            const KnowledgeGraph& graph, const GatePolicy& gate = {});

/// One record per node with at least one neighbour in `direction`, in id order.
std::vector<DiscrepancyRecord> discrepancy_records(const KnowledgeGraph& graph, const ScoreTable& scores,
                                                   DiscrepancyDirection direction, const GatePolicy& gate = {});

struct DiscrepancyStats {
  double average = 0.0;
  double intensity = 0.0;
  double frequency = 0.0;
  std::size_t n_gated = 0;
  std::size_t n_records = 0;
};

struct DiscrepancySummary {
  std::map<Transition, DiscrepancyStats> per_transition;  // both transitions always present
  DiscrepancyStats overall;
};

/// Average, intensity and frequency over the gated-in records, per transition and overall.
/// Throws PreconditionError when the records mix directions.
DiscrepancySummary aggregate_discrepancies(std::span<const DiscrepancyRecord> records);

// ---------------------------------------------------------------------------
// Min-K% probability and memorization

/// Mean negative log-likelihood of the max(1, floor(k% of n)) least likely tokens among the
/// first `window` tokens. Throws DomainError on empty input, k outside (0, 100], a zero
/// window, or a positive logprob.
double min_k_prob(std::span<const double> token_logprobs, double k_percent = 20.0, std::size_t window = 128);

/// Linear-interpolation percentile of an ascending sample, q in [0, 1].
double percentile_linear(std::span<const double> sorted, double q);

enum class QuantileBucket { bottom25, middle, top75 };

std::string_view to_string(QuantileBucket bucket);

struct QuantilePartition {
  std::map<std::string, QuantileBucket> buckets;
  double lower_cut = 0.0;
  double upper_cut = 0.0;
  bool degenerate = false;  // both cuts coincide
};

/// value <= lower percentile -> bottom25, else value >= upper percentile -> top75, else middle.
/// Throws DomainError for fewer than four values.
QuantilePartition quantile_partition(const std::map<std::string, double>& values, double lower = 0.25,
                                     double upper = 0.75);

struct MemorizationGapRecord {
  std::string d2_id;
  std::string d3_id;
  double gap;  // (f(d3) - f(d2)) / 4
  QuantileBucket bucket;
};

struct MemorizationGaps {
  std::vector<MemorizationGapRecord> records;
  std::map<QuantileBucket, std::vector<double>> gaps_by_bucket;
  QuantilePartition partition;
};

/// One record per depth-2 -> depth-3 edge, bucketed by the depth-3 question's Min-K% value.
MemorizationGaps memorization_gap_records(const KnowledgeGraph& graph, const ScoreTable& scores,
                                          const std::map<std::string, double>& d3_min_k);

// ---------------------------------------------------------------------------
// Agreement

/// Ratings matrix: rows are raters, columns are items, nullopt marks a missing rating.
using RatingMatrix = std::vector<std::vector<std::optional<double>>>;

/// Krippendorff's alpha with the ordinal difference function over the observed values.
/// Items with fewer than two ratings are ignored. Throws DomainError when fewer than two
/// items carry two or more ratings. Returns 1.0 when observed disagreement is zero.
double krippendorff_alpha_ordinal(const RatingMatrix& ratings);

}  // namespace depthwise
