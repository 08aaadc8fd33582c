#include "depthwise/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <set>

namespace depthwise {

DepthAccuracy average_accuracy(const ScoreTable& scores, const KnowledgeGraph& graph, std::span<const int> depths) {
  DepthAccuracy out;
  std::vector<std::string> missing;
  std::array<double, 3> sums{};
  for (int depth : depths) {
    const auto idx = DepthLevel(depth).index();
    for (const auto& id : graph.ids_at_depth(depth)) {
      auto it = scores.find(id);
      if (it == scores.end()) {
        missing.push_back(id);
        continue;
      }
      sums[idx] += it->second;
      ++out.counts[idx];
    }
  }
  if (!missing.empty()) throw CoverageError("scores do not cover the graph", std::move(missing));
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t d = 0; d < 3; ++d) {
    if (out.counts[d] == 0) continue;
    out.per_depth[d] = sums[d] / static_cast<double>(out.counts[d]);
    total += sums[d];
    n += out.counts[d];
  }
  if (n == 0) throw DomainError("no scored nodes in scope");
  out.overall = total / static_cast<double>(n);
  return out;
}

double weighted_overall(std::span<const double> means, std::span<const std::size_t> counts) {
  if (means.size() != counts.size() || means.empty()) throw DomainError("means and counts must align");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    num += means[i] * static_cast<double>(counts[i]);
    den += static_cast<double>(counts[i]);
  }
  if (den == 0.0) throw DomainError("all counts are zero");
  return num / den;
}

std::string_view to_string(DiscrepancyDirection direction) {
  return direction == DiscrepancyDirection::forward ? "forward" : "backward";
}

std::string_view to_string(Transition transition) { return transition == Transition::d1_d2 ? "D1->D2" : "D2->D3"; }

GateOperator parse_gate_operator(std::string_view text) {
  if (text == ">=") return GateOperator::greater_equal;
  if (text == ">") return GateOperator::greater;
  throw ConfigurationError(fmt::format("gate operator must be \">=\" or \">\", got \"{}\"", text));
}

namespace {

DiscrepancyRecord make_record(const std::string& id, DiscrepancyDirection direction, Transition transition,
                              const std::vector<std::string>& neighbours, const ScoreTable& scores,
                              const GatePolicy& gate) {
  std::vector<std::string> missing;
  long sum = 0;
  for (const auto& n : neighbours) {
    auto it = scores.find(n);
    if (it == scores.end()) {
      missing.push_back(n);
    } else {
      sum += it->second;
    }
  }
  if (!scores.contains(id)) missing.insert(missing.begin(), id);
  if (!missing.empty()) throw CoverageError(fmt::format("cannot score {}", id), std::move(missing));
  const double mean = static_cast<double>(sum) / static_cast<double>(neighbours.size());
  const int own = scores.at(id);
  return {id, direction, transition, mean, own, std::max(0.0, (mean - own) / 4.0), gate.admits(mean)};
}

}  // namespace

DiscrepancyRecord node_forward_discrepancy(const std::string& question_id, const ScoreTable& scores,
                                           const KnowledgeGraph& graph, const GatePolicy& gate) {
  const int depth = graph.node(question_id).depth.value();
  if (depth == 1) throw DomainError(fmt::format("{} is at depth 1 and has no predecessors", question_id));
  const auto& preds = graph.predecessor_ids(question_id);
  if (preds.empty()) throw PreconditionError(fmt::format("{} has no direct predecessors", question_id));
  return make_record(question_id, DiscrepancyDirection::forward, depth == 2 ? Transition::d1_d2 : Transition::d2_d3,
                     preds, scores, gate);
}

DiscrepancyRecord node_backward_discrepancy(const std::string& question_id, const ScoreTable& scores,
                                            const KnowledgeGraph& graph, const GatePolicy& gate) {
  const int depth = graph.node(question_id).depth.value();
  if (depth == 3) throw DomainError(fmt::format("{} is at depth 3 and has no successors", question_id));
  const auto& succs = graph.successor_ids(question_id);
  if (succs.empty()) throw PreconditionError(fmt::format("{} has no direct successors", question_id));
  return make_record(question_id, DiscrepancyDirection::backward, depth == 1 ? Transition::d1_d2 : Transition::d2_d3,
                     succs, scores, gate);
}

std::vector<DiscrepancyRecord> discrepancy_records(const KnowledgeGraph& graph, const ScoreTable& scores,
                                                   DiscrepancyDirection direction, const GatePolicy& gate) {
  std::vector<DiscrepancyRecord> out;
  std::vector<std::string> missing;
  for (const auto& id : graph.sorted_ids()) {
    const int depth = graph.node(id).depth.value();
    const bool forward = direction == DiscrepancyDirection::forward;
    if ((forward && depth == 1) || (!forward && depth == 3)) continue;
    const auto& neighbours = forward ? graph.predecessor_ids(id) : graph.successor_ids(id);
    if (neighbours.empty()) continue;
    try {
      out.push_back(forward ? node_forward_discrepancy(id, scores, graph, gate)
                            : node_backward_discrepancy(id, scores, graph, gate));
    } catch (const CoverageError& e) {
      missing.insert(missing.end(), e.missing_ids().begin(), e.missing_ids().end());
    }
  }
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    throw CoverageError("scores do not cover the discrepancy neighbourhoods", std::move(missing));
  }
  return out;
}

namespace {

DiscrepancyStats summarize(const std::vector<const DiscrepancyRecord*>& records) {
  DiscrepancyStats s;
  s.n_records = records.size();
  double sum = 0.0;
  double positive_sum = 0.0;
  std::size_t positive = 0;
  for (const auto* r : records) {
    if (!r->gated_in) continue;
    ++s.n_gated;
    sum += r->value;
    if (r->value > 0.0) {
      ++positive;
      positive_sum += r->value;
    }
  }
  if (s.n_gated == 0) return s;
  s.average = sum / static_cast<double>(s.n_gated);
  s.frequency = static_cast<double>(positive) / static_cast<double>(s.n_gated);
  s.intensity = positive == 0 ? 0.0 : positive_sum / static_cast<double>(positive);
  return s;
}

}  // namespace

DiscrepancySummary aggregate_discrepancies(std::span<const DiscrepancyRecord> records) {
  if (!records.empty()) {
    const auto dir = records.front().direction;
    for (const auto& r : records) {
      if (r.direction != dir) throw PreconditionError("records mix forward and backward discrepancies");
    }
  }
  std::map<Transition, std::vector<const DiscrepancyRecord*>> groups{{Transition::d1_d2, {}}, {Transition::d2_d3, {}}};
  std::vector<const DiscrepancyRecord*> all;
  for (const auto& r : records) {
    groups[r.transition].push_back(&r);
    all.push_back(&r);
  }
  DiscrepancySummary out;
  for (const auto& [t, group] : groups) out.per_transition[t] = summarize(group);
  out.overall = summarize(all);
  return out;
}

double min_k_prob(std::span<const double> token_logprobs, double k_percent, std::size_t window) {
  if (token_logprobs.empty()) throw DomainError("min-k probability needs at least one token");
  if (!(k_percent > 0.0 && k_percent <= 100.0)) throw DomainError(fmt::format("k = {} outside (0, 100]", k_percent));
  if (window == 0) throw DomainError("window must be positive");
  const std::size_t n = std::min(window, token_logprobs.size());
  std::vector<double> lps(token_logprobs.begin(), token_logprobs.begin() + static_cast<std::ptrdiff_t>(n));
  for (double lp : lps) {
    if (!(lp <= 0.0)) throw DomainError(fmt::format("token logprob {} is not <= 0", lp));
  }
  const auto m = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(k_percent * static_cast<double>(n) / 100.0)));
  std::sort(lps.begin(), lps.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) sum += -lps[i];
  return sum / static_cast<double>(m);
}

double percentile_linear(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DomainError("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError(fmt::format("quantile {} outside [0, 1]", q));
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

std::string_view to_string(QuantileBucket bucket) {
  switch (bucket) {
    case QuantileBucket::bottom25: return "bottom25";
    case QuantileBucket::middle: return "middle";
    case QuantileBucket::top75: return "top75";
  }
  return "unknown";
}

QuantilePartition quantile_partition(const std::map<std::string, double>& values, double lower, double upper) {
  if (values.size() < 4) throw DomainError(fmt::format("quantile partition needs at least 4 values, got {}", values.size()));
  if (!(lower <= upper)) throw DomainError("lower quantile exceeds upper quantile");
  std::vector<double> sorted;
  sorted.reserve(values.size());
  for (const auto& [_, v] : values) sorted.push_back(v);
  std::sort(sorted.begin(), sorted.end());
  QuantilePartition out;
  out.lower_cut = percentile_linear(sorted, lower);
  out.upper_cut = percentile_linear(sorted, upper);
  out.degenerate = out.lower_cut == out.upper_cut;
  for (const auto& [id, v] : values) {
    if (v <= out.lower_cut) {
      out.buckets[id] = QuantileBucket::bottom25;
    } else if (v >= out.upper_cut) {
      out.buckets[id] = QuantileBucket::top75;
    } else {
      out.buckets[id] = QuantileBucket::middle;
    }
  }
  return out;
}

MemorizationGaps memorization_gap_records(const KnowledgeGraph& graph, const ScoreTable& scores,
                                          const std::map<std::string, double>& d3_min_k) {
  std::vector<std::string> missing;
  for (int depth : {2, 3}) {
    for (const auto& id : graph.ids_at_depth(depth)) {
      if (!scores.contains(id)) missing.push_back(id);
    }
  }
  if (!missing.empty()) throw CoverageError("scores do not cover depths 2 and 3", std::move(missing));
  std::map<std::string, double> minks;
  for (const auto& id : graph.ids_at_depth(3)) {
    auto it = d3_min_k.find(id);
    if (it == d3_min_k.end()) {
      missing.push_back(id);
    } else {
      minks[id] = it->second;
    }
  }
  if (!missing.empty()) throw CoverageError("Min-K% values do not cover depth 3", std::move(missing));

  MemorizationGaps out;
  out.partition = quantile_partition(minks);
  out.gaps_by_bucket = {{QuantileBucket::bottom25, {}}, {QuantileBucket::middle, {}}, {QuantileBucket::top75, {}}};
  for (const auto& d3 : graph.ids_at_depth(3)) {
    for (const auto& d2 : graph.predecessor_ids(d3)) {
      const double gap = (scores.at(d3) - scores.at(d2)) / 4.0;
      const auto bucket = out.partition.buckets.at(d3);
      out.records.push_back({d2, d3, gap, bucket});
      out.gaps_by_bucket[bucket].push_back(gap);
    }
  }
  return out;
}

double krippendorff_alpha_ordinal(const RatingMatrix& ratings) {
  std::size_t items = 0;
  for (const auto& row : ratings) items = std::max(items, row.size());

  // Pairable values per item.
  std::vector<std::vector<double>> units;
  for (std::size_t i = 0; i < items; ++i) {
    std::vector<double> values;
    for (const auto& row : ratings) {
      if (i < row.size() && row[i]) values.push_back(*row[i]);
    }
    if (values.size() >= 2) units.push_back(std::move(values));
  }
  if (units.size() < 2) {
    throw DomainError(fmt::format("agreement needs at least 2 items rated twice or more, got {}", units.size()));
  }

  std::set<double> distinct;
  for (const auto& u : units) distinct.insert(u.begin(), u.end());
  const std::vector<double> levels(distinct.begin(), distinct.end());
  const std::size_t k = levels.size();
  auto level_of = [&](double v) {
    return static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), v) - levels.begin());
  };

  // Coincidence matrix.
  std::vector<std::vector<double>> o(k, std::vector<double>(k, 0.0));
  for (const auto& u : units) {
    const double w = 1.0 / static_cast<double>(u.size() - 1);
    for (std::size_t a = 0; a < u.size(); ++a) {
      for (std::size_t b = 0; b < u.size(); ++b) {
        if (a != b) o[level_of(u[a])][level_of(u[b])] += w;
      }
    }
  }
  std::vector<double> n_c(k, 0.0);
  double n = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t d = 0; d < k; ++d) n_c[c] += o[c][d];
    n += n_c[c];
  }

  // Ordinal distance: (sum of marginals from c to d minus half the endpoints) squared.
  auto delta2 = [&](std::size_t c, std::size_t d) {
    if (c == d) return 0.0;
    const std::size_t lo = std::min(c, d);
    const std::size_t hi = std::max(c, d);
    double s = 0.0;
    for (std::size_t g = lo; g <= hi; ++g) s += n_c[g];
    s -= (n_c[lo] + n_c[hi]) / 2.0;
    return s * s;
  };

  double observed = 0.0;
  double expected = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t d = 0; d < k; ++d) {
      const double dd = delta2(c, d);
      observed += o[c][d] * dd;
      expected += n_c[c] * n_c[d] * dd;
    }
  }
  if (observed == 0.0) return 1.0;
  return 1.0 - (n - 1.0) * observed / expected;
}

}  // namespace depthwise
