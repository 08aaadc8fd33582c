#include "depthwise/report.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "depthwise/io_util.hpp"

namespace depthwise {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::array<const char*, 3> kDepthKeys = {"D1", "D2", "D3"};

bool covers_depth1(InferenceMode mode) {
  return mode == InferenceMode::zero_shot || mode == InferenceMode::multi_turn;
}

ordered_json stats_json(const DiscrepancyStats& s) {
  ordered_json j;
  j["average"] = s.average;
  j["intensity"] = s.intensity;
  j["frequency"] = s.frequency;
  j["n_gated"] = s.n_gated;
  j["n_records"] = s.n_records;
  return j;
}

DiscrepancyStats stats_from_json(const json& j) {
  return {j.at("average").get<double>(), j.at("intensity").get<double>(), j.at("frequency").get<double>(),
          j.at("n_gated").get<std::size_t>(), j.at("n_records").get<std::size_t>()};
}

ordered_json summary_json(const std::optional<DiscrepancySummary>& s) {
  if (!s) return nullptr;
  ordered_json j;
  for (const auto& [t, stats] : s->per_transition) j[std::string(to_string(t))] = stats_json(stats);
  j["overall"] = stats_json(s->overall);
  return j;
}

std::optional<DiscrepancySummary> summary_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  DiscrepancySummary s;
  for (auto t : {Transition::d1_d2, Transition::d2_d3}) s.per_transition[t] = stats_from_json(j.at(std::string(to_string(t))));
  s.overall = stats_from_json(j.at("overall"));
  return s;
}

QuantileBucket parse_bucket(const std::string& name) {
  for (auto b : {QuantileBucket::bottom25, QuantileBucket::middle, QuantileBucket::top75}) {
    if (to_string(b) == name) return b;
  }
  throw DataError(fmt::format("unknown quantile bucket '{}'", name));
}

}  // namespace

ordered_json MetricsBundle::to_json() const {
  ordered_json j;
  j["model_id"] = model_id;
  j["mode"] = std::string(to_string(mode));
  j["gate"] = {{"threshold", options.gate.threshold},
               {"operator", options.gate.op == GateOperator::greater_equal ? ">=" : ">"}};
  ordered_json acc;
  for (std::size_t d = 0; d < 3; ++d) {
    acc["per_depth"][kDepthKeys[d]] = accuracy.per_depth[d] ? ordered_json(*accuracy.per_depth[d]) : ordered_json(nullptr);
  }
  for (std::size_t d = 0; d < 3; ++d) acc["counts"][kDepthKeys[d]] = accuracy.counts[d];
  acc["overall"] = accuracy.overall;
  j["accuracy"] = std::move(acc);
  j["forward"] = summary_json(forward);
  j["backward"] = summary_json(backward);
  ordered_json mk;
  mk["k_percent"] = options.min_k_percent;
  mk["window"] = options.min_k_window;
  mk["target"] = "prediction";
  mk["values"] = ordered_json::object();
  for (const auto& [id, v] : min_k) mk["values"][id] = v;
  j["min_k"] = std::move(mk);
  if (memorization) {
    ordered_json m;
    m["lower_cut"] = memorization->partition.lower_cut;
    m["upper_cut"] = memorization->partition.upper_cut;
    m["degenerate"] = memorization->partition.degenerate;
    m["records"] = ordered_json::array();
    for (const auto& r : memorization->records) {
      m["records"].push_back(
          {{"d2_id", r.d2_id}, {"d3_id", r.d3_id}, {"gap", r.gap}, {"bucket", std::string(to_string(r.bucket))}});
    }
    j["memorization"] = std::move(m);
  } else {
    j["memorization"] = nullptr;
  }
  return j;
}

MetricsBundle MetricsBundle::from_json(const json& j) {
  try {
    MetricsBundle b;
    b.model_id = j.at("model_id").get<std::string>();
    b.mode = parse_mode(j.at("mode").get<std::string>());
    b.options.gate.threshold = j.at("gate").at("threshold").get<double>();
    b.options.gate.op = parse_gate_operator(j.at("gate").at("operator").get<std::string>());
    const auto& acc = j.at("accuracy");
    for (std::size_t d = 0; d < 3; ++d) {
      const auto& v = acc.at("per_depth").at(kDepthKeys[d]);
      if (!v.is_null()) b.accuracy.per_depth[d] = v.get<double>();
      b.accuracy.counts[d] = acc.at("counts").at(kDepthKeys[d]).get<std::size_t>();
    }
    b.accuracy.overall = acc.at("overall").get<double>();
    b.forward = summary_from_json(j.at("forward"));
    b.backward = summary_from_json(j.at("backward"));
    b.options.min_k_percent = j.at("min_k").at("k_percent").get<double>();
    b.options.min_k_window = j.at("min_k").at("window").get<std::size_t>();
    for (const auto& [id, v] : j.at("min_k").at("values").items()) b.min_k[id] = v.get<double>();
    if (!j.at("memorization").is_null()) {
      const auto& m = j.at("memorization");
      MemorizationGaps gaps;
      gaps.partition.lower_cut = m.at("lower_cut").get<double>();
      gaps.partition.upper_cut = m.at("upper_cut").get<double>();
      gaps.partition.degenerate = m.at("degenerate").get<bool>();
      gaps.gaps_by_bucket = {{QuantileBucket::bottom25, {}}, {QuantileBucket::middle, {}}, {QuantileBucket::top75, {}}};
      for (const auto& r : m.at("records")) {
        MemorizationGapRecord rec{r.at("d2_id").get<std::string>(), r.at("d3_id").get<std::string>(),
                                  r.at("gap").get<double>(), parse_bucket(r.at("bucket").get<std::string>())};
        gaps.partition.buckets[rec.d3_id] = rec.bucket;
        gaps.gaps_by_bucket[rec.bucket].push_back(rec.gap);
        gaps.records.push_back(std::move(rec));
      }
      b.memorization = std::move(gaps);
    }
    return b;
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed metrics document: {}", e.what()));
  }
}

MetricsBundle compute_metrics(const KnowledgeGraph& graph, const ScoreTable& scores, const ResponseStore& responses,
                              const std::string& model_id, InferenceMode mode, const MetricsOptions& options) {
  MetricsBundle b;
  b.model_id = model_id;
  b.mode = mode;
  b.options = options;
  const std::vector<int> depths = covers_depth1(mode) ? std::vector<int>{1, 2, 3} : std::vector<int>{2, 3};
  b.accuracy = average_accuracy(scores, graph, depths);
  if (covers_depth1(mode)) {
    b.forward_records = discrepancy_records(graph, scores, DiscrepancyDirection::forward, options.gate);
    b.backward_records = discrepancy_records(graph, scores, DiscrepancyDirection::backward, options.gate);
    b.forward = aggregate_discrepancies(b.forward_records);
    b.backward = aggregate_discrepancies(b.backward_records);
  }
  for (const auto& r : responses.sorted()) {
    if (!r.token_logprobs || r.token_logprobs->empty()) continue;
    std::vector<double> lps;
    lps.reserve(r.token_logprobs->size());
    for (const auto& t : *r.token_logprobs) lps.push_back(t.logprob);
    b.min_k[r.question_id] = min_k_prob(lps, options.min_k_percent, options.min_k_window);
  }
  const auto d3 = graph.ids_at_depth(3);
  const bool have_all = std::all_of(d3.begin(), d3.end(), [&](const auto& id) { return b.min_k.contains(id); });
  if (d3.size() >= 4 && have_all) {
    b.memorization = memorization_gap_records(graph, scores, b.min_k);
  } else {
    spdlog::info("{} / {}: memorization gaps need Min-K% values for at least 4 depth-3 predictions", model_id,
                 to_string(mode));
  }
  return b;
}

std::string discrepancy_records_csv(const MetricsBundle& bundle) {
  std::string out = "question_id,direction,transition,neighbor_mean,own_score,value,gated_in\n";
  for (const auto* records : {&bundle.forward_records, &bundle.backward_records}) {
    for (const auto& r : *records) {
      out += fmt::format("{},{},{},{},{},{},{}\n", r.question_id, to_string(r.direction), to_string(r.transition),
                         r.neighbor_mean, r.own_score, r.value, r.gated_in ? "true" : "false");
    }
  }
  return out;
}

std::string min_k_csv(const MetricsBundle& bundle) {
  std::string out = "question_id,k_percent,window,min_k\n";
  for (const auto& [id, v] : bundle.min_k) {
    out += fmt::format("{},{},{},{}\n", id, bundle.options.min_k_percent, bundle.options.min_k_window, v);
  }
  return out;
}

std::string memorization_csv(const MetricsBundle& bundle) {
  std::string out = "d2_id,d3_id,gap,bucket\n";
  if (!bundle.memorization) return out;
  for (const auto& r : bundle.memorization->records) {
    out += fmt::format("{},{},{},{}\n", r.d2_id, r.d3_id, r.gap, to_string(r.bucket));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report rendering

namespace {

std::string cell(const std::optional<double>& v) { return v ? format_fixed(*v, 3) : "n/a"; }

std::string csv_cell(const std::optional<double>& v) { return v ? format_fixed(*v, 3) : ""; }

std::optional<double> stat(const std::optional<DiscrepancySummary>& s, std::optional<Transition> t,
                           double DiscrepancyStats::*field) {
  if (!s) return std::nullopt;
  return t ? s->per_transition.at(*t).*field : s->overall.*field;
}

std::string markdown_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::string out = "| " + fmt::format("{}", fmt::join(header, " | ")) + " |\n|";
  for (std::size_t i = 0; i < header.size(); ++i) out += i < 2 ? "---|" : "---:|";
  out += "\n";
  for (const auto& r : rows) out += "| " + fmt::format("{}", fmt::join(r, " | ")) + " |\n";
  return out;
}

std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::string out = fmt::format("{}\n", fmt::join(header, ","));
  for (const auto& r : rows) out += fmt::format("{}\n", fmt::join(r, ","));
  return out;
}

const std::array<std::optional<Transition>, 3> kTransitionColumns = {Transition::d2_d3, Transition::d1_d2,
                                                                     std::nullopt};

}  // namespace

ReportFiles render_report(const std::vector<MetricsBundle>& bundles,
                          const std::vector<std::pair<std::string, InferenceMode>>& requested) {
  std::vector<const MetricsBundle*> cells;
  std::vector<std::string> missing;
  for (const auto& [model, mode] : requested) {
    auto it = std::find_if(bundles.begin(), bundles.end(),
                           [&](const MetricsBundle& b) { return b.model_id == model && b.mode == mode; });
    if (it == bundles.end()) {
      missing.push_back(fmt::format("{}/{}", model, to_string(mode)));
    } else {
      cells.push_back(&*it);
    }
  }
  if (!missing.empty()) throw CoverageError("report cells have no metrics", std::move(missing));

  // Performance.
  const std::vector<std::string> perf_header = {"Model",      "Mode",       "D1",  "D2",         "D3",         "Overall",
                                                "Fwd D2->D3", "Fwd D1->D2", "Fwd", "Bwd D2->D3", "Bwd D1->D2", "Bwd"};
  std::vector<std::vector<std::string>> perf_md;
  std::vector<std::vector<std::string>> perf_csv;
  for (const auto* b : cells) {
    std::vector<std::optional<double>> values;
    for (std::size_t d = 0; d < 3; ++d) values.push_back(b->accuracy.per_depth[d]);
    values.emplace_back(b->accuracy.overall);
    for (const auto* s : {&b->forward, &b->backward}) {
      for (const auto& t : kTransitionColumns) values.push_back(stat(*s, t, &DiscrepancyStats::average));
    }
    std::vector<std::string> md = {b->model_id, std::string(to_string(b->mode))};
    std::vector<std::string> csv = md;
    for (const auto& v : values) {
      md.push_back(cell(v));
      csv.push_back(csv_cell(v));
    }
    perf_md.push_back(std::move(md));
    perf_csv.push_back(std::move(csv));
  }

  // Intensity and frequency.
  const std::vector<std::string> decomp_header = {
      "Model",      "Mode",       "Avg D2->D3", "Avg D1->D2",  "Avg",         "Int D2->D3",
      "Int D1->D2", "Int",        "Freq D2->D3", "Freq D1->D2", "Freq"};
  std::array<std::vector<std::vector<std::string>>, 2> decomp_md;
  std::vector<std::vector<std::string>> decomp_csv;
  for (int dir = 0; dir < 2; ++dir) {
    for (const auto* b : cells) {
      const auto& s = dir == 0 ? b->forward : b->backward;
      if (!s) continue;
      std::vector<std::string> md = {b->model_id, std::string(to_string(b->mode))};
      std::vector<std::string> csv = {b->model_id, std::string(to_string(b->mode)), dir == 0 ? "forward" : "backward"};
      for (auto field : {&DiscrepancyStats::average, &DiscrepancyStats::intensity, &DiscrepancyStats::frequency}) {
        for (const auto& t : kTransitionColumns) {
          md.push_back(cell(stat(s, t, field)));
          csv.push_back(csv_cell(stat(s, t, field)));
        }
      }
      for (const auto& t : kTransitionColumns) {
        csv.push_back(std::to_string(t ? s->per_transition.at(*t).n_gated : s->overall.n_gated));
      }
      decomp_md[dir].push_back(std::move(md));
      decomp_csv.push_back(std::move(csv));
    }
  }

  // Guided modes against zero-shot.
  std::vector<std::vector<std::string>> mode_md;
  std::vector<std::vector<std::string>> mode_csv;
  for (const auto* b : cells) {
    if (b->mode == InferenceMode::zero_shot) continue;
    auto base = std::find_if(cells.begin(), cells.end(), [&](const MetricsBundle* o) {
      return o->model_id == b->model_id && o->mode == InferenceMode::zero_shot;
    });
    if (base == cells.end()) continue;
    std::vector<std::string> md = {b->model_id, std::string(to_string(b->mode))};
    std::vector<std::string> csv = md;
    for (std::size_t d = 0; d < 3; ++d) {
      std::optional<double> delta;
      if (b->accuracy.per_depth[d] && (*base)->accuracy.per_depth[d]) {
        delta = *b->accuracy.per_depth[d] - *(*base)->accuracy.per_depth[d];
      }
      md.push_back(cell(delta));
      csv.push_back(csv_cell(delta));
    }
    mode_md.push_back(std::move(md));
    mode_csv.push_back(std::move(csv));
  }

  ReportFiles files;
  std::string& md = files.markdown;
  md += "# Evaluation report\n\n";
  md += "## Depthwise performance\n\n";
  md += "Judge scores on a 1-5 scale. Fwd and Bwd are average forward and backward discrepancies over gated "
        "questions.\n\n";
  md += markdown_table(perf_header, perf_md);
  for (int dir = 0; dir < 2; ++dir) {
    md += fmt::format("\n## {} discrepancy: intensity and frequency\n\n", dir == 0 ? "Forward" : "Backward");
    if (decomp_md[dir].empty()) {
      md += "No campaign covers all three depths.\n";
    } else {
      md += markdown_table(decomp_header, decomp_md[dir]);
    }
  }
  md += "\n## Guided modes against zero-shot\n\n";
  if (mode_md.empty()) {
    md += "No guided mode has a zero-shot baseline in this report.\n";
  } else {
    md += "Per-depth accuracy of each mode minus zero-shot accuracy of the same model.\n\n";
    md += markdown_table({"Model", "Mode", "Delta D1", "Delta D2", "Delta D3"}, mode_md);
  }
  md += "\n## Notes\n\n";
  if (!cells.empty()) {
    const auto& gate = cells.front()->options.gate;
    md += fmt::format("- Discrepancy gate: neighbour mean {} {}.\n", gate.op == GateOperator::greater_equal ? ">=" : ">",
                      format_fixed(gate.threshold, 3));
  }
  md += "- prompt_gold and prompt_pred have no depth-1 questions to answer.\n";
  if (std::any_of(cells.begin(), cells.end(), [](const auto* b) { return b->mode == InferenceMode::multi_turn; })) {
    md += "- multi_turn answers depth-1 questions with the single-turn zero-shot prompt.\n";
  }

  ordered_json j;
  j["cells"] = ordered_json::array();
  for (const auto* b : cells) j["cells"].push_back(b->to_json());
  files.json = j.dump(2) + "\n";

  files.performance_csv = csv_table({"model", "mode", "d1", "d2", "d3", "overall", "fwd_d2_d3", "fwd_d1_d2", "fwd",
                                     "bwd_d2_d3", "bwd_d1_d2", "bwd"},
                                    perf_csv);
  files.intensity_frequency_csv =
      csv_table({"model", "mode", "direction", "avg_d2_d3", "avg_d1_d2", "avg", "int_d2_d3", "int_d1_d2", "int",
                 "freq_d2_d3", "freq_d1_d2", "freq", "n_gated_d2_d3", "n_gated_d1_d2", "n_gated"},
                decomp_csv);
  files.mode_comparison_csv = csv_table({"model", "mode", "delta_d1", "delta_d2", "delta_d3"}, mode_csv);
  return files;
}

void write_report(const ReportFiles& files, const std::filesystem::path& dir) {
  write_text_file(dir / "report.md", files.markdown);
  write_text_file(dir / "report.json", files.json);
  write_text_file(dir / "performance.csv", files.performance_csv);
  write_text_file(dir / "intensity_frequency.csv", files.intensity_frequency_csv);
  write_text_file(dir / "mode_comparison.csv", files.mode_comparison_csv);
}

}  // namespace depthwise
