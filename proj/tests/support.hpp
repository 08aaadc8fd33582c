#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <fmt/format.h>

#include "depthwise/graph.hpp"
#include "depthwise/metrics.hpp"

namespace depthwise::testing {

/// Directory removed on destruction.
class TempDir {
public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            fmt::format("depthwise-test-{}-{}", static_cast<long>(::getpid()), counter++);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

inline std::filesystem::path source_dir() { return DEPTHWISE_SOURCE_DIR; }
inline std::filesystem::path golden_dir() { return source_dir() / "tests" / "golden"; }

inline QuestionNode make_node(int depth, const std::string& text, const std::string& answer = "An answer.") {
  QuestionNode n;
  n.id = make_node_id(depth, text);
  n.depth = DepthLevel(depth);
  n.domain = "Test";
  n.text = text;
  n.reference_answer = answer;
  return n;
}

/// Random layered graph with at most `max_nodes` nodes. Every depth-2 and depth-3 node gets
/// 1..4 predecessors; some lower nodes may stay without successors.
inline KnowledgeGraph random_graph(std::mt19937_64& rng, std::size_t max_nodes = 30) {
  std::uniform_int_distribution<std::size_t> total_dist(3, max_nodes);
  const std::size_t total = total_dist(rng);
  std::size_t n3 = std::max<std::size_t>(1, total / 8);
  std::size_t n2 = std::max<std::size_t>(1, total / 3);
  std::size_t n1 = total - n2 - n3;
  if (n1 == 0) {
    n1 = 1;
    n2 = total - n1 - n3;
  }
  std::vector<QuestionNode> nodes;
  std::array<std::vector<std::string>, 3> by_depth;
  const std::array<std::size_t, 3> counts = {n1, n2, n3};
  for (int d = 1; d <= 3; ++d) {
    for (std::size_t i = 0; i < counts[d - 1]; ++i) {
      nodes.push_back(make_node(d, fmt::format("question {} at depth {} #{}", i, d, rng())));
      by_depth[d - 1].push_back(nodes.back().id);
    }
  }
  std::vector<KnowledgeEdge> edges;
  for (int d = 2; d <= 3; ++d) {
    const auto& lower = by_depth[d - 2];
    for (const auto& id : by_depth[d - 1]) {
      std::vector<std::string> pool = lower;
      std::shuffle(pool.begin(), pool.end(), rng);
      const std::size_t k = std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(4, pool.size()))(rng);
      for (std::size_t i = 0; i < k; ++i) edges.push_back({pool[i], id});
    }
  }
  return KnowledgeGraph(std::move(nodes), std::move(edges));
}

inline ScoreTable random_scores(std::mt19937_64& rng, const KnowledgeGraph& graph) {
  std::uniform_int_distribution<int> score(1, 5);
  ScoreTable out;
  for (const auto& n : graph.nodes()) out[n.id] = score(rng);
  return out;
}

}  // namespace depthwise::testing
