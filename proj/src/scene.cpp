#include "compvid/scene.hpp"

#include "compvid/config.hpp"
#include "compvid/errors.hpp"

namespace compvid {

InteractionGraph InteractionGraph::fully_connected(std::int64_t n) {
  if (n < 1) throw ArgumentError("graph needs at least one node");
  return {torch::ones({n, n})};
}

InteractionGraph InteractionGraph::self_links(std::int64_t n) {
  if (n < 1) throw ArgumentError("graph needs at least one node");
  return {torch::eye(n)};
}

InteractionGraph InteractionGraph::from_edges(std::int64_t n, const std::vector<std::pair<int, int>>& edges) {
  auto g = self_links(n);
  auto acc = g.adjacency.accessor<float, 2>();
  for (auto [i, j] : edges) {
    if (i >= n || j >= n) {
      throw ArgumentError("edge " + std::to_string(i) + "-" + std::to_string(j) + " out of range for " +
                          std::to_string(n) + " nodes");
    }
    acc[i][j] = 1.0f;
    acc[j][i] = 1.0f;
  }
  return g;
}

InteractionGraph InteractionGraph::from_spec(const std::string& spec, std::int64_t n) {
  if (spec == "full") return fully_connected(n);
  if (spec == "self") return self_links(n);
  return from_edges(n, parse_edge_list(spec));
}

void InteractionGraph::check() const {
  if (!adjacency.defined() || adjacency.dim() != 2 || adjacency.size(0) != adjacency.size(1)) {
    throw ArgumentError("adjacency must be a square matrix");
  }
  const auto a = adjacency.to(torch::kFloat64);
  if (!torch::all((a == 0) | (a == 1)).item<bool>()) throw ArgumentError("adjacency must be binary");
  if (!torch::all(torch::diagonal(a) == 1).item<bool>()) throw ArgumentError("adjacency must include self-links");
}

SceneState SceneState::permuted(const std::vector<std::int64_t>& perm) const {
  const auto idx = torch::tensor(perm, torch::kLong);
  SceneState out;
  out.locations = locations.index_select(1, idx);
  out.appearance = appearance.index_select(1, idx);
  out.graph.adjacency = graph.adjacency.index_select(0, idx).index_select(1, idx);
  return out;
}

}  // namespace compvid
