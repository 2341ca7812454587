#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace compvid {

/// Interaction graph over N entities. adjacency[i][j] = 1 when node i pools
/// the edge message computed from (v_i, v_j). Self-links are always present.
struct InteractionGraph {
  torch::Tensor adjacency;  // [N, N] float32 in {0, 1}

  static InteractionGraph fully_connected(std::int64_t n);
  static InteractionGraph self_links(std::int64_t n);
  /// Undirected edges (both directions added) plus self-links, e.g. a skeleton.
  static InteractionGraph from_edges(std::int64_t n, const std::vector<std::pair<int, int>>& edges);
  /// "full", "self" or an edge list "0-1,1-2".
  static InteractionGraph from_spec(const std::string& spec, std::int64_t n);

  std::int64_t size() const { return adjacency.defined() ? adjacency.size(0) : 0; }
  /// Throws ArgumentError unless square, binary, with every self-link set.
  void check() const;
};

/// One entity: normalized 2D center and appearance vector.
struct EntityState {
  torch::Tensor location;    // [2]
  torch::Tensor appearance;  // [A]
};

/// Batched predictor state: B scenes of N entities sharing one graph.
struct SceneState {
  torch::Tensor locations;   // [B, N, 2]
  torch::Tensor appearance;  // [B, N, A]
  InteractionGraph graph;

  std::int64_t batch() const { return locations.size(0); }
  std::int64_t num_entities() const { return locations.size(1); }
  EntityState entity(std::int64_t b, std::int64_t n) const { return {locations[b][n], appearance[b][n]}; }

  /// Reorders entities (and the graph) by `perm`: new entity i is old perm[i].
  SceneState permuted(const std::vector<std::int64_t>& perm) const;
};

}  // namespace compvid
