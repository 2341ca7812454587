#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <torch/torch.h>

#include "compvid/config.hpp"
#include "compvid/scene.hpp"

namespace compvid {

using EdgeTransform = std::function<torch::Tensor(const torch::Tensor&)>;

/// One round of node -> edge -> node message passing.
///
///   e_ij = node_to_edge(v_i ++ v_j)          for every (i, j) with adjacency[i][j] = 1
///   v_i' = edge_to_node(mean_j e_ij)
///
/// nodes: [B, N, D] (or [N, D]); adjacency: [N, N] with self-links.
torch::Tensor message_pass(const torch::Tensor& nodes, const torch::Tensor& adjacency,
                           const EdgeTransform& node_to_edge, const EdgeTransform& edge_to_node);

/// Message passing with a single fully connected layer (+ leaky ReLU 0.2) on
/// each side.
class InteractionBlockImpl : public torch::nn::Module {
 public:
  InteractionBlockImpl(std::int64_t in_dim, std::int64_t out_dim);
  torch::Tensor forward(const torch::Tensor& nodes, const torch::Tensor& adjacency);

  std::int64_t in_dim() const { return in_dim_; }
  torch::nn::Linear node_to_edge{nullptr};
  torch::nn::Linear edge_to_node{nullptr};

 private:
  std::int64_t in_dim_;
};
TORCH_MODULE(InteractionBlock);

/// Maps ({(b_n, a_n)}, z_t) to the entity states at the next step. The latent
/// is concatenated to every node before the first block only.
class PredictorImpl : public torch::nn::Module {
 public:
  explicit PredictorImpl(const ModelConfig& config);

  SceneState predict_step(const SceneState& scene, const torch::Tensor& z);
  /// states 1..T for z_seq[0..T-1]; no ground truth enters the loop.
  std::vector<SceneState> rollout(const SceneState& scene0, const std::vector<torch::Tensor>& z_seq);

  std::int64_t latent_dim() const { return latent_dim_; }
  std::int64_t appearance_dim() const { return appearance_dim_; }
  const std::vector<InteractionBlock>& blocks() const { return blocks_; }

 private:
  std::int64_t latent_dim_;
  std::int64_t appearance_dim_;
  std::vector<InteractionBlock> blocks_;
  torch::nn::Linear location_head{nullptr};
  torch::nn::Linear appearance_head{nullptr};
};
TORCH_MODULE(Predictor);

}  // namespace compvid
