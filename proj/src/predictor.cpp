#include "compvid/predictor.hpp"

#include "compvid/errors.hpp"

namespace compvid {

namespace F = torch::nn::functional;

torch::Tensor message_pass(const torch::Tensor& nodes, const torch::Tensor& adjacency,
                           const EdgeTransform& node_to_edge, const EdgeTransform& edge_to_node) {
  if (nodes.dim() == 2) return message_pass(nodes.unsqueeze(0), adjacency, node_to_edge, edge_to_node).squeeze(0);
  if (nodes.dim() != 3) throw ArgumentError("message_pass: nodes must be [B,N,D] or [N,D]");
  const auto B = nodes.size(0), N = nodes.size(1), D = nodes.size(2);
  if (N < 1) throw ArgumentError("message_pass: need at least one node");
  InteractionGraph{adjacency}.check();
  if (adjacency.size(0) != N) {
    throw ArgumentError("message_pass: adjacency is over " + std::to_string(adjacency.size(0)) + " nodes, got " +
                        std::to_string(N));
  }
  const auto vi = nodes.unsqueeze(2).expand({B, N, N, D});
  const auto vj = nodes.unsqueeze(1).expand({B, N, N, D});
  const auto edges = node_to_edge(torch::cat({vi, vj}, -1));  // [B,N,N,H]
  const auto adj = adjacency.to(edges.dtype()).to(edges.device());
  const auto weights = (adj / adj.sum(1, true)).view({1, N, N, 1});
  return edge_to_node((edges * weights).sum(2));
}

InteractionBlockImpl::InteractionBlockImpl(std::int64_t in_dim, std::int64_t out_dim) : in_dim_(in_dim) {
  node_to_edge = register_module("node_to_edge", torch::nn::Linear(2 * in_dim, out_dim));
  edge_to_node = register_module("edge_to_node", torch::nn::Linear(out_dim, out_dim));
}

torch::Tensor InteractionBlockImpl::forward(const torch::Tensor& nodes, const torch::Tensor& adjacency) {
  if (nodes.size(-1) != in_dim_) {
    throw ArgumentError("interaction block expects node width " + std::to_string(in_dim_) + ", got " +
                        std::to_string(nodes.size(-1)));
  }
  auto act = [](const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)); };
  return message_pass(
      nodes, adjacency, [&](const torch::Tensor& x) { return act(node_to_edge(x)); },
      [&](const torch::Tensor& x) { return act(edge_to_node(x)); });
}

PredictorImpl::PredictorImpl(const ModelConfig& config)
    : latent_dim_(config.latent_dim), appearance_dim_(config.appearance_dim) {
  std::int64_t in = 2 + config.appearance_dim + config.latent_dim;
  for (int i = 0; i < config.num_blocks; ++i) {
    blocks_.push_back(register_module("block" + std::to_string(i), InteractionBlock(in, config.hidden_dim)));
    in = config.hidden_dim;
  }
  location_head = register_module("location_head", torch::nn::Linear(in, 2));
  appearance_head = register_module("appearance_head", torch::nn::Linear(in, config.appearance_dim));
  // Residual location updates start near zero motion.
  torch::NoGradGuard guard;
  location_head->weight.mul_(0.1);
  location_head->bias.zero_();
}

SceneState PredictorImpl::predict_step(const SceneState& scene, const torch::Tensor& z) {
  const auto B = scene.batch(), N = scene.num_entities();
  if (z.dim() != 2 || z.size(0) != B || z.size(1) != latent_dim_) {
    throw ArgumentError("predict_step: latent must be [" + std::to_string(B) + "," + std::to_string(latent_dim_) +
                        "], got " + std::string(c10::str(z.sizes())));
  }
  if (scene.appearance.size(-1) != appearance_dim_) throw ArgumentError("predict_step: appearance width mismatch");
  if (scene.graph.size() != N) throw ArgumentError("predict_step: graph size differs from entity count");
  auto x = torch::cat({scene.locations, scene.appearance, z.unsqueeze(1).expand({B, N, latent_dim_})}, -1);
  for (auto& block : blocks_) x = block->forward(x, scene.graph.adjacency);
  return {scene.locations + location_head(x), appearance_head(x), scene.graph};
}

std::vector<SceneState> PredictorImpl::rollout(const SceneState& scene0, const std::vector<torch::Tensor>& z_seq) {
  std::vector<SceneState> states;
  states.reserve(z_seq.size());
  const SceneState* current = &scene0;
  for (const auto& z : z_seq) {
    states.push_back(predict_step(*current, z));
    current = &states.back();
  }
  return states;
}

}  // namespace compvid
