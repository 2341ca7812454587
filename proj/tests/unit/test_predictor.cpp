#include <doctest.h>

#include "compvid/errors.hpp"
#include "compvid/predictor.hpp"
#include "support.hpp"

using namespace compvid;

namespace {

SceneState random_scene(std::int64_t B, std::int64_t N, std::int64_t A, torch::Dtype dtype = torch::kFloat32) {
  return {torch::rand({B, N, 2}, dtype), torch::randn({B, N, A}, dtype), InteractionGraph::fully_connected(N)};
}

}  // namespace

TEST_CASE("message passing hand-evaluated example") {
  const auto nodes = torch::tensor({{1.0}, {3.0}}, torch::kFloat64);
  const auto sum_halves = [](const torch::Tensor& x) { return x.narrow(-1, 0, 1) + x.narrow(-1, 1, 1); };
  const auto identity = [](const torch::Tensor& x) { return x; };
  const auto out = message_pass(nodes, InteractionGraph::fully_connected(2).adjacency, sum_halves, identity);
  CHECK(out[0][0].item<double>() == doctest::Approx(3.0));
  CHECK(out[1][0].item<double>() == doctest::Approx(5.0));
}

TEST_CASE("self-link-only message passing with the left half is the identity") {
  const auto nodes = torch::randn({4, 3}, torch::kFloat64);
  const auto left = [](const torch::Tensor& x) { return x.narrow(-1, 0, 3); };
  const auto identity = [](const torch::Tensor& x) { return x; };
  const auto out = message_pass(nodes, InteractionGraph::self_links(4).adjacency, left, identity);
  CHECK(torch::equal(out, nodes));
}

TEST_CASE("message passing is permutation equivariant") {
  torch::manual_seed(1);
  InteractionBlock block(4, 6);
  const auto nodes = torch::randn({2, 5, 4});
  const auto adj = InteractionGraph::fully_connected(5).adjacency;
  const auto perm = torch::tensor({3, 0, 4, 1, 2}, torch::kLong);
  const auto a = block->forward(nodes.index_select(1, perm), adj);
  const auto b = block->forward(nodes, adj).index_select(1, perm);
  CHECK(torch::allclose(a, b, 1e-6, 1e-6));
}

TEST_CASE("message passing errors") {
  InteractionBlock block(4, 6);
  CHECK_THROWS_AS(block->forward(torch::randn({3, 5}), InteractionGraph::fully_connected(3).adjacency), ArgumentError);
  CHECK_THROWS_AS(block->forward(torch::randn({3, 4}), InteractionGraph::fully_connected(2).adjacency), ArgumentError);
  auto no_self = torch::ones({3, 3});
  no_self[1][1] = 0;
  CHECK_THROWS_AS(block->forward(torch::randn({3, 4}), no_self), ArgumentError);
}

TEST_CASE("message_pass_block gradients match central differences") {
  torch::manual_seed(2);
  InteractionBlock block(4, 4);
  block->to(torch::kFloat64);
  const auto adj = InteractionGraph::fully_connected(2).adjacency;
  const auto nodes = torch::randn({2, 4}, torch::kFloat64);
  CHECK(testutil::gradient_error([&](const torch::Tensor& x) { return block->forward(x, adj); }, nodes) <= 1e-3);

  auto& w = block->node_to_edge->weight;
  const auto w0 = w.detach().clone();
  const double err = testutil::gradient_error(
      [&](const torch::Tensor& wx) {
        const auto out = message_pass(
            nodes, adj,
            [&](const torch::Tensor& x) {
              return torch::leaky_relu(torch::nn::functional::linear(x, wx, block->node_to_edge->bias), 0.2);
            },
            [&](const torch::Tensor& x) { return torch::leaky_relu(block->edge_to_node(x), 0.2); });
        return out;
      },
      w0);
  CHECK(err <= 1e-3);
}

TEST_CASE("predict_step shapes, purity and errors") {
  torch::manual_seed(3);
  auto cfg = testutil::small_config();
  Predictor p(cfg);
  const auto scene = random_scene(2, 3, cfg.appearance_dim);
  const auto z = torch::randn({2, cfg.latent_dim});
  const auto a = p->predict_step(scene, z), b = p->predict_step(scene, z);
  CHECK(a.locations.sizes() == scene.locations.sizes());
  CHECK(a.appearance.sizes() == scene.appearance.sizes());
  CHECK(torch::equal(a.graph.adjacency, scene.graph.adjacency));
  CHECK(torch::equal(a.locations, b.locations));
  CHECK(torch::equal(a.appearance, b.appearance));
  CHECK_THROWS_AS(p->predict_step(scene, torch::randn({2, cfg.latent_dim + 1})), ArgumentError);
  CHECK(p->blocks().size() == 4u);

  // Same parameters at N=5.
  const auto five = p->predict_step(random_scene(2, 5, cfg.appearance_dim), z);
  CHECK(five.locations.size(1) == 5);
}

TEST_CASE("rollout lengths and determinism") {
  torch::manual_seed(4);
  auto cfg = testutil::small_config();
  Predictor p(cfg);
  const auto scene = random_scene(1, 3, cfg.appearance_dim);
  CHECK(p->rollout(scene, {}).empty());
  std::vector<torch::Tensor> zs;
  for (int t = 0; t < 16; ++t) zs.push_back(torch::randn({1, cfg.latent_dim}));
  const auto a = p->rollout(scene, zs), b = p->rollout(scene, zs);
  REQUIRE(a.size() == 16u);
  for (std::size_t t = 0; t < a.size(); ++t) {
    CHECK(a[t].num_entities() == 3);
    CHECK(torch::isfinite(a[t].locations).all().item<bool>());
    CHECK(torch::equal(a[t].locations, b[t].locations));
  }
}

TEST_CASE("rollout is permutation equivariant") {
  torch::manual_seed(5);
  auto cfg = testutil::small_config();
  Predictor p(cfg);
  const auto scene = random_scene(1, 4, cfg.appearance_dim);
  std::vector<torch::Tensor> zs;
  for (int t = 0; t < 5; ++t) zs.push_back(torch::randn({1, cfg.latent_dim}));
  const std::vector<std::int64_t> perm{2, 0, 3, 1};
  const auto a = p->rollout(scene.permuted(perm), zs);
  const auto b = p->rollout(scene, zs);
  for (std::size_t t = 0; t < zs.size(); ++t) {
    const auto pb = b[t].permuted(perm);
    CHECK(torch::allclose(a[t].locations, pb.locations, 1e-5, 1e-5));
    CHECK(torch::allclose(a[t].appearance, pb.appearance, 1e-5, 1e-5));
  }
}

TEST_CASE("self-link graphs keep entities independent") {
  torch::manual_seed(6);
  auto cfg = testutil::small_config();
  Predictor p(cfg);
  auto scene = random_scene(1, 3, cfg.appearance_dim);
  scene.graph = InteractionGraph::self_links(3);
  std::vector<torch::Tensor> zs;
  for (int t = 0; t < 4; ++t) zs.push_back(torch::randn({1, cfg.latent_dim}));
  auto perturbed = scene;
  perturbed.appearance = scene.appearance.clone();
  perturbed.appearance[0][1] += 5.0;
  perturbed.locations = scene.locations.clone();
  perturbed.locations[0][1] += 0.2;
  const auto a = p->rollout(scene, zs), b = p->rollout(perturbed, zs);
  for (std::size_t t = 0; t < zs.size(); ++t) {
    for (int n : {0, 2}) {
      CHECK(torch::equal(a[t].locations[0][n], b[t].locations[0][n]));
      CHECK(torch::equal(a[t].appearance[0][n], b[t].appearance[0][n]));
    }
    CHECK_FALSE(torch::equal(a[t].locations[0][1], b[t].locations[0][1]));
  }
}

TEST_CASE("interaction graphs") {
  const auto g = InteractionGraph::from_edges(4, {{0, 1}, {1, 2}});
  CHECK(g.adjacency[0][1].item<float>() == 1);
  CHECK(g.adjacency[1][0].item<float>() == 1);
  CHECK(g.adjacency[0][2].item<float>() == 0);
  CHECK(g.adjacency[3][3].item<float>() == 1);
  CHECK_THROWS_AS(InteractionGraph::from_edges(2, {{0, 2}}), ArgumentError);
  CHECK(torch::equal(InteractionGraph::from_spec("self", 3).adjacency, torch::eye(3)));
  CHECK(torch::equal(InteractionGraph::from_spec("full", 3).adjacency, torch::ones({3, 3})));
}
