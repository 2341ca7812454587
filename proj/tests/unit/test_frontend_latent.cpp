#include <doctest.h>

#include "compvid/errors.hpp"
#include "compvid/frontend.hpp"
#include "compvid/latent.hpp"
#include "support.hpp"

using namespace compvid;

TEST_CASE("crop_entities: identity crop, zero padding and errors") {
  const auto frames = torch::rand({1, 3, 32, 32});
  const auto full = crop_entities(frames, torch::tensor({{{0.5f, 0.5f}}}), 32);
  CHECK(torch::equal(full[0][0], frames[0]));

  const auto corner = crop_entities(frames, torch::tensor({{{0.0f, 0.0f}}}), 8);
  CHECK(corner[0][0].narrow(1, 0, 4).abs().max().item<float>() == 0.0f);
  CHECK(torch::equal(corner[0][0].narrow(1, 4, 4).narrow(2, 4, 4), frames[0].narrow(1, 0, 4).narrow(2, 0, 4)));

  CHECK_THROWS_AS(crop_entities(frames, torch::zeros({1, 0, 2}), 8), ArgumentError);
  CHECK_THROWS_AS(crop_entities(frames, torch::tensor({{{0.5f, 0.5f}}}), 0), ArgumentError);
}

TEST_CASE("encode_entities shapes and purity") {
  torch::manual_seed(1);
  ModelConfig cfg;
  Frontend fe(cfg);
  auto frame = torch::zeros({1, 3, 64, 64});
  // Two identical red squares.
  frame[0][0].narrow(0, 10, 8).narrow(1, 10, 8).fill_(1.0);
  frame[0][0].narrow(0, 40, 8).narrow(1, 40, 8).fill_(1.0);
  const auto centers = torch::tensor({{{14 / 64.0f, 14 / 64.0f}, {44 / 64.0f, 44 / 64.0f}, {0.5f, 0.2f}}});
  const auto a = fe->encode_entities(frame, centers);
  CHECK(a.sizes() == torch::IntArrayRef({1, 3, 32}));
  CHECK(torch::allclose(a[0][0], a[0][1], 0, 1e-6));
  CHECK_FALSE(torch::allclose(a[0][0], a[0][2], 0, 1e-6));
}

TEST_CASE("encode_background grids, purity and sanity") {
  torch::manual_seed(2);
  const std::vector<std::pair<FusionLevel, std::int64_t>> levels{
      {FusionLevel::Late, 64}, {FusionLevel::Mid, 32}, {FusionLevel::Early, 16}, {FusionLevel::Pixel, 64}};
  for (const auto& [fusion, size] : levels) {
    ModelConfig cfg;
    cfg.fusion = fusion;
    Frontend fe(cfg);
    const auto f = torch::rand({2, 3, 64, 64});
    const auto a = fe->encode_background(f), b = fe->encode_background(f);
    const auto C = fusion == FusionLevel::Pixel ? 3 : cfg.feature_channels;
    CHECK(a.sizes() == torch::IntArrayRef({2, C, size, size}));
    CHECK(torch::equal(a, b));
    CHECK(torch::isfinite(fe->encode_background(torch::zeros({1, 3, 64, 64}))).all().item<bool>());
    CHECK_THROWS_AS(fe->encode_background(torch::rand({1, 3, 32, 64})), ArgumentError);
  }
}

TEST_CASE("posterior shapes, purity and positive sigma") {
  torch::manual_seed(3);
  PosteriorEncoder q(8);
  const auto a = torch::rand({3, 3, 32, 32}), b = torch::rand({3, 3, 32, 32});
  const auto g1 = q(a, b), g2 = q(a, b);
  CHECK(g1.mean.sizes() == torch::IntArrayRef({3, 8}));
  CHECK(g1.dim() == 8);
  CHECK(torch::equal(g1.mean, g2.mean));
  CHECK(torch::equal(g1.log_sigma, g2.log_sigma));
  CHECK((g1.sigma() > 0).all().item<bool>());
  CHECK_THROWS_AS(q(a, torch::rand({3, 3, 32, 16})), ArgumentError);
}

TEST_CASE("reparameterized sample") {
  const GaussianParams g{torch::randn({2, 8}, torch::kFloat64), torch::randn({2, 8}, torch::kFloat64)};
  CHECK(torch::equal(sample(g, torch::zeros({2, 8}, torch::kFloat64)), g.mean));
  const auto e = torch::randn({2, 8}, torch::kFloat64);
  const GaussianParams std_normal{torch::zeros({2, 8}, torch::kFloat64), torch::zeros({2, 8}, torch::kFloat64)};
  CHECK(torch::equal(sample(std_normal, e), e));
  CHECK_THROWS_AS(sample(g, torch::zeros({2, 7})), ArgumentError);
}

TEST_CASE("reparameterized sample gradients") {
  const auto mu = torch::randn({1, 8}, torch::kFloat64);
  const auto sigma = torch::rand({1, 8}, torch::kFloat64) + 0.5;
  const auto noise = torch::randn({1, 8}, torch::kFloat64);
  const auto weights = torch::randn({1, 8}, torch::kFloat64);
  CHECK(testutil::gradient_error(
            [&](const torch::Tensor& m) { return sample({m, sigma.log()}, noise) * weights; }, mu) <= 1e-3);
  CHECK(testutil::gradient_error(
            [&](const torch::Tensor& s) { return sample({mu, s.log()}, noise) * weights; }, sigma) <= 1e-3);
  // d u / d mu = I and d u / d sigma = diag(noise).
  auto m = mu.clone().requires_grad_(true);
  auto s = sigma.clone().requires_grad_(true);
  const auto u = sample({m, s.log()}, noise);
  const auto grads = torch::autograd::grad({u.sum()}, {m, s});
  CHECK(torch::allclose(grads[0], torch::ones_like(mu)));
  CHECK(torch::allclose(grads[1], noise));
}

TEST_CASE("closed-form KL") {
  const GaussianParams zero{torch::zeros({1, 8}, torch::kFloat64), torch::zeros({1, 8}, torch::kFloat64)};
  CHECK(std::abs(kl_to_standard(zero).item<double>()) <= 1e-9);
  auto mean = torch::zeros({1, 8}, torch::kFloat64);
  mean[0][0] = 1.0;
  CHECK(kl_to_standard({mean, torch::zeros({1, 8}, torch::kFloat64)}).item<double>() == doctest::Approx(0.5));

  torch::manual_seed(4);
  const GaussianParams q{torch::randn({4, 8}, torch::kFloat64), torch::randn({4, 8}, torch::kFloat64) * 0.3};
  const GaussianParams p{torch::randn({4, 8}, torch::kFloat64), torch::randn({4, 8}, torch::kFloat64) * 0.3};
  const GaussianParams standard{torch::zeros({4, 8}, torch::kFloat64), torch::zeros({4, 8}, torch::kFloat64)};
  CHECK(torch::allclose(kl_between(q, standard), kl_to_standard(q)));
  CHECK((kl_between(q, q).abs() <= 1e-12).all().item<bool>());
  CHECK((kl_between(q, p) >= 0).all().item<bool>());
  CHECK((kl_to_standard(q) >= 0).all().item<bool>());
}

TEST_CASE("z_sequence determinism, widths and empty rollouts") {
  torch::manual_seed(5);
  ZSequence zs(8);
  const auto u = torch::randn({2, 8});
  const auto a = zs(u, 6), b = zs(u, 6);
  REQUIRE(a.size() == 6u);
  for (std::size_t t = 0; t < a.size(); ++t) {
    CHECK(a[t].sizes() == torch::IntArrayRef({2, 8}));
    CHECK(torch::equal(a[t], b[t]));
  }
  CHECK(zs(u, 0).empty());
  CHECK_THROWS_AS(zs(torch::randn({2, 7}), 3), ArgumentError);
}

TEST_CASE("noise stream state round trip") {
  NoiseStream a(9);
  a.draw(5);
  const auto st = a.state();
  const auto x = a.draw(8);
  NoiseStream b(0);
  b.set_state(st);
  CHECK(torch::equal(b.draw(8), x));
  NoiseStream c(9), d(9);
  CHECK(torch::equal(c.draw_rows(3, 4), d.draw_rows(3, 4)));
}
