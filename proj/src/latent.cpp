#include "compvid/latent.hpp"

#include "compvid/errors.hpp"

namespace compvid {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

torch::Tensor sample(const GaussianParams& g, const torch::Tensor& noise) {
  if (noise.sizes() != g.mean.sizes()) {
    throw ArgumentError("sample: noise shape " + std::string(c10::str(noise.sizes())) + " differs from mean " +
                        std::string(c10::str(g.mean.sizes())));
  }
  return g.mean + g.sigma() * noise.to(g.mean.dtype());
}

torch::Tensor kl_to_standard(const GaussianParams& g) {
  return 0.5 * (g.mean.square() + (2 * g.log_sigma).exp() - 1 - 2 * g.log_sigma).sum(-1);
}

torch::Tensor kl_between(const GaussianParams& q, const GaussianParams& p) {
  const auto var_q = (2 * q.log_sigma).exp();
  const auto var_p = (2 * p.log_sigma).exp();
  return (p.log_sigma - q.log_sigma + (var_q + (q.mean - p.mean).square()) / (2 * var_p) - 0.5).sum(-1);
}

FrameFeatureEncoderImpl::FrameFeatureEncoderImpl() {
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(3, 16, 3).stride(2).padding(1)));
  conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(16, 32, 3).stride(2).padding(1)));
  conv3 = register_module("conv3", nn::Conv2d(nn::Conv2dOptions(32, kWidth, 3).stride(2).padding(1)));
}

torch::Tensor FrameFeatureEncoderImpl::forward(const torch::Tensor& frames) {
  auto act = [](const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)); };
  auto x = act(conv1(frames));
  x = act(conv2(x));
  x = act(conv3(x));
  return x.mean({2, 3});
}

PosteriorEncoderImpl::PosteriorEncoderImpl(std::int64_t latent_dim) : latent_dim_(latent_dim) {
  encoder = register_module("encoder", FrameFeatureEncoder());
  head = register_module("head", nn::Linear(2 * FrameFeatureEncoderImpl::kWidth, 2 * latent_dim));
}

GaussianParams PosteriorEncoderImpl::forward(const torch::Tensor& first, const torch::Tensor& last) {
  if (first.sizes() != last.sizes()) {
    throw ArgumentError("posterior: frame shapes differ " + std::string(c10::str(first.sizes())) + " vs " +
                        std::string(c10::str(last.sizes())));
  }
  const auto B = first.size(0);
  const auto feats = encoder(torch::cat({first, last}, 0));
  const auto out = head(torch::cat({feats.narrow(0, 0, B), feats.narrow(0, B, B)}, 1));
  return {out.narrow(1, 0, latent_dim_), out.narrow(1, latent_dim_, latent_dim_)};
}

ZSequenceImpl::ZSequenceImpl(std::int64_t latent_dim) {
  cell = register_module("cell", nn::LSTMCell(latent_dim, latent_dim));
  token = register_parameter("token", torch::zeros({latent_dim}));
}

std::vector<torch::Tensor> ZSequenceImpl::forward(const torch::Tensor& u, std::int64_t steps) {
  if (u.dim() != 2 || u.size(1) != token.size(0)) throw ArgumentError("z_sequence: u must be [B, latent_dim]");
  std::vector<torch::Tensor> z;
  z.reserve(static_cast<std::size_t>(std::max<std::int64_t>(steps, 0)));
  auto h = torch::zeros_like(u);
  auto c = u;
  const auto input = token.unsqueeze(0).expand({u.size(0), token.size(0)});
  for (std::int64_t t = 0; t < steps; ++t) {
    std::tie(h, c) = cell(input, std::make_tuple(h, c));
    z.push_back(h);
  }
  return z;
}

LearnedPriorImpl::LearnedPriorImpl(std::int64_t state_dim, std::int64_t latent_dim) : latent_dim_(latent_dim) {
  head = register_module("head", nn::Linear(state_dim, 2 * latent_dim));
}

GaussianParams LearnedPriorImpl::forward(const torch::Tensor& pooled_state) {
  const auto out = head(pooled_state);
  return {out.narrow(1, 0, latent_dim_), out.narrow(1, latent_dim_, latent_dim_)};
}

}  // namespace compvid
