#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "compvid/config.hpp"
#include "compvid/noise.hpp"
#include "compvid/scene.hpp"

namespace compvid {

/// Diagonal Gaussian; sigma = exp(log_sigma) keeps it strictly positive.
struct GaussianParams {
  torch::Tensor mean;       // [B, Z]
  torch::Tensor log_sigma;  // [B, Z]

  torch::Tensor sigma() const { return log_sigma.exp(); }
  std::int64_t dim() const { return mean.size(-1); }
};

/// Reparameterized draw u = mean + sigma * noise.
torch::Tensor sample(const GaussianParams& g, const torch::Tensor& noise);

/// KL(N(mean, sigma^2) || N(0, I)) = 1/2 sum(mean^2 + sigma^2 - 1 - 2 log sigma), per row.
torch::Tensor kl_to_standard(const GaussianParams& g);

/// KL(q || p) between diagonal Gaussians, per row.
torch::Tensor kl_between(const GaussianParams& q, const GaussianParams& p);

/// Three stride-2 convolutions + global pooling -> 32-d frame feature.
class FrameFeatureEncoderImpl : public torch::nn::Module {
 public:
  FrameFeatureEncoderImpl();
  torch::Tensor forward(const torch::Tensor& frames);
  static constexpr std::int64_t kWidth = 32;

 private:
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
};
TORCH_MODULE(FrameFeatureEncoder);

/// q(u | f_a, f_b): shared per-frame encoder, concatenated features, one
/// affine layer to (mean, log sigma).
class PosteriorEncoderImpl : public torch::nn::Module {
 public:
  explicit PosteriorEncoderImpl(std::int64_t latent_dim);
  GaussianParams forward(const torch::Tensor& first, const torch::Tensor& last);

 private:
  std::int64_t latent_dim_;
  FrameFeatureEncoder encoder{nullptr};
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(PosteriorEncoder);

/// One-layer LSTM seeded with u as its cell state (hidden state zero), fed a
/// learned constant token; its hidden outputs are z_1..z_T.
class ZSequenceImpl : public torch::nn::Module {
 public:
  explicit ZSequenceImpl(std::int64_t latent_dim);
  std::vector<torch::Tensor> forward(const torch::Tensor& u, std::int64_t steps);

  torch::nn::LSTMCell cell{nullptr};
  torch::Tensor token;
};
TORCH_MODULE(ZSequence);

/// Per-step prior p(z_t | state_t) from the mean-pooled entity features.
class LearnedPriorImpl : public torch::nn::Module {
 public:
  LearnedPriorImpl(std::int64_t state_dim, std::int64_t latent_dim);
  GaussianParams forward(const torch::Tensor& pooled_state);

 private:
  std::int64_t latent_dim_;
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(LearnedPrior);

}  // namespace compvid
