#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "compvid/config.hpp"
#include "compvid/decoder.hpp"
#include "compvid/frontend.hpp"
#include "compvid/latent.hpp"
#include "compvid/noise.hpp"
#include "compvid/predictor.hpp"
#include "compvid/scene.hpp"

namespace compvid {

/// Entity-level state used by every model variant. Factorized models keep
/// per-entity appearance [B,N,A]; No-Factor keeps one global feature [B,G].
struct ModelState {
  torch::Tensor locations;  // [B, N, 2]
  torch::Tensor features;
};

/// Monolithic foreground baseline: a global frame feature and all boxes are
/// advanced by fully connected layers, then decoded into a single foreground
/// map and mask. Its input width fixes the entity count.
class NoFactorHeadImpl : public torch::nn::Module {
 public:
  NoFactorHeadImpl(const ModelConfig& config);

  torch::Tensor encode(const torch::Tensor& frames);  // [B,G]
  ModelState step(const ModelState& state, const torch::Tensor& z);
  /// Foreground features [B,C,h,w] and mask [B,1,h,w] at the fusion grid.
  std::pair<torch::Tensor, torch::Tensor> decode(const torch::Tensor& global);

  void check_entities(std::int64_t n) const;
  std::int64_t entities() const { return n_entities_; }

 private:
  std::int64_t n_entities_, latent_dim_, channels_, fusion_size_;
  FrameFeatureEncoder frame_encoder{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr}, out{nullptr};
  torch::nn::Linear to_map{nullptr};
  torch::nn::ModuleList units;
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(NoFactorHead);

/// Latents planned for one batch of prior rollouts (see next_prior_latent).
struct LatentCursor {
  std::vector<torch::Tensor> planned;
  std::int64_t batch = 0;
  std::int64_t t = 0;
};

struct Rollout {
  std::vector<ModelState> states;  // t = 1..T
  torch::Tensor centers;           // [B, T, N, 2]
  torch::Tensor frames;            // [B, T, 3, H, W], undefined unless decoded
  torch::Tensor masks;             // [B, T, N, 1, h, w] (factorized models, when decoded)
};

struct TrainOutputs {
  torch::Tensor pred_frames;   // [B, T, 3, H, W]
  torch::Tensor pred_centers;  // [B, T, N, 2]
  torch::Tensor dec_frames;    // [B, T+1, 3, H, W], decoded from ground-truth entities
  torch::Tensor kl;            // [B]
};

class VideoModelImpl : public torch::nn::Module {
 public:
  explicit VideoModelImpl(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  bool factorized() const { return config_.baseline != Baseline::NoFactor; }

  InteractionGraph graph_for(std::int64_t n) const;
  SceneState as_scene(const ModelState& s) const;

  /// Initial state from a frame and its entity centers: [B,3,H,W], [B,N,2].
  ModelState encode(const torch::Tensor& frames, const torch::Tensor& centers);
  torch::Tensor background(const torch::Tensor& first_frames);
  ModelState step(const ModelState& state, const torch::Tensor& z);

  FrameDecoderImpl::Output decode_detailed(const ModelState& state, const torch::Tensor& background);
  torch::Tensor decode(const ModelState& state, const torch::Tensor& background) {
    return decode_detailed(state, background).frames;
  }
  /// Decodes states 1..T against one background per batch row -> [B,T,3,H,W].
  torch::Tensor decode_sequence(const std::vector<ModelState>& states, const torch::Tensor& background,
                                torch::Tensor* masks = nullptr);

  // --- latent schemes ----------------------------------------------------

  /// Starts a prior rollout: for ours/no_z draws one noise vector per row now.
  LatentCursor begin_prior_latents(std::int64_t batch, std::int64_t steps, NoiseSource& noise);
  /// z_t for the next transition: planned (ours/no_z), N(0,I) (fp) or the
  /// learned prior conditioned on `current` (lp); fp/lp draw once per call per row.
  torch::Tensor next_prior_latent(LatentCursor& cursor, const ModelState& current, NoiseSource& noise);

  /// Posterior means of the latents given the ground-truth clip [B,T+1,3,H,W].
  std::vector<torch::Tensor> posterior_mean_latents(const torch::Tensor& frames);

  // --- rollouts ------------------------------------------------------------

  Rollout rollout_with_latents(const torch::Tensor& first_frames, const torch::Tensor& centers0,
                               const std::vector<torch::Tensor>& z_seq, bool decode_frames);
  Rollout sample_rollout(const torch::Tensor& first_frames, const torch::Tensor& centers0, std::int64_t steps,
                         NoiseSource& noise, bool decode_frames);

  TrainOutputs forward_train(const torch::Tensor& frames, const torch::Tensor& centers, NoiseSource& noise);

  Frontend frontend{nullptr};
  FrameDecoder decoder{nullptr};
  Predictor predictor{nullptr};
  NoFactorHead no_factor{nullptr};
  PosteriorEncoder posterior{nullptr};       // q(u | f0, fT): ours, no_z
  ZSequence z_sequence{nullptr};             // ours
  PosteriorEncoder step_posterior{nullptr};  // q(z_t | f_t, f_t+1): fp, lp
  LearnedPrior prior{nullptr};               // lp

 private:
  torch::Tensor pooled_state(const ModelState& s) const;
  void check_entities(std::int64_t n) const;

  ModelConfig config_;
};
TORCH_MODULE(VideoModel);

/// Seeds the torch generator with config.seed and builds the variant named
/// by config.baseline / config.latent_scheme / config.fusion.
VideoModel build_model(const ModelConfig& config);

}  // namespace compvid
