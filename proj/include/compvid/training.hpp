#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "compvid/config.hpp"
#include "compvid/datagen.hpp"
#include "compvid/model.hpp"
#include "compvid/noise.hpp"
#include "compvid/tensors.hpp"

namespace compvid {

struct LossReport {
  double l_pred_frame = 0;  // sum_t mean-pixel |f_t - gt_t|, batch mean
  double l_pred_loc = 0;    // sum_t sum_n ||b - gt_b||^2, batch mean
  double l_dec = 0;         // sum_{t=0..T} mean-pixel |D(gt entities) - gt_t|, batch mean
  double l_enc = 0;         // KL, batch mean
  double total = 0;         // l_dec + l_pred_frame + lambda_loc * l_pred_loc + lambda_kl * l_enc
  std::vector<double> pred_frame_per_t, pred_loc_per_t, dec_per_t;
  torch::Tensor total_tensor;  // differentiable scalar
};

/// Shapes: pred_frames [B,T,3,H,W], pred_centers [B,T,N,2], gt_frames and
/// dec_frames [B,T+1,3,H,W], gt_centers [B,T+1,N,2], kl [B].
/// Throws NumericalError if any input holds NaN or Inf.
LossReport compute_losses(const torch::Tensor& pred_frames, const torch::Tensor& pred_centers,
                          const torch::Tensor& gt_frames, const torch::Tensor& gt_centers,
                          const torch::Tensor& dec_frames, const torch::Tensor& kl, double lambda_loc,
                          double lambda_kl);

// --- checkpoints ---------------------------------------------------------

struct Checkpoint {
  ModelConfig config;
  VideoModel model{nullptr};
  std::int64_t step = 0;
  std::string noise_state;
  std::string order_state;
};

/// Container file with one `param/<name>` array per parameter (float32),
/// the resolved config as `config` text and loop state as `state` text.
void save_checkpoint(const std::filesystem::path& path, VideoModel& model, std::int64_t step,
                     const std::string& noise_state = {}, const std::string& order_state = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

// --- training loop -------------------------------------------------------

/// Sequences of one split loaded as tensors (all with the same entity count).
std::vector<SequenceTensors> load_split(const DatasetManifest& manifest, const std::string& split);

class Trainer {
 public:
  Trainer(const ModelConfig& config, std::vector<SequenceTensors> data);

  /// One Adam step on the next batch.
  LossReport step();
  /// Losses on an explicit batch without updating parameters (grad mode off).
  LossReport evaluate(const std::vector<std::size_t>& indices);

  VideoModel& model() { return model_; }
  std::int64_t steps_done() const { return steps_done_; }
  const std::vector<std::size_t>& last_batch() const { return last_batch_; }
  std::string noise_state() const { return noise_.state(); }
  std::string order_state() const;

 private:
  std::vector<std::size_t> next_batch();
  std::pair<torch::Tensor, torch::Tensor> assemble(const std::vector<std::size_t>& indices);
  LossReport run(const std::vector<std::size_t>& indices);

  ModelConfig config_;
  std::vector<SequenceTensors> data_;
  VideoModel model_{nullptr};
  std::unique_ptr<torch::optim::Adam> optimizer_;
  NoiseStream noise_;
  std::mt19937_64 order_rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::int64_t steps_done_ = 0;
  std::vector<std::size_t> last_batch_;
};

struct TrainOptions {
  /// Called after each step with (step index starting at 1, report).
  std::function<void(std::int64_t, const LossReport&)> on_step;
};

/// Runs config.steps optimizer steps on the manifest's train split. Writes
/// <run_dir>/config.txt, <run_dir>/logs/metrics.csv and checkpoints under
/// <run_dir>/checkpoints/; returns the final checkpoint path.
std::filesystem::path train(const ModelConfig& config, const DatasetManifest& manifest,
                            const std::filesystem::path& run_dir, const TrainOptions& options = {});

}  // namespace compvid
