#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "compvid/datagen.hpp"
#include "compvid/model.hpp"
#include "compvid/noise.hpp"

namespace compvid {

/// Mean over entities of the squared distance: [...,N,2] x [...,N,2] -> [...].
torch::Tensor location_error(const torch::Tensor& pred_centers, const torch::Tensor& gt_centers);

/// Per-frame error: [...,3,H,W] x [...,3,H,W] -> [...]. "l1" is the mean
/// absolute pixel difference; other names resolve through the registry.
torch::Tensor frame_error(const torch::Tensor& pred_frames, const torch::Tensor& gt_frames,
                          const std::string& metric = "l1");

using FrameMetric = std::function<torch::Tensor(const torch::Tensor& pred, const torch::Tensor& gt)>;
/// Registers a frame metric under `name` (replacing an earlier one). The
/// callable receives [M,3,H,W] pairs and returns [M].
void register_frame_metric(const std::string& name, FrameMetric metric);
std::vector<std::string> frame_metrics();

struct BestOfKOptions {
  std::int64_t horizon = 0;  // 0: the model's configured horizon, clipped to the sequence
  bool frames = true;        // decode frames and report frame errors
  std::string metric = "l1";
  bool mean_latent = true;   // also roll out the posterior mean
  std::int64_t chunk = 25;   // samples rolled out per batch
};

struct BestOfKResult {
  std::int64_t k = 0;
  std::int64_t horizon = 0;
  // Per-sample curves, [k][T].
  std::vector<std::vector<double>> loc_samples, frame_samples;
  // Per-timestep curves, length T.
  std::vector<double> loc_best, loc_mean, loc_sigma;
  std::vector<double> frame_best, frame_mean, frame_sigma;
  std::vector<double> top5_mean, top5_sigma;  // location error over the 5 best samples
  std::vector<double> loc_mean_latent, frame_mean_latent;
  std::int64_t best_loc_index = 0;    // argmin of time-averaged location error
  std::int64_t best_frame_index = 0;  // argmin of time-averaged frame error
  double final_center_sigma = 0;      // sigma over samples of the final-step centers
  torch::Tensor sample_centers;       // [k,T,N,2]
  torch::Tensor best_frames;          // [T,3,H,W] of best_frame_index (when frames are decoded)
};

/// Rolls out k prior samples from the first frame of `sequence` and scores
/// each against the ground truth. Sample i consumes the i-th draws of
/// `noise`, so a longer run extends a shorter one with the same stream.
/// Throws NumericalError on non-finite predictions.
BestOfKResult best_of_k(VideoModel& model, const VideoSequence& sequence, std::int64_t k, NoiseSource& noise,
                        const BestOfKOptions& options = {});

struct NearestNeighbor {
  std::size_t index = 0;  // position within the train split
  std::filesystem::path path;
  VideoSequence sequence;
  double distance = 0;
};

/// Train sequence whose first-frame descriptor is nearest to `query_frame`
/// ([3,H,W] in [0,1]); ties go to the lowest index.
NearestNeighbor nn_baseline(Frontend& frontend, const torch::Tensor& query_frame, const DatasetManifest& manifest);

// --- reports ---------------------------------------------------------------

struct SequenceReport {
  std::string name;
  std::int64_t num_entities = 0;
  BestOfKResult result;
};

/// Writes one CSV per sequence plus summary.csv (per-timestep means over
/// sequences) and summary.txt (scalar aggregates) into `dir`.
void write_reports(const std::vector<SequenceReport>& reports, const std::filesystem::path& dir);
void write_sequence_csv(const BestOfKResult& r, const std::filesystem::path& path);

}  // namespace compvid
