#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "compvid/config.hpp"

namespace compvid {

/// Fixed-size square windows of side `extent` pixels around each center,
/// zero-padded where the window leaves the frame.
///
/// frames [B, 3, H, W], centers [B, N, 2] (normalized x, y) -> [B, N, 3, extent, extent].
torch::Tensor crop_entities(const torch::Tensor& frames, const torch::Tensor& centers, std::int64_t extent);

/// Four stride-2 convolutions followed by global average pooling and a linear
/// map to the appearance dimension.
class EntityEncoderImpl : public torch::nn::Module {
 public:
  EntityEncoderImpl(std::int64_t appearance_dim);
  torch::Tensor forward(const torch::Tensor& crops);  // [M,3,e,e] -> [M,A]

 private:
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr}, conv4{nullptr};
  torch::nn::Linear fc{nullptr};
};
TORCH_MODULE(EntityEncoder);

/// Small encoder/decoder with skip connections producing the background
/// feature map at the fusion resolution.
class BackgroundEncoderImpl : public torch::nn::Module {
 public:
  BackgroundEncoderImpl(std::int64_t out_channels, int downsample);
  torch::Tensor forward(const torch::Tensor& frames);

 private:
  int downsample_;
  torch::nn::Conv2d enc1{nullptr}, enc2{nullptr}, enc3{nullptr}, dec2{nullptr}, dec1{nullptr}, out{nullptr};
};
TORCH_MODULE(BackgroundEncoder);

class FrontendImpl : public torch::nn::Module {
 public:
  explicit FrontendImpl(const ModelConfig& config);

  /// Appearance vectors for every entity: [B,3,H,W] x [B,N,2] -> [B,N,A].
  torch::Tensor encode_entities(const torch::Tensor& frames, const torch::Tensor& centers);

  /// Background feature map at the fusion grid: [B,C,h,w]. Pixel fusion
  /// uses the frame itself.
  torch::Tensor encode_background(const torch::Tensor& frames);

  /// Mean-pooled background features, [B,C]; used for nearest-neighbour retrieval.
  torch::Tensor frame_descriptor(const torch::Tensor& frames);

  std::int64_t extent() const { return extent_; }

 private:
  void check_frames(const torch::Tensor& frames) const;

  std::int64_t extent_;
  std::int64_t canvas_;
  FusionLevel fusion_;
  EntityEncoder entity_encoder{nullptr};
  BackgroundEncoder background_encoder{nullptr};
};
TORCH_MODULE(Frontend);

}  // namespace compvid
