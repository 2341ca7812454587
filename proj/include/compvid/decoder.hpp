#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "compvid/config.hpp"

namespace compvid {

/// Decoded per-entity patch in normalized (entity-centred) coordinates.
struct EntityPatch {
  torch::Tensor features;  // [M, C, p, p]
  torch::Tensor mask;      // [M, 1, p, p], sigmoid output in (0, 1)
};

/// Up-convolutional decoder g: appearance -> (feature patch, soft mask).
/// Each unit is upsample -> conv -> norm -> leaky ReLU, starting from 4x4.
class EntityDecoderImpl : public torch::nn::Module {
 public:
  EntityDecoderImpl(std::int64_t appearance_dim, std::int64_t channels, std::int64_t patch_size,
                    bool rgb_features);
  EntityPatch forward(const torch::Tensor& appearance);  // [M, A]

  std::int64_t patch_size() const { return patch_size_; }
  std::int64_t channels() const { return channels_; }

 private:
  std::int64_t appearance_dim_, channels_, patch_size_;
  bool rgb_features_;
  torch::nn::Linear fc{nullptr};
  torch::nn::ModuleList units;
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(EntityDecoder);

/// Integer pixel range (inclusive) of the box of side `extent` centred at
/// `center`: every pixel whose cell overlaps the box.
struct PixelBox {
  std::int64_t x_lo, x_hi, y_lo, y_hi;
  bool contains(std::int64_t x, std::int64_t y) const { return x >= x_lo && x <= x_hi && y >= y_lo && y <= y_hi; }
};
PixelBox warp_box(double cx, double cy, double extent, std::int64_t out_h, std::int64_t out_w);

/// Forward-splats each patch into the square of side `extent` (output pixels)
/// centred at its normalized center, with bilinear weights. Patch sample
/// (i, j) lands at box_origin + (j + 0.5, i + 0.5) * extent / p. Output is
/// exactly zero outside warp_box(). Differentiable in patch and center.
///
/// patches [M, C, p, p], centers [M, 2] -> [M, C, out_h, out_w]
torch::Tensor warp_to_frame(const torch::Tensor& patches, const torch::Tensor& centers, double extent,
                            std::int64_t out_h, std::int64_t out_w);

/// Patches splatted into per-entity windows of side ceil(extent) + 1 whose
/// top-left cell is output pixel (origin_x, origin_y). Cells outside
/// warp_box() or the frame hold 0.
struct LocalWarp {
  torch::Tensor values;  // [M, C, L, L]
  std::vector<std::int64_t> origin_x, origin_y;
  std::int64_t out_h = 0, out_w = 0;
};
LocalWarp warp_local(const torch::Tensor& patches, const torch::Tensor& centers, double extent, std::int64_t out_h,
                     std::int64_t out_w);

/// Sums window maps laid out like `w` ([M, C', L, L]) into frames; entity m
/// lands in frame m / group -> [M / group, C', out_h, out_w].
torch::Tensor scatter_windows(const LocalWarp& w, const torch::Tensor& values, std::int64_t group = 1);

/// Soft-mask weighted average with a constant background weight of 0.1:
///   phi = (0.1 phi_bg + sum_n phi_n M_n) / (0.1 + sum_n M_n)
///
/// background [B,C,h,w], features [B,N,C,h,w], masks [B,N,1,h,w] -> [B,C,h,w]
torch::Tensor compose(const torch::Tensor& background, const torch::Tensor& features, const torch::Tensor& masks);

/// Cascaded refinement: conv -> norm -> leaky ReLU units, each followed by 2x
/// upsampling while below the output size, then 1x1 conv + sigmoid to RGB.
class RefinerImpl : public torch::nn::Module {
 public:
  RefinerImpl(std::int64_t in_channels, std::int64_t channels, std::int64_t out_size, int num_units = 3);
  torch::Tensor forward(const torch::Tensor& features);

 private:
  std::int64_t out_size_;
  torch::nn::ModuleList convs, norms;
  torch::nn::Conv2d to_rgb{nullptr};
};
TORCH_MODULE(Refiner);

class FrameDecoderImpl : public torch::nn::Module {
 public:
  explicit FrameDecoderImpl(const ModelConfig& config);

  struct Output {
    torch::Tensor frames;    // [B, 3, H, W]
    torch::Tensor masks;     // [B, N, 1, h, w] warped masks
    torch::Tensor composed;  // [B, C, h, w]
  };

  /// locations [B,N,2], appearance [B,N,A], background [B,C,h,w] (from the
  /// frontend; the frame itself under pixel fusion).
  Output decode(const torch::Tensor& locations, const torch::Tensor& appearance, const torch::Tensor& background);
  torch::Tensor forward(const torch::Tensor& locations, const torch::Tensor& appearance,
                        const torch::Tensor& background) {
    return decode(locations, appearance, background).frames;
  }

  /// Composes an already-decoded foreground map (No-Factor) with the
  /// background and refines it.
  torch::Tensor decode_foreground(const torch::Tensor& features, const torch::Tensor& mask,
                                  const torch::Tensor& background);

  EntityDecoder entity_decoder{nullptr};
  Refiner refiner{nullptr};

  FusionLevel fusion() const { return fusion_; }
  std::int64_t fusion_size() const { return fusion_size_; }
  double fusion_extent() const { return extent_ * static_cast<double>(fusion_size_) / canvas_; }

 private:
  torch::Tensor finish(const torch::Tensor& composed);

  FusionLevel fusion_;
  std::int64_t canvas_, fusion_size_, channels_;
  double extent_;
};
TORCH_MODULE(FrameDecoder);

}  // namespace compvid
