#include "compvid/frontend.hpp"

#include <cmath>

#include "compvid/errors.hpp"

namespace compvid {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

torch::Tensor lrelu(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)); }

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
}

nn::Conv2d conv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2));
}

}  // namespace

torch::Tensor crop_entities(const torch::Tensor& frames, const torch::Tensor& centers, std::int64_t extent) {
  if (frames.dim() != 4 || centers.dim() != 3 || centers.size(2) != 2 || centers.size(0) != frames.size(0)) {
    throw ArgumentError("crop_entities expects frames [B,3,H,W] and centers [B,N,2]");
  }
  if (centers.size(1) == 0) throw ArgumentError("crop_entities: empty center list");
  if (extent <= 0) throw ArgumentError("crop_entities: extent must be > 0");
  const auto B = frames.size(0), N = centers.size(1), H = frames.size(2), W = frames.size(3);
  const auto padded = F::pad(frames, F::PadFuncOptions({extent, extent, extent, extent}));
  const auto c = centers.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  auto acc = c.accessor<double, 3>();
  std::vector<torch::Tensor> crops;
  crops.reserve(static_cast<std::size_t>(B * N));
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t n = 0; n < N; ++n) {
      const double cx = acc[b][n][0], cy = acc[b][n][1];
      if (!std::isfinite(cx) || !std::isfinite(cy)) throw ArgumentError("crop_entities: non-finite center");
      // Clamp so the window always overlaps the padded frame.
      auto x0 = std::clamp<std::int64_t>(std::lround(cx * W - extent / 2.0), -extent, W);
      auto y0 = std::clamp<std::int64_t>(std::lround(cy * H - extent / 2.0), -extent, H);
      crops.push_back(padded[b].narrow(1, y0 + extent, extent).narrow(2, x0 + extent, extent));
    }
  }
  return torch::stack(crops).view({B, N, frames.size(1), extent, extent});
}

EntityEncoderImpl::EntityEncoderImpl(std::int64_t appearance_dim) {
  conv1 = register_module("conv1", conv(3, 16, 3, 2));
  conv2 = register_module("conv2", conv(16, 32, 3, 2));
  conv3 = register_module("conv3", conv(32, 32, 3, 2));
  conv4 = register_module("conv4", conv(32, 32, 3, 2));
  fc = register_module("fc", nn::Linear(32, appearance_dim));
}

torch::Tensor EntityEncoderImpl::forward(const torch::Tensor& crops) {
  auto x = lrelu(conv1(crops));
  x = lrelu(conv2(x));
  x = lrelu(conv3(x));
  x = lrelu(conv4(x));
  return fc(x.mean({2, 3}));
}

BackgroundEncoderImpl::BackgroundEncoderImpl(std::int64_t out_channels, int downsample) : downsample_(downsample) {
  enc1 = register_module("enc1", conv(3, 16, 3));
  enc2 = register_module("enc2", conv(16, 32, 3, 2));
  enc3 = register_module("enc3", conv(32, 32, 3, 2));
  dec2 = register_module("dec2", conv(64, 32, 3));
  dec1 = register_module("dec1", conv(48, 16, 3));
  const std::int64_t in = downsample == 4 ? 32 : (downsample == 2 ? 32 : 16);
  out = register_module("out", conv(in, out_channels, 1));
}

torch::Tensor BackgroundEncoderImpl::forward(const torch::Tensor& frames) {
  const auto e1 = lrelu(enc1(frames));
  const auto e2 = lrelu(enc2(e1));
  const auto e3 = lrelu(enc3(e2));
  if (downsample_ == 4) return out(e3);
  const auto d2 = lrelu(dec2(torch::cat({upsample2(e3), e2}, 1)));
  if (downsample_ == 2) return out(d2);
  const auto d1 = lrelu(dec1(torch::cat({upsample2(d2), e1}, 1)));
  return out(d1);
}

FrontendImpl::FrontendImpl(const ModelConfig& config)
    : extent_(config.crop_extent), canvas_(config.canvas), fusion_(config.fusion) {
  entity_encoder = register_module("entity_encoder", EntityEncoder(config.appearance_dim));
  background_encoder = register_module(
      "background_encoder", BackgroundEncoder(config.feature_channels, fusion_downsample(config.fusion)));
}

void FrontendImpl::check_frames(const torch::Tensor& frames) const {
  if (frames.dim() != 4 || frames.size(1) != 3 || frames.size(2) != canvas_ || frames.size(3) != canvas_) {
    throw ArgumentError("expected frames of shape [B,3," + std::to_string(canvas_) + "," + std::to_string(canvas_) +
                        "], got " + std::string(c10::str(frames.sizes())));
  }
}

torch::Tensor FrontendImpl::encode_entities(const torch::Tensor& frames, const torch::Tensor& centers) {
  check_frames(frames);
  const auto crops = crop_entities(frames, centers, extent_);
  const auto B = crops.size(0), N = crops.size(1);
  return entity_encoder(crops.flatten(0, 1)).view({B, N, -1});
}

torch::Tensor FrontendImpl::encode_background(const torch::Tensor& frames) {
  check_frames(frames);
  if (fusion_ == FusionLevel::Pixel) return frames;
  return background_encoder(frames);
}

torch::Tensor FrontendImpl::frame_descriptor(const torch::Tensor& frames) {
  check_frames(frames);
  return background_encoder(frames).mean({2, 3});
}

}  // namespace compvid
