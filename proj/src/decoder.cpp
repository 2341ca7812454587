#include "compvid/decoder.hpp"

#include <cmath>

#include "compvid/errors.hpp"

namespace compvid {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

torch::Tensor lrelu(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)); }

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(
      x, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kBilinear).align_corners(false));
}

std::int64_t groups_for(std::int64_t channels) { return channels % 4 == 0 ? 4 : 1; }

}  // namespace

EntityDecoderImpl::EntityDecoderImpl(std::int64_t appearance_dim, std::int64_t channels, std::int64_t patch_size,
                                     bool rgb_features)
    : appearance_dim_(appearance_dim), channels_(channels), patch_size_(patch_size), rgb_features_(rgb_features) {
  if (patch_size < 4 || (patch_size & (patch_size - 1)) != 0) {
    throw ArgumentError("patch_size must be a power of two >= 4");
  }
  constexpr std::int64_t width = 16;
  fc = register_module("fc", nn::Linear(appearance_dim, width * 16));
  units = register_module("units", nn::ModuleList());
  for (std::int64_t s = 4; s < patch_size; s *= 2) {
    units->push_back(nn::Conv2d(nn::Conv2dOptions(width, width, 3).padding(1)));
    units->push_back(nn::GroupNorm(nn::GroupNormOptions(groups_for(width), width)));
  }
  head = register_module("head", nn::Conv2d(nn::Conv2dOptions(width, channels + 1, 1)));
}

EntityPatch EntityDecoderImpl::forward(const torch::Tensor& appearance) {
  if (appearance.dim() != 2 || appearance.size(1) != appearance_dim_) {
    throw ArgumentError("decode_entity expects appearance [M," + std::to_string(appearance_dim_) + "], got " +
                        std::string(c10::str(appearance.sizes())));
  }
  auto x = lrelu(fc(appearance)).view({appearance.size(0), -1, 4, 4});
  for (std::size_t i = 0; i < units->size(); i += 2) {
    x = upsample2(x);
    x = units[i]->as<nn::Conv2d>()->forward(x);
    x = lrelu(units[i + 1]->as<nn::GroupNorm>()->forward(x));
  }
  const auto out = head(x);
  auto features = out.narrow(1, 0, channels_);
  if (rgb_features_) features = torch::sigmoid(features);
  return {features, torch::sigmoid(out.narrow(1, channels_, 1))};
}

PixelBox warp_box(double cx, double cy, double extent, std::int64_t out_h, std::int64_t out_w) {
  const double x0 = cx * out_w - extent / 2, y0 = cy * out_h - extent / 2;
  return {static_cast<std::int64_t>(std::floor(x0)), static_cast<std::int64_t>(std::ceil(x0 + extent)) - 1,
          static_cast<std::int64_t>(std::floor(y0)), static_cast<std::int64_t>(std::ceil(y0 + extent)) - 1};
}

LocalWarp warp_local(const torch::Tensor& patches, const torch::Tensor& centers, double extent, std::int64_t out_h,
                     std::int64_t out_w) {
  if (patches.dim() != 4 || patches.size(2) != patches.size(3)) throw ArgumentError("warp: patches must be [M,C,p,p]");
  if (centers.dim() != 2 || centers.size(0) != patches.size(0) || centers.size(1) != 2) {
    throw ArgumentError("warp: centers must be [M,2] matching the patches");
  }
  if (!(extent > 0) || extent > static_cast<double>(std::min(out_h, out_w))) {
    throw ArgumentError("warp: extent must be in (0, min(out_h, out_w)]");
  }
  if (torch::isnan(centers).any().item<bool>()) throw ArgumentError("warp: center is NaN");

  const auto M = patches.size(0), C = patches.size(1), p = patches.size(2);
  const auto L = static_cast<std::int64_t>(std::ceil(extent)) + 1;
  const auto opts = centers.options();
  // Continuous pixel-index coordinate of every patch sample along one axis.
  const auto offsets = ((torch::arange(p, opts) + 0.5) * (extent / p) - 0.5 - extent / 2).unsqueeze(0);
  const auto xs = centers.select(1, 0).unsqueeze(1) * static_cast<double>(out_w) + offsets;  // [M,p]
  const auto ys = centers.select(1, 1).unsqueeze(1) * static_cast<double>(out_h) + offsets;

  LocalWarp w;
  w.out_h = out_h;
  w.out_w = out_w;
  w.origin_x.resize(M);
  w.origin_y.resize(M);
  std::vector<std::int64_t> lo_x(M), hi_x(M), lo_y(M), hi_y(M);
  {
    const auto c = centers.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    auto acc = c.accessor<double, 2>();
    for (std::int64_t m = 0; m < M; ++m) {
      const auto box = warp_box(acc[m][0], acc[m][1], extent, out_h, out_w);
      w.origin_x[m] = box.x_lo;
      w.origin_y[m] = box.y_lo;
      lo_x[m] = std::max<std::int64_t>(box.x_lo, 0);
      hi_x[m] = std::min<std::int64_t>(box.x_hi, out_w - 1);
      lo_y[m] = std::max<std::int64_t>(box.y_lo, 0);
      hi_y[m] = std::min<std::int64_t>(box.y_hi, out_h - 1);
    }
  }
  const auto long_opts = torch::TensorOptions().dtype(torch::kLong);
  const auto col = [&](const std::vector<std::int64_t>& v) { return torch::tensor(v, long_opts).unsqueeze(1); };
  const auto lox = col(lo_x), hix = col(hi_x), loy = col(lo_y), hiy = col(hi_y);
  const auto ox = col(w.origin_x), oy = col(w.origin_y);

  const auto fx0 = xs.detach().floor(), fy0 = ys.detach().floor();
  const auto fx = xs - fx0, fy = ys - fy0;
  const auto ix0 = fx0.to(torch::kLong), iy0 = fy0.to(torch::kLong);

  std::vector<torch::Tensor> idx_parts, w_parts, valid_parts;
  for (int dy = 0; dy < 2; ++dy) {
    const auto iy = iy0 + dy;
    const auto wy = dy ? fy : 1 - fy;
    const auto vy = (iy >= loy) & (iy <= hiy);
    for (int dx = 0; dx < 2; ++dx) {
      const auto ix = ix0 + dx;
      const auto wx = dx ? fx : 1 - fx;
      const auto vx = (ix >= lox) & (ix <= hix);
      const auto valid = vy.unsqueeze(2) & vx.unsqueeze(1);  // [M,p,p] rows = y
      const auto local = (iy - oy).unsqueeze(2) * L + (ix - ox).unsqueeze(1);
      idx_parts.push_back(torch::where(valid, local, 0).flatten(1));
      w_parts.push_back((wy.unsqueeze(2) * wx.unsqueeze(1)).flatten(1));
      valid_parts.push_back(valid.flatten(1));
    }
  }
  const auto idx = torch::cat(idx_parts, 1).unsqueeze(1).expand({M, C, 4 * p * p});
  const auto wt = torch::cat(w_parts, 1).unsqueeze(1).to(patches.dtype());
  const auto valid = torch::cat(valid_parts, 1).unsqueeze(1);
  const auto src = patches.flatten(2).repeat({1, 1, 4});
  const auto contrib = torch::where(valid, src * wt, torch::zeros({}, patches.options()));
  w.values = torch::zeros({M, C, L * L}, patches.options()).scatter_add(2, idx, contrib).view({M, C, L, L});
  return w;
}

torch::Tensor scatter_windows(const LocalWarp& w, const torch::Tensor& values, std::int64_t group) {
  const auto M = static_cast<std::int64_t>(w.origin_x.size());
  if (values.dim() != 4 || values.size(0) != M || values.size(2) != values.size(3)) {
    throw ArgumentError("scatter_windows: values must be [M,C,L,L] for the warped entities");
  }
  if (group < 1 || M % group != 0) throw ArgumentError("scatter_windows: group must divide the entity count");
  const auto C = values.size(1), L = values.size(2), G = M / group;
  const auto H = w.out_h, W = w.out_w;
  const auto long_opts = torch::TensorOptions().dtype(torch::kLong);
  const auto col = [&](const std::vector<std::int64_t>& v) { return torch::tensor(v, long_opts).view({M, 1, 1}); };
  const auto r = torch::arange(L, long_opts);
  const auto gy = col(w.origin_y) + r.view({1, L, 1});  // [M,L,1]
  const auto gx = col(w.origin_x) + r.view({1, 1, L});  // [M,1,L]
  const auto inside = (gy >= 0) & (gy < H) & (gx >= 0) & (gx < W);
  const auto idx = torch::where(inside, gy * W + gx, 0).view({G, 1, group * L * L}).expand({G, C, group * L * L});
  const auto src = torch::where(inside.unsqueeze(1), values, torch::zeros({}, values.options()))
                       .view({G, group, C, L * L})
                       .transpose(1, 2)
                       .reshape({G, C, group * L * L});
  return torch::zeros({G, C, H * W}, values.options()).scatter_add(2, idx, src).view({G, C, H, W});
}

torch::Tensor warp_to_frame(const torch::Tensor& patches, const torch::Tensor& centers, double extent,
                            std::int64_t out_h, std::int64_t out_w) {
  const auto w = warp_local(patches, centers, extent, out_h, out_w);
  return scatter_windows(w, w.values);
}

torch::Tensor compose(const torch::Tensor& background, const torch::Tensor& features, const torch::Tensor& masks) {
  if (background.dim() != 4 || features.dim() != 5 || masks.dim() != 5) {
    throw ArgumentError("compose expects background [B,C,h,w], features [B,N,C,h,w], masks [B,N,1,h,w]");
  }
  const auto B = background.size(0), C = background.size(1), h = background.size(2), w = background.size(3);
  if (features.size(0) != B || features.size(2) != C || features.size(3) != h || features.size(4) != w ||
      masks.size(0) != B || masks.size(1) != features.size(1) || masks.size(2) != 1 || masks.size(3) != h ||
      masks.size(4) != w) {
    throw ArgumentError("compose: shape mismatch between background " + std::string(c10::str(background.sizes())) +
                        ", features " + std::string(c10::str(features.sizes())) + " and masks " +
                        std::string(c10::str(masks.sizes())));
  }
  const auto num = background * kBackgroundMaskWeight + (features * masks).sum(1);
  const auto den = masks.sum(1) + kBackgroundMaskWeight;
  return num / den;
}

RefinerImpl::RefinerImpl(std::int64_t in_channels, std::int64_t channels, std::int64_t out_size, int num_units)
    : out_size_(out_size) {
  convs = register_module("convs", nn::ModuleList());
  norms = register_module("norms", nn::ModuleList());
  std::int64_t in = in_channels;
  for (int i = 0; i < num_units; ++i) {
    convs->push_back(nn::Conv2d(nn::Conv2dOptions(in, channels, 3).padding(1)));
    norms->push_back(nn::GroupNorm(nn::GroupNormOptions(groups_for(channels), channels)));
    in = channels;
  }
  to_rgb = register_module("to_rgb", nn::Conv2d(nn::Conv2dOptions(in, 3, 1)));
}

torch::Tensor RefinerImpl::forward(const torch::Tensor& features) {
  auto x = features.contiguous(torch::MemoryFormat::ChannelsLast);
  for (std::size_t i = 0; i < convs->size(); ++i) {
    x = convs[i]->as<nn::Conv2d>()->forward(x);
    x = lrelu(norms[i]->as<nn::GroupNorm>()->forward(x));
    if (x.size(2) < out_size_) x = upsample2(x);
  }
  if (x.size(2) != out_size_) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<std::int64_t>{out_size_, out_size_})
                              .mode(torch::kBilinear)
                              .align_corners(false));
  }
  return torch::sigmoid(to_rgb(x));
}

FrameDecoderImpl::FrameDecoderImpl(const ModelConfig& config)
    : fusion_(config.fusion),
      canvas_(config.canvas),
      fusion_size_(config.canvas / fusion_downsample(config.fusion)),
      channels_(config.fusion == FusionLevel::Pixel ? 3 : config.feature_channels),
      extent_(config.crop_extent) {
  entity_decoder = register_module(
      "entity_decoder",
      EntityDecoder(config.appearance_dim, channels_, config.patch_size, config.fusion == FusionLevel::Pixel));
  if (fusion_ != FusionLevel::Pixel) {
    refiner = register_module("refiner", Refiner(channels_, config.refine_channels, config.canvas));
  }
}

torch::Tensor FrameDecoderImpl::finish(const torch::Tensor& composed) {
  if (fusion_ == FusionLevel::Pixel) return composed;
  return refiner(composed);
}

FrameDecoderImpl::Output FrameDecoderImpl::decode(const torch::Tensor& locations, const torch::Tensor& appearance,
                                                  const torch::Tensor& background) {
  if (locations.dim() != 3 || appearance.dim() != 3 || locations.size(0) != appearance.size(0) ||
      locations.size(1) != appearance.size(1)) {
    throw ArgumentError("decode_frame expects locations [B,N,2] and appearance [B,N,A]");
  }
  if (background.dim() != 4 || background.size(0) != locations.size(0) || background.size(1) != channels_ ||
      background.size(2) != fusion_size_ || background.size(3) != fusion_size_) {
    throw ArgumentError("decode_frame: background must be [B," + std::to_string(channels_) + "," +
                        std::to_string(fusion_size_) + "," + std::to_string(fusion_size_) + "], got " +
                        std::string(c10::str(background.sizes())));
  }
  const auto B = locations.size(0), N = locations.size(1);
  const auto patch = entity_decoder(appearance.flatten(0, 1));
  const auto both = torch::cat({patch.features, patch.mask}, 1);
  // Products and mask sums are formed in each entity's window and scattered
  // once, which equals compose() over full-frame warped maps.
  const auto w = warp_local(both, locations.flatten(0, 1), fusion_extent(), fusion_size_, fusion_size_);
  const auto features = w.values.narrow(1, 0, channels_);
  const auto mask = w.values.narrow(1, channels_, 1);
  const auto sums = scatter_windows(w, torch::cat({features * mask, mask}, 1), N);
  const auto num = background * kBackgroundMaskWeight + sums.narrow(1, 0, channels_);
  const auto den = sums.narrow(1, channels_, 1) + kBackgroundMaskWeight;
  const auto composed = num / den;
  const auto masks = scatter_windows(w, mask).view({B, N, 1, fusion_size_, fusion_size_});
  return {finish(composed), masks, composed};
}

torch::Tensor FrameDecoderImpl::decode_foreground(const torch::Tensor& features, const torch::Tensor& mask,
                                                  const torch::Tensor& background) {
  return finish(compose(background, features.unsqueeze(1), mask.unsqueeze(1)));
}

}  // namespace compvid
