#include "compvid/model.hpp"

#include "compvid/errors.hpp"

namespace compvid {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

torch::Tensor lrelu(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)); }

torch::Tensor stack_field(const std::vector<ModelState>& states, bool locations) {
  std::vector<torch::Tensor> parts;
  parts.reserve(states.size());
  for (const auto& s : states) parts.push_back(locations ? s.locations : s.features);
  return torch::stack(parts, 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// No-Factor

NoFactorHeadImpl::NoFactorHeadImpl(const ModelConfig& config)
    : n_entities_(config.n_entities),
      latent_dim_(config.latent_dim),
      channels_(config.fusion == FusionLevel::Pixel ? 3 : config.feature_channels),
      fusion_size_(config.canvas / fusion_downsample(config.fusion)) {
  const std::int64_t G = FrameFeatureEncoderImpl::kWidth;
  const std::int64_t state_dim = G + 2 * n_entities_;
  frame_encoder = register_module("frame_encoder", FrameFeatureEncoder());
  fc1 = register_module("fc1", nn::Linear(state_dim + latent_dim_, config.hidden_dim));
  fc2 = register_module("fc2", nn::Linear(config.hidden_dim, config.hidden_dim));
  out = register_module("out", nn::Linear(config.hidden_dim, state_dim));
  {
    torch::NoGradGuard guard;
    out->weight.mul_(0.1);
    out->bias.zero_();
  }
  constexpr std::int64_t width = 16;
  to_map = register_module("to_map", nn::Linear(G, width * 8 * 8));
  units = register_module("units", nn::ModuleList());
  for (std::int64_t s = 8; s < fusion_size_; s *= 2) {
    units->push_back(nn::Conv2d(nn::Conv2dOptions(width, width, 3).padding(1)));
    units->push_back(nn::GroupNorm(nn::GroupNormOptions(4, width)));
  }
  head = register_module("head", nn::Conv2d(nn::Conv2dOptions(width, channels_ + 1, 1)));
}

void NoFactorHeadImpl::check_entities(std::int64_t n) const {
  if (n != n_entities_) throw IncompatibleEntityCount(n_entities_, n);
}

torch::Tensor NoFactorHeadImpl::encode(const torch::Tensor& frames) { return frame_encoder(frames); }

ModelState NoFactorHeadImpl::step(const ModelState& state, const torch::Tensor& z) {
  const auto B = state.locations.size(0);
  check_entities(state.locations.size(1));
  const auto boxes = state.locations.reshape({B, -1});
  auto x = torch::cat({state.features, boxes, z}, 1);
  x = lrelu(fc1(x));
  x = lrelu(fc2(x));
  const auto delta = out(x);
  const auto G = state.features.size(1);
  return {(boxes + delta.narrow(1, G, 2 * n_entities_)).view({B, n_entities_, 2}),
          state.features + delta.narrow(1, 0, G)};
}

std::pair<torch::Tensor, torch::Tensor> NoFactorHeadImpl::decode(const torch::Tensor& global) {
  auto x = lrelu(to_map(global)).view({global.size(0), -1, 8, 8});
  for (std::size_t i = 0; i < units->size(); i += 2) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kBilinear)
                              .align_corners(false));
    x = units[i]->as<nn::Conv2d>()->forward(x);
    x = lrelu(units[i + 1]->as<nn::GroupNorm>()->forward(x));
  }
  if (x.size(2) != fusion_size_) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<std::int64_t>{fusion_size_, fusion_size_})
                              .mode(torch::kBilinear)
                              .align_corners(false));
  }
  const auto y = head(x);
  auto features = y.narrow(1, 0, channels_);
  if (channels_ == 3) features = torch::sigmoid(features);
  return {features, torch::sigmoid(y.narrow(1, channels_, 1))};
}

// ---------------------------------------------------------------------------

VideoModelImpl::VideoModelImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  frontend = register_module("frontend", Frontend(config_));
  decoder = register_module("decoder", FrameDecoder(config_));
  if (factorized()) {
    predictor = register_module("predictor", Predictor(config_));
  } else {
    no_factor = register_module("no_factor", NoFactorHead(config_));
  }
  switch (config_.latent_scheme) {
    case LatentScheme::Ours:
      posterior = register_module("posterior", PosteriorEncoder(config_.latent_dim));
      z_sequence = register_module("z_sequence", ZSequence(config_.latent_dim));
      break;
    case LatentScheme::NoZ:
      posterior = register_module("posterior", PosteriorEncoder(config_.latent_dim));
      break;
    case LatentScheme::LearnedPrior: {
      const std::int64_t state_dim = factorized() ? 2 + config_.appearance_dim
                                                  : FrameFeatureEncoderImpl::kWidth + 2 * config_.n_entities;
      prior = register_module("prior", LearnedPrior(state_dim, config_.latent_dim));
      [[fallthrough]];
    }
    case LatentScheme::FixedPrior:
      step_posterior = register_module("step_posterior", PosteriorEncoder(config_.latent_dim));
      break;
  }
}

InteractionGraph VideoModelImpl::graph_for(std::int64_t n) const {
  if (config_.baseline == Baseline::NoEdge) return InteractionGraph::self_links(n);
  return InteractionGraph::from_spec(config_.graph, n);
}

SceneState VideoModelImpl::as_scene(const ModelState& s) const {
  return {s.locations, s.features, graph_for(s.locations.size(1))};
}

void VideoModelImpl::check_entities(std::int64_t n) const {
  if (!factorized()) no_factor->check_entities(n);
}

ModelState VideoModelImpl::encode(const torch::Tensor& frames, const torch::Tensor& centers) {
  if (centers.dim() != 3 || centers.size(2) != 2) throw ArgumentError("encode: centers must be [B,N,2]");
  check_entities(centers.size(1));
  if (factorized()) return {centers, frontend->encode_entities(frames, centers)};
  return {centers, no_factor->encode(frames)};
}

torch::Tensor VideoModelImpl::background(const torch::Tensor& first_frames) {
  return frontend->encode_background(first_frames);
}

ModelState VideoModelImpl::step(const ModelState& state, const torch::Tensor& z) {
  if (!factorized()) return no_factor->step(state, z);
  const auto next = predictor->predict_step(as_scene(state), z);
  return {next.locations, next.appearance};
}

FrameDecoderImpl::Output VideoModelImpl::decode_detailed(const ModelState& state, const torch::Tensor& bg) {
  if (factorized()) return decoder->decode(state.locations, state.features, bg);
  const auto [features, mask] = no_factor->decode(state.features);
  return {decoder->decode_foreground(features, mask, bg), mask.unsqueeze(1), torch::Tensor()};
}

torch::Tensor VideoModelImpl::decode_sequence(const std::vector<ModelState>& states, const torch::Tensor& bg,
                                              torch::Tensor* masks) {
  if (states.empty()) {
    const auto B = bg.size(0);
    return torch::zeros({B, 0, 3, config_.canvas, config_.canvas}, bg.options());
  }
  const auto B = states.front().locations.size(0);
  const auto T = static_cast<std::int64_t>(states.size());
  const auto locs = stack_field(states, true).flatten(0, 1);
  const auto feats = stack_field(states, false).flatten(0, 1);
  const auto bgs = bg.repeat_interleave(T, 0);
  // Inference decodes in chunks to bound activation memory.
  const std::int64_t chunk = torch::GradMode::is_enabled() ? B * T : 64;
  std::vector<torch::Tensor> frames, mask_parts;
  for (std::int64_t s = 0; s < B * T; s += chunk) {
    const auto len = std::min(chunk, B * T - s);
    const auto out = decode_detailed({locs.narrow(0, s, len), feats.narrow(0, s, len)}, bgs.narrow(0, s, len));
    frames.push_back(out.frames);
    if (masks) mask_parts.push_back(out.masks);
  }
  if (masks) {
    auto m = torch::cat(mask_parts, 0);
    std::vector<std::int64_t> shape{B, T};
    for (std::int64_t d = 1; d < m.dim(); ++d) shape.push_back(m.size(d));
    *masks = m.view(shape);
  }
  return torch::cat(frames, 0).view({B, T, 3, config_.canvas, config_.canvas});
}

torch::Tensor VideoModelImpl::pooled_state(const ModelState& s) const {
  if (factorized()) return torch::cat({s.locations, s.features}, -1).mean(1);
  return torch::cat({s.features, s.locations.flatten(1)}, 1);
}

LatentCursor VideoModelImpl::begin_prior_latents(std::int64_t batch, std::int64_t steps, NoiseSource& noise) {
  LatentCursor cursor;
  cursor.batch = batch;
  const auto Z = config_.latent_dim;
  const auto dtype = decoder->entity_decoder->parameters().front().scalar_type();
  if (config_.latent_scheme == LatentScheme::Ours) {
    const auto u = noise.draw_rows(batch, Z).to(dtype);
    cursor.planned = z_sequence(u, steps);
  } else if (config_.latent_scheme == LatentScheme::NoZ) {
    const auto u = noise.draw_rows(batch, Z).to(dtype);
    cursor.planned.assign(static_cast<std::size_t>(steps), u);
  }
  return cursor;
}

torch::Tensor VideoModelImpl::next_prior_latent(LatentCursor& cursor, const ModelState& current, NoiseSource& noise) {
  const auto t = cursor.t++;
  const auto Z = config_.latent_dim;
  switch (config_.latent_scheme) {
    case LatentScheme::Ours:
    case LatentScheme::NoZ:
      if (t >= static_cast<std::int64_t>(cursor.planned.size())) throw ArgumentError("latent cursor exhausted");
      return cursor.planned[static_cast<std::size_t>(t)];
    case LatentScheme::FixedPrior:
      return noise.draw_rows(cursor.batch, Z).to(current.locations.scalar_type());
    case LatentScheme::LearnedPrior: {
      const auto p = prior(pooled_state(current));
      return sample(p, noise.draw_rows(cursor.batch, Z).to(p.mean.scalar_type()));
    }
  }
  throw ArgumentError("unknown latent scheme");
}

std::vector<torch::Tensor> VideoModelImpl::posterior_mean_latents(const torch::Tensor& frames) {
  const auto B = frames.size(0), T = frames.size(1) - 1;
  if (config_.latent_scheme == LatentScheme::Ours || config_.latent_scheme == LatentScheme::NoZ) {
    const auto q = posterior(frames.select(1, 0), frames.select(1, T));
    if (config_.latent_scheme == LatentScheme::Ours) return z_sequence(q.mean, T);
    return std::vector<torch::Tensor>(static_cast<std::size_t>(T), q.mean);
  }
  const auto q = step_posterior(frames.narrow(1, 0, T).flatten(0, 1), frames.narrow(1, 1, T).flatten(0, 1));
  const auto mean = q.mean.view({B, T, -1});
  std::vector<torch::Tensor> z;
  for (std::int64_t t = 0; t < T; ++t) z.push_back(mean.select(1, t));
  return z;
}

Rollout VideoModelImpl::rollout_with_latents(const torch::Tensor& first_frames, const torch::Tensor& centers0,
                                             const std::vector<torch::Tensor>& z_seq, bool decode_frames) {
  Rollout r;
  auto state = encode(first_frames, centers0);
  for (const auto& z : z_seq) {
    state = step(state, z);
    r.states.push_back(state);
  }
  if (!r.states.empty()) r.centers = stack_field(r.states, true);
  if (decode_frames) r.frames = decode_sequence(r.states, background(first_frames), &r.masks);
  return r;
}

Rollout VideoModelImpl::sample_rollout(const torch::Tensor& first_frames, const torch::Tensor& centers0,
                                       std::int64_t steps, NoiseSource& noise, bool decode_frames) {
  Rollout r;
  auto state = encode(first_frames, centers0);
  auto cursor = begin_prior_latents(first_frames.size(0), steps, noise);
  for (std::int64_t t = 0; t < steps; ++t) {
    state = step(state, next_prior_latent(cursor, state, noise));
    r.states.push_back(state);
  }
  if (!r.states.empty()) r.centers = stack_field(r.states, true);
  if (decode_frames) r.frames = decode_sequence(r.states, background(first_frames), &r.masks);
  return r;
}

TrainOutputs VideoModelImpl::forward_train(const torch::Tensor& frames, const torch::Tensor& centers,
                                           NoiseSource& noise) {
  if (frames.dim() != 5 || centers.dim() != 4 || frames.size(0) != centers.size(0) ||
      frames.size(1) != centers.size(1)) {
    throw ArgumentError("forward_train expects frames [B,T+1,3,H,W] and centers [B,T+1,N,2]");
  }
  const auto B = frames.size(0), T1 = frames.size(1), T = T1 - 1, N = centers.size(2);
  const auto Z = config_.latent_dim;
  const auto f0 = frames.select(1, 0);
  const auto bg = background(f0);

  TrainOutputs out;
  auto state = encode(f0, centers.select(1, 0));
  std::vector<ModelState> states;
  states.reserve(static_cast<std::size_t>(T));

  const auto dtype = frames.scalar_type();
  if (config_.latent_scheme == LatentScheme::Ours || config_.latent_scheme == LatentScheme::NoZ) {
    const auto q = posterior(f0, frames.select(1, T));
    const auto u = sample(q, noise.draw_rows(B, Z).to(dtype));
    out.kl = kl_to_standard(q);
    const auto z = config_.latent_scheme == LatentScheme::Ours
                       ? z_sequence(u, T)
                       : std::vector<torch::Tensor>(static_cast<std::size_t>(T), u);
    for (std::int64_t t = 0; t < T; ++t) {
      state = step(state, z[static_cast<std::size_t>(t)]);
      states.push_back(state);
    }
  } else {
    const auto q = step_posterior(frames.narrow(1, 0, T).flatten(0, 1), frames.narrow(1, 1, T).flatten(0, 1));
    const GaussianParams qs{q.mean.view({B, T, Z}), q.log_sigma.view({B, T, Z})};
    const auto eps = noise.draw_rows(B * T, Z).to(dtype).view({B, T, Z});
    const auto z = sample(qs, eps);
    out.kl = torch::zeros({B}, frames.options());
    for (std::int64_t t = 0; t < T; ++t) {
      const GaussianParams qt{qs.mean.select(1, t), qs.log_sigma.select(1, t)};
      if (config_.latent_scheme == LatentScheme::FixedPrior) {
        out.kl = out.kl + kl_to_standard(qt);
      } else {
        out.kl = out.kl + kl_between(qt, prior(pooled_state(state)));
      }
      state = step(state, z.select(1, t));
      states.push_back(state);
    }
  }

  out.pred_frames = decode_sequence(states, bg);
  out.pred_centers = T > 0 ? stack_field(states, true) : torch::zeros({B, 0, N, 2}, centers.options());

  const auto gt = encode(frames.flatten(0, 1), centers.flatten(0, 1));
  out.dec_frames = decode(gt, bg.repeat_interleave(T1, 0)).view({B, T1, 3, config_.canvas, config_.canvas});
  return out;
}

VideoModel build_model(const ModelConfig& config) {
  config.validate();
  torch::manual_seed(config.seed);
  return VideoModel(config);
}

}  // namespace compvid
