#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <string>

#include <unistd.h>

#include <torch/torch.h>

#include "compvid/config.hpp"
#include "compvid/noise.hpp"

namespace testutil {

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("compvid_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Small model that keeps unit tests fast.
inline compvid::ModelConfig small_config() {
  compvid::ModelConfig c;
  c.canvas = 32;
  c.crop_extent = 10;
  c.patch_size = 8;
  c.feature_channels = 8;
  c.refine_channels = 8;
  c.hidden_dim = 32;
  c.appearance_dim = 16;
  c.horizon = 4;
  c.batch_size = 2;
  c.steps = 2;
  c.checkpoint_every = 1;
  return c;
}

/// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12)
/// of d f(x).sum() / dx with central differences. x must be float64.
inline double gradient_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, const torch::Tensor& x0,
                             double h = 1e-5) {
  auto x = x0.detach().clone().requires_grad_(true);
  const auto y = f(x).sum();
  const auto analytic = torch::autograd::grad({y}, {x})[0].detach();
  auto numeric = torch::zeros_like(analytic);
  torch::NoGradGuard guard;
  auto flat = x0.detach().clone().contiguous();
  auto num_flat = numeric.view(-1);
  auto p = flat.view(-1);
  for (std::int64_t i = 0; i < p.numel(); ++i) {
    const double v = p[i].item<double>();
    p[i] = v + h;
    const double up = f(flat).sum().item<double>();
    p[i] = v - h;
    const double down = f(flat).sum().item<double>();
    p[i] = v;
    num_flat[i] = (up - down) / (2 * h);
  }
  const double denom =
      std::max({analytic.norm().item<double>(), numeric.norm().item<double>(), 1e-12});
  return (analytic - numeric).norm().item<double>() / denom;
}

/// Noise source that counts draws.
class CountingNoise : public compvid::NoiseSource {
 public:
  explicit CountingNoise(std::uint64_t seed) : inner_(seed) {}
  torch::Tensor draw(std::int64_t dim) override {
    ++draws;
    return inner_.draw(dim);
  }
  int draws = 0;

 private:
  compvid::NoiseStream inner_;
};

/// Always returns zeros.
class ZeroNoise : public compvid::NoiseSource {
 public:
  torch::Tensor draw(std::int64_t dim) override { return torch::zeros({dim}, torch::kFloat64); }
};

}  // namespace testutil
