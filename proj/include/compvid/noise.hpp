#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <torch/torch.h>

namespace compvid {

/// Source of standard-normal vectors. Every stochastic operation takes one
/// explicitly; there is no hidden global generator.
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  /// One draw: a float64 vector of `dim` independent N(0,1) values.
  virtual torch::Tensor draw(std::int64_t dim) = 0;

  /// `rows` consecutive draws stacked into [rows, dim].
  torch::Tensor draw_rows(std::int64_t rows, std::int64_t dim);
};

/// Reproducible stream backed by a 64-bit Mersenne Twister.
class NoiseStream : public NoiseSource {
 public:
  explicit NoiseStream(std::uint64_t seed) : engine_(seed) {}
  torch::Tensor draw(std::int64_t dim) override;

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

}  // namespace compvid
