#pragma once

#include <torch/torch.h>

#include "compvid/datagen.hpp"

namespace compvid {

/// A sequence as float tensors: frames [T+1,3,H,W] in [0,1], centers [T+1,N,2].
struct SequenceTensors {
  torch::Tensor frames;
  torch::Tensor centers;
};

SequenceTensors to_tensors(const VideoSequence& seq);

/// [3,H,W] or [H,W,3] float in [0,1] -> HWC bytes.
std::vector<std::uint8_t> to_bytes_hwc(const torch::Tensor& frame);

}  // namespace compvid
