#include "compvid/tensors.hpp"

#include "compvid/errors.hpp"

namespace compvid {

SequenceTensors to_tensors(const VideoSequence& seq) {
  seq.validate();
  auto frames = torch::from_blob(const_cast<std::uint8_t*>(seq.frames.data()),
                                 {seq.num_frames, seq.height, seq.width, 3}, torch::kUInt8)
                    .permute({0, 3, 1, 2})
                    .to(torch::kFloat32)
                    .div(255.0)
                    .contiguous();
  auto centers = torch::from_blob(const_cast<float*>(seq.centers.data()), {seq.num_frames, seq.num_entities, 2},
                                  torch::kFloat32)
                     .clone();
  return {frames, centers};
}

std::vector<std::uint8_t> to_bytes_hwc(const torch::Tensor& frame) {
  if (frame.dim() != 3) throw ArgumentError("to_bytes_hwc expects a single frame");
  auto hwc = frame.size(0) == 3 ? frame.permute({1, 2, 0}) : frame;
  hwc = hwc.detach().to(torch::kCPU, torch::kFloat32).clamp(0, 1).mul(255.0).round().to(torch::kUInt8).contiguous();
  return {hwc.data_ptr<std::uint8_t>(), hwc.data_ptr<std::uint8_t>() + hwc.numel()};
}

}  // namespace compvid
