#include "compvid/noise.hpp"

#include <sstream>

namespace compvid {

torch::Tensor NoiseSource::draw_rows(std::int64_t rows, std::int64_t dim) {
  std::vector<torch::Tensor> out;
  out.reserve(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) out.push_back(draw(dim));
  if (out.empty()) return torch::zeros({0, dim}, torch::kFloat64);
  return torch::stack(out);
}

torch::Tensor NoiseStream::draw(std::int64_t dim) {
  // Box-Muller on raw engine output keeps the stream identical across standard libraries.
  auto out = torch::empty({dim}, torch::kFloat64);
  auto* p = out.data_ptr<double>();
  auto u01 = [this] { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; };
  for (std::int64_t i = 0; i < dim; i += 2) {
    const double r = std::sqrt(-2.0 * std::log(u01()));
    const double th = 2.0 * M_PI * u01();
    p[i] = r * std::cos(th);
    if (i + 1 < dim) p[i + 1] = r * std::sin(th);
  }
  return out;
}

std::string NoiseStream::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void NoiseStream::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
}

}  // namespace compvid
