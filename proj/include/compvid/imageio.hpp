#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace compvid {

using Rgb = std::array<std::uint8_t, 3>;

struct Image {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // row-major HWC

  Image() = default;
  Image(int w, int h, Rgb fill = {255, 255, 255});

  std::uint8_t* at(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  void set(int x, int y, Rgb c);
};

void write_png(const Image& image, const std::filesystem::path& path);

/// [3,H,W] or [H,W,3] in [0,1] (or a 1-channel map [1,H,W]) -> image.
Image image_from_tensor(const torch::Tensor& t);
Image upscale(const Image& image, int factor);
/// Images laid out row by row, `cols` per row, separated by `pad` pixels.
Image tile(const std::vector<Image>& images, int cols, int pad = 2, Rgb background = {255, 255, 255});
void paste(Image& dst, const Image& src, int x0, int y0);

void draw_line(Image& image, double x0, double y0, double x1, double y1, Rgb color);
void draw_dot(Image& image, double x, double y, int radius, Rgb color);

/// Distinct colours for entity or series index i.
Rgb series_color(std::size_t i);

struct Series {
  std::vector<double> x, y;
  Rgb color{0, 0, 0};
};

/// Line chart with axes and light grid lines; ranges fit the data.
Image plot_series(const std::vector<Series>& series, int width = 480, int height = 320);

}  // namespace compvid
