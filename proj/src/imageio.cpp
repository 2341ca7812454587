#include "compvid/imageio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>

#include <png.h>

#include "compvid/errors.hpp"

namespace compvid {

Image::Image(int w, int h, Rgb fill) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3) {
  if (w < 0 || h < 0) throw ArgumentError("image size must be non-negative");
  for (std::size_t i = 0; i < rgb.size(); i += 3) std::copy(fill.begin(), fill.end(), rgb.begin() + i);
}

void Image::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  std::copy(c.begin(), c.end(), at(x, y));
}

void write_png(const Image& image, const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot write '" + path.string() + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.rgb.data() + static_cast<std::size_t>(y) * image.width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image image_from_tensor(const torch::Tensor& t) {
  auto x = t.detach().to(torch::kCPU, torch::kFloat32);
  if (x.dim() != 3) throw ArgumentError("image_from_tensor expects a rank-3 tensor");
  if (x.size(0) == 1) x = x.expand({3, -1, -1});
  if (x.size(0) == 3) x = x.permute({1, 2, 0});
  if (x.size(2) != 3) throw ArgumentError("image_from_tensor expects 1 or 3 channels");
  x = (x.clamp(0, 1) * 255.0f).round().to(torch::kUInt8).contiguous();
  Image img(static_cast<int>(x.size(1)), static_cast<int>(x.size(0)));
  std::copy(x.data_ptr<std::uint8_t>(), x.data_ptr<std::uint8_t>() + x.numel(), img.rgb.begin());
  return img;
}

Image upscale(const Image& image, int factor) {
  if (factor < 1) throw ArgumentError("upscale factor must be positive");
  Image out(image.width * factor, image.height * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const auto* src = image.rgb.data() + (static_cast<std::size_t>(y / factor) * image.width + x / factor) * 3;
      std::copy(src, src + 3, out.at(x, y));
    }
  }
  return out;
}

void paste(Image& dst, const Image& src, int x0, int y0) {
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      const auto* p = src.rgb.data() + (static_cast<std::size_t>(y) * src.width + x) * 3;
      dst.set(x0 + x, y0 + y, {p[0], p[1], p[2]});
    }
  }
}

Image tile(const std::vector<Image>& images, int cols, int pad, Rgb background) {
  if (images.empty()) return Image(0, 0);
  if (cols < 1) throw ArgumentError("tile needs at least one column");
  int cw = 0, ch = 0;
  for (const auto& im : images) {
    cw = std::max(cw, im.width);
    ch = std::max(ch, im.height);
  }
  const int n = static_cast<int>(images.size());
  const int rows = (n + cols - 1) / cols;
  const int used_cols = std::min(cols, n);
  Image out(used_cols * cw + (used_cols + 1) * pad, rows * ch + (rows + 1) * pad, background);
  for (int i = 0; i < n; ++i) {
    paste(out, images[static_cast<std::size_t>(i)], pad + (i % cols) * (cw + pad), pad + (i / cols) * (ch + pad));
  }
  return out;
}

void draw_line(Image& image, double x0, double y0, double x1, double y1, Rgb color) {
  const double len = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
  const int n = std::max(1, static_cast<int>(std::ceil(len)));
  for (int i = 0; i <= n; ++i) {
    const double a = static_cast<double>(i) / n;
    image.set(static_cast<int>(std::lround(x0 + a * (x1 - x0))), static_cast<int>(std::lround(y0 + a * (y1 - y0))),
              color);
  }
}

void draw_dot(Image& image, double x, double y, int radius, Rgb color) {
  const int cx = static_cast<int>(std::lround(x)), cy = static_cast<int>(std::lround(y));
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) image.set(cx + dx, cy + dy, color);
    }
  }
}

Rgb series_color(std::size_t i) {
  static const Rgb kColors[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
                                {148, 103, 189}, {140, 86, 75},  {227, 119, 194}, {127, 127, 127}};
  return kColors[i % std::size(kColors)];
}

Image plot_series(const std::vector<Series>& series, int width, int height) {
  Image img(width, height);
  const int left = 40, right = 12, top = 12, bottom = 28;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + (ymin == 0 ? 1 : std::abs(ymin) * 0.1);
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  const Rgb grid{225, 225, 225}, axis{60, 60, 60};
  for (int i = 0; i <= 4; ++i) {
    const double gy = top + ph * i / 4.0, gx = left + pw * i / 4.0;
    draw_line(img, left, gy, left + pw, gy, grid);
    draw_line(img, gx, top, gx, top + ph, grid);
  }
  draw_line(img, left, top + ph, left + pw, top + ph, axis);
  draw_line(img, left, top, left, top + ph, axis);
  for (const auto& s : series) {
    bool have = false;
    double lx = 0, ly = 0;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        have = false;
        continue;
      }
      const double x = px(s.x[i]), y = py(s.y[i]);
      if (have) draw_line(img, lx, ly, x, y, s.color);
      lx = x, ly = y, have = true;
    }
  }
  return img;
}

}  // namespace compvid
