#include "l2caf/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace l2caf {

namespace {

unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

void draw_box(Tensor& img, const BoundingBox& b, double r, double g, double bl) {
  const int h = img.dim(0), w = img.dim(1);
  auto paint = [&](int row, int col) {
    if (row < 0 || row >= h || col < 0 || col >= w) return;
    img.at3(row, col, 0) = r;
    img.at3(row, col, 1) = g;
    img.at3(row, col, 2) = bl;
  };
  for (int c = b.x_min; c < b.x_max; ++c) {
    paint(b.y_min, c);
    paint(b.y_max - 1, c);
  }
  for (int row = b.y_min; row < b.y_max; ++row) {
    paint(row, b.x_min);
    paint(row, b.x_max - 1);
  }
}

}  // namespace

void write_pgm(const std::string& path, const Tensor& grid) {
  if (grid.rank() != 2) throw ShapeError("write_pgm: grid must be 2-D, got " + grid.shape_str());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "P5\n" << grid.dim(1) << " " << grid.dim(0) << "\n255\n";
  for (int i = 0; i < grid.size(); ++i) out.put(static_cast<char>(quantize(grid[i])));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3)
    throw ShapeError("write_ppm: image must be [h,w,3], got " + image.shape_str());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "P6\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
  for (int i = 0; i < image.size(); ++i) out.put(static_cast<char>(quantize(image[i])));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

Tensor overlay_heatmap(const Tensor& image, const Tensor& heatmap,
                       const std::optional<BoundingBox>& estimated,
                       const std::optional<BoundingBox>& truth) {
  if (image.rank() != 3 || heatmap.rank() != 2 || image.dim(0) != heatmap.dim(0) ||
      image.dim(1) != heatmap.dim(1))
    throw ShapeError("overlay_heatmap: image " + image.shape_str() + " and heatmap " +
                     heatmap.shape_str() + " do not align");
  Tensor out = image;
  const int hw = heatmap.size();
  for (int i = 0; i < hw; ++i)
    for (int ch = 0; ch < 3; ++ch) out[i * 3 + ch] = 0.5 * out[i * 3 + ch] + 0.5 * heatmap[i];
  if (truth) draw_box(out, *truth, 0.0, 1.0, 0.0);
  if (estimated) draw_box(out, *estimated, 0.0, 0.3, 1.0);
  return out;
}

}  // namespace l2caf
