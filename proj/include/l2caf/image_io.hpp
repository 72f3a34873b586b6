#pragma once

#include <optional>
#include <string>

#include "l2caf/evaluation.hpp"
#include "l2caf/tensor.hpp"

namespace l2caf {

/// Binary PGM (P5), one byte per pixel from a [0,1] grid, round-to-nearest.
void write_pgm(const std::string& path, const Tensor& grid);

/// Binary PPM (P6) from a [0,1] HxWx3 image.
void write_ppm(const std::string& path, const Tensor& image);

/// 0.5-alpha blend of a heatmap over an RGB image, with optional box
/// outlines (estimated blue, ground truth green).
Tensor overlay_heatmap(const Tensor& image, const Tensor& heatmap,
                       const std::optional<BoundingBox>& estimated,
                       const std::optional<BoundingBox>& truth);

}  // namespace l2caf
