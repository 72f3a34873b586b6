#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "l2caf/evaluation.hpp"
#include "l2caf/tensor.hpp"

namespace l2caf {

enum class ShapeClass { kSquare = 0, kDisk = 1, kCross = 2, kTriangle = 3, kRing = 4 };

struct SyntheticSample {
  Tensor image;  // [H, W, 3] in [0,1]
  int class_id = 0;
  BoundingBox box;  // tight around the shape
  std::uint64_t seed = 0;
};

struct ShapeDatasetConfig {
  int n = 100;
  int height = 32;
  int width = 32;
  std::vector<ShapeClass> classes = {ShapeClass::kSquare, ShapeClass::kDisk, ShapeClass::kCross,
                                     ShapeClass::kTriangle};
  double noise_sigma = 0.1;  // background amplitude
  double min_scale = 0.2;    // shape size relative to min(H, W)
  double max_scale = 0.6;
  std::uint64_t seed = 0;
};

/// One colored shape per image on a uniform-noise background; the returned
/// box is the exact tight box of the rasterized shape. Deterministic,
/// parallelizable by sample index (per-sample derived seeds).
std::vector<SyntheticSample> generate_shapes(const ShapeDatasetConfig& cfg);

/// Frame sequences: the same shape translating along a straight line with a
/// per-frame tight box; the event class is the shape class.
std::vector<std::vector<SyntheticSample>> generate_sequences(int n_events, int frames,
                                                             const ShapeDatasetConfig& cfg);

/// PPM dump plus a manifest CSV (id, class, x_min, y_min, x_max, y_max, seed).
void dump_dataset(const std::string& dir, const std::vector<SyntheticSample>& samples);

}  // namespace l2caf
