#pragma once

#include "l2caf/network.hpp"
#include "l2caf/tensor.hpp"

namespace l2caf {

enum class SaliencySource { kGradCam, kGradCamAbs, kCam, kL2Caf, kSoftmaxCaf, kGaussianCaf };

struct SaliencyMap {
  Tensor grid;  // [h, w] at feature-map resolution, nonnegative
  SaliencySource source = SaliencySource::kGradCam;
  /// true when the map collapsed to all zeros (counts as a localization miss)
  bool degenerate() const { return grid.max() <= 0.0; }
};

/// ReLU(sum_k alpha_k A^k) with alpha_k the spatial mean of the gradient of
/// the class score w.r.t. channel k of the at_layer feature map.
SaliencyMap grad_cam(const NetworkModel& m, const Tensor& x, int at_layer, int target_class);

enum class RetrievalCamMode { kRelu, kAbs };
enum class GradientReduction { kSum, kMean };

/// Retrieval variant: the gradient target is the raw embedding (before any
/// unit normalization) reduced to a scalar. kRelu keeps the classification
/// rectifier; kAbs takes the absolute channel sum instead.
SaliencyMap grad_cam_retrieval(const NetworkModel& m, const Tensor& x, int at_layer,
                               RetrievalCamMode mode,
                               GradientReduction reduction = GradientReduction::kSum);

/// ReLU of the logit column applied to the pre-GAP feature map; requires a
/// conv trunk ending in GAP followed by a single dense logits layer.
SaliencyMap cam(const NetworkModel& m, const Tensor& x, int target_class);

}  // namespace l2caf
