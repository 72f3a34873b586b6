#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "l2caf/attention.hpp"
#include "l2caf/tensor.hpp"

namespace l2caf {

/// Half-open pixel box [x_min, x_max) x [y_min, y_max).
struct BoundingBox {
  int x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  bool valid() const { return x_min < x_max && y_min < y_max; }
  long long area() const { return static_cast<long long>(x_max - x_min) * (y_max - y_min); }
  bool operator==(const BoundingBox&) const = default;
};

double iou(const BoundingBox& a, const BoundingBox& b);

struct Mask {
  int h = 0, w = 0;
  std::vector<std::uint8_t> v;  // row-major 0/1

  bool at(int r, int c) const { return v[static_cast<std::size_t>(r * w + c)] != 0; }
  bool empty() const;
};

/// mask[i,j] = heatmap[i,j] >= theta_frac * max(heatmap). An identically
/// zero heatmap produces an empty mask (counted as a localization miss).
Mask threshold_heatmap(const Heatmap& h, double theta_frac);

/// Tight box of the largest 8-connected component; ties broken by the
/// smallest (row, col) seed in scan order. nullopt on an empty mask.
std::optional<BoundingBox> largest_component_box(const Mask& mask);

struct EvalRecord {
  std::string image_id;
  std::string method;
  bool prediction_correct = false;
  std::optional<BoundingBox> estimated;
  BoundingBox truth;
  double iou_value = 0.0;
  bool localization_hit = false;  // prediction_correct && iou >= 0.5
};

EvalRecord make_record(std::string image_id, std::string method, bool prediction_correct,
                       std::optional<BoundingBox> estimated, BoundingBox truth);

/// Fraction of records with localization_hit.
double localization_accuracy(const std::vector<EvalRecord>& records);

/// Top-k rule: a hit when any of the (class, box) predictions matches the
/// true class and that prediction's own box reaches IoU >= 0.5.
struct RankedPrediction {
  int predicted_class = -1;
  std::optional<BoundingBox> box;
};
bool topk_localization_hit(const std::vector<RankedPrediction>& predictions, int true_class,
                           const BoundingBox& truth);

/// Nearest neighbor by Euclidean distance excluding self, ties by lower
/// index; hit when labels match.
double recall_at_1(const std::vector<Tensor>& embeddings, const std::vector<int>& labels);

/// k-means++ seeding, Lloyd iterations, 10 restarts, best inertia kept.
std::vector<int> kmeans(const std::vector<Tensor>& points, int k, std::uint64_t seed);

/// I(a,b) / sqrt(H(a) H(b)); if either entropy is zero: 1 when the two
/// partitions are identical as set partitions, else 0.
double nmi(const std::vector<int>& labels_true, const std::vector<int>& labels_pred);

/// Spearman rank correlation with average ranks on ties.
double spearman_correlation(const Tensor& a, const Tensor& b);

}  // namespace l2caf
