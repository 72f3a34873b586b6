#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "l2caf/network.hpp"
#include "l2caf/tensor.hpp"

namespace l2caf {

/// Spatial saliency grid resized to input resolution, values in [0,1].
struct Heatmap {
  Tensor grid;  // [H, W]
};

/// The optimization variable: raw spatial weights with a unit-L2 view.
struct AttentionFilter {
  Tensor raw;  // [h, w]

  int height() const { return raw.dim(0); }
  int width() const { return raw.dim(1); }
  /// raw / ||raw||_2 — the filter applied inside the network.
  Tensor normalized() const;
  /// |raw| / ||raw||_2 — the heatmap view.
  Tensor magnitude_normalized() const;
};

struct CafConfig {
  double lr = 0.1;
  double epsilon = 1e-5;
  int d = 50;            // plateau window for the stopping rule
  int max_iters = 1000;  // hard iteration cap
  std::uint64_t seed = 0;
};

enum class CafTermination { kConverged, kMaxIters };
enum class FilterConstraint { kUnitL2, kSoftmax, kGaussian };

struct CafResult {
  AttentionFilter filter;  // for the Gaussian constraint: the evaluated grid
  FilterConstraint constraint = FilterConstraint::kUnitL2;
  std::vector<double> loss_history;          // one entry per iteration
  std::vector<double> applied_norm_history;  // L2 norm of the applied filter
  int iterations = 0;
  CafTermination terminated_by = CafTermination::kMaxIters;
};

struct CafObjective {
  enum class Kind { kOblivious, kClassSpecific };
  Kind kind = Kind::kOblivious;
  int target_class = -1;

  static CafObjective oblivious() { return {}; }
  static CafObjective class_specific(int c) { return {Kind::kClassSpecific, c}; }
};

struct GaussianFilterParams {
  double mu_row = 0.0;
  double mu_col = 0.0;
};

/// Gradient descent on the raw filter to minimize
/// ||NT(x) - FT(x, f/||f||)||^2; stops when the loss plateaus over d
/// iterations (|L_l - L_{l-d}| < epsilon) or at max_iters.
CafResult optimize_class_oblivious(const NetworkModel& m, const Tensor& x, int at_layer,
                                   const CafConfig& cfg);

/// Same loop minimizing -FT_c + sum_{i != c} FT_i on a logits head.
CafResult optimize_class_specific(const NetworkModel& m, const Tensor& x, int at_layer,
                                  int target_class, const CafConfig& cfg);

/// Sub-problem endpoints: iterations start from the cached activation
/// V = trace[at_layer] and target V' = trace[endpoint_layer]; nothing before
/// at_layer is re-executed. With endpoint = network output this matches the
/// vanilla objective bitwise.
CafResult optimize_fast(const NetworkModel& m, const ActivationTrace& trace, int at_layer,
                        int endpoint_layer, const CafConfig& cfg, const CafObjective& objective);

/// Same loop with the softmax-constrained view (positive, sums to 1).
CafResult optimize_softmax_filter(const NetworkModel& m, const Tensor& x, int at_layer,
                                  const CafConfig& cfg, const CafObjective& objective);

/// Isotropic Gaussian bump with fixed identity covariance; only the mean is
/// optimized. The filter is applied unnormalized (peak 1).
std::pair<CafResult, GaussianFilterParams> optimize_gaussian_filter(
    const NetworkModel& m, const Tensor& x, int at_layer, const CafConfig& cfg,
    const CafObjective& objective);

/// Per-frame filters for a recurrent model, optimized sequentially: filter t
/// is active on frame t alone while the others pass through unfiltered; the
/// target is the unfiltered sequence output.
std::vector<CafResult> optimize_recurrent_sequence(const NetworkModel& m,
                                                   const std::vector<Tensor>& frames,
                                                   const CafConfig& cfg);

/// |f|/||f|| (or the constraint's own display view), bilinearly resized to
/// (H, W) and min-max rescaled to [0,1].
Heatmap heatmap_from_filter(const CafResult& result, int out_h, int out_w);

/// Shared finalization for saliency grids: resize then min-max rescale.
Heatmap heatmap_from_grid(const Tensor& grid, int out_h, int out_w);

}  // namespace l2caf
