#include "l2caf/baselines.hpp"

#include <cmath>

#include "l2caf/kernels.hpp"

namespace l2caf {

namespace {

// Channel weights = spatial mean of d(scalar)/dA, then the weighted channel
// sum of A itself.
Tensor weighted_channel_sum(const Tensor& a, const Tensor& grad_a) {
  const int h = a.dim(0), w = a.dim(1), c = a.dim(2);
  std::vector<double> alpha(static_cast<std::size_t>(c), 0.0);
  for (int i = 0; i < h * w; ++i)
    for (int ch = 0; ch < c; ++ch) alpha[static_cast<std::size_t>(ch)] += grad_a[i * c + ch];
  const double inv = 1.0 / (h * w);
  for (double& v : alpha) v *= inv;

  Tensor map({h, w});
  for (int i = 0; i < h * w; ++i) {
    double acc = 0.0;
    for (int ch = 0; ch < c; ++ch) acc += alpha[static_cast<std::size_t>(ch)] * a[i * c + ch];
    map[i] = acc;
  }
  return map;
}

struct TracedGradient {
  Tensor activation;
  Tensor grad;
};

TracedGradient activation_gradient(const NetworkModel& m, const Tensor& x, int at_layer,
                                   int scalar_of_layer, bool sum_components, int component,
                                   GradientReduction reduction) {
  Tape t;
  TapedWeights w(t, m);
  ValueId x_id = t.leaf(x);
  std::vector<ValueId> nodes;
  taped_forward(t, w, x_id, -1, scalar_of_layer, std::nullopt, &nodes);
  ValueId a_node = nodes[static_cast<std::size_t>(at_layer)];
  ValueId out = nodes.back();
  ValueId scalar;
  if (sum_components) {
    scalar = t.sum(out);
    if (reduction == GradientReduction::kMean)
      scalar = t.scale_add(scalar, 1.0 / t.value(out).size(), 0.0);
  } else {
    scalar = t.component(out, component);
  }
  t.backward(scalar);
  return {t.value(a_node), t.grad(a_node)};
}

void check_spatial_layer(const NetworkModel& m, int at_layer) {
  if (at_layer < 0 || at_layer >= static_cast<int>(m.layers.size()))
    throw IncompatibilityError("feature layer index out of range");
  auto shapes = infer_shapes(m.input_shape, m.layers);
  if (shapes[static_cast<std::size_t>(at_layer) + 1].size() != 3)
    throw IncompatibilityError("feature layer output is not spatial");
}

}  // namespace

SaliencyMap grad_cam(const NetworkModel& m, const Tensor& x, int at_layer, int target_class) {
  if (m.head != HeadKind::kLogits)
    throw IncompatibilityError("grad_cam requires a logits head; use grad_cam_retrieval");
  if (target_class < 0 || target_class >= m.head_size)
    throw std::out_of_range("grad_cam: class index out of range");
  check_spatial_layer(m, at_layer);
  auto traced = activation_gradient(m, x, at_layer, m.output_layer(), false, target_class,
                                    GradientReduction::kSum);
  Tensor map = kernels::relu(weighted_channel_sum(traced.activation, traced.grad));
  return {std::move(map), SaliencySource::kGradCam};
}

SaliencyMap grad_cam_retrieval(const NetworkModel& m, const Tensor& x, int at_layer,
                               RetrievalCamMode mode, GradientReduction reduction) {
  if (m.head != HeadKind::kEmbedding)
    throw IncompatibilityError("grad_cam_retrieval requires an embedding head; use grad_cam");
  check_spatial_layer(m, at_layer);
  // gradients flow from the raw embedding, before any unit normalization
  auto traced = activation_gradient(m, x, at_layer, m.raw_output_layer(), true, -1, reduction);
  Tensor pre = weighted_channel_sum(traced.activation, traced.grad);
  Tensor map = pre;
  if (mode == RetrievalCamMode::kRelu) {
    map = kernels::relu(pre);
  } else {
    for (int i = 0; i < map.size(); ++i) map[i] = std::fabs(map[i]);
  }
  return {std::move(map),
          mode == RetrievalCamMode::kRelu ? SaliencySource::kGradCam : SaliencySource::kGradCamAbs};
}

SaliencyMap cam(const NetworkModel& m, const Tensor& x, int target_class) {
  if (m.head != HeadKind::kLogits) throw IncompatibilityError("cam requires a logits head");
  const int n = static_cast<int>(m.layers.size());
  const bool gap_dense_tail = n >= 3 &&
                              m.layers[static_cast<std::size_t>(n - 2)].kind == LayerKind::kGap &&
                              m.layers[static_cast<std::size_t>(n - 1)].kind == LayerKind::kDense;
  bool has_conv = false;
  for (const auto& s : m.layers)
    if (s.kind == LayerKind::kConv) has_conv = true;
  if (!gap_dense_tail || !has_conv)
    throw IncompatibilityError("cam requires a conv trunk ending in GAP followed by one dense layer");
  if (target_class < 0 || target_class >= m.head_size)
    throw std::out_of_range("cam: class index out of range");

  ActivationTrace trace;
  forward(m, x, &trace);
  const Tensor& a = trace.outputs[static_cast<std::size_t>(n - 3)];
  if (a.rank() != 3) throw IncompatibilityError("cam: pre-GAP activation is not spatial");
  const Tensor& weight = m.weights[static_cast<std::size_t>(n - 1)][0];  // [classes, channels]
  const int h = a.dim(0), w = a.dim(1), c = a.dim(2);

  Tensor map({h, w});
  for (int i = 0; i < h * w; ++i) {
    double acc = 0.0;
    for (int ch = 0; ch < c; ++ch) acc += weight[target_class * c + ch] * a[i * c + ch];
    map[i] = acc;
  }
  return {kernels::relu(map), SaliencySource::kCam};
}

}  // namespace l2caf
