#pragma once

#include <vector>

#include "l2caf/tensor.hpp"

namespace l2caf {

using ValueId = int;

enum class OpKind {
  kLeaf,
  kConv2d,
  kRelu,
  kGap,
  kMatVec,
  kDense,
  kFlatten,
  kReshape,
  kSoftmax,
  kAdd,
  kMul,
  kScaleAdd,
  kSquaredDistance,
  kDot,
  kSum,
  kComponent,
  kSqrt,
  kL2Normalize,
  kSpatialMul,
  kSigmoid,
  kTanh,
  kPack,
  kCrossEntropyLogits,
  kGaussianGrid,
};

struct TapeNode {
  OpKind op = OpKind::kLeaf;
  std::vector<ValueId> parents;
  Tensor value;
  // op parameters (stride/padding, component index, CE target, grid dims)
  int p0 = 0, p1 = 0;
  double a = 0.0, b = 0.0;
};

// Reverse-mode autodiff over an eagerly evaluated operation graph. Node
// creation order is a topological order, so backward is a single reverse
// sweep. A tape is single-threaded and never shared.
class Tape {
 public:
  ValueId leaf(Tensor v);

  ValueId conv2d(ValueId x, ValueId kernel, int stride, int padding);
  ValueId relu(ValueId x);
  ValueId global_average_pool(ValueId x);
  ValueId matvec(ValueId w, ValueId x);
  ValueId dense(ValueId w, ValueId x, ValueId b);
  ValueId flatten(ValueId x);
  ValueId reshape(ValueId x, std::vector<int> shape);
  ValueId softmax(ValueId x);
  ValueId add(ValueId a, ValueId b);
  ValueId mul(ValueId a, ValueId b);
  /// y = alpha * x + beta, elementwise.
  ValueId scale_add(ValueId x, double alpha, double beta);
  /// scalar sum((a - b)^2)
  ValueId squared_distance(ValueId a, ValueId b);
  ValueId dot(ValueId a, ValueId b);
  ValueId sum(ValueId x);
  /// scalar x[index]
  ValueId component(ValueId x, int index);
  ValueId sqrt(ValueId x);
  ValueId l2_normalize(ValueId x);
  ValueId spatial_multiply(ValueId a, ValueId f);
  ValueId sigmoid(ValueId x);
  ValueId tanh(ValueId x);
  /// Concatenate scalar nodes into a vector.
  ValueId pack(const std::vector<ValueId>& scalars);
  ValueId cross_entropy_logits(ValueId z, int target);
  ValueId gaussian_grid(ValueId mu, int h, int w);

  /// Populates gradients for every node reachable from the scalar loss.
  void backward(ValueId loss);

  const Tensor& value(ValueId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  /// After backward(): accumulated gradient; zeros for unreachable nodes.
  Tensor grad(ValueId id) const;

  int size() const { return static_cast<int>(nodes_.size()); }
  void clear();

 private:
  ValueId push(TapeNode node);
  Tensor& grad_buf(ValueId id);
  void backprop_node(ValueId id);

  std::vector<TapeNode> nodes_;
  std::vector<Tensor> grads_;
};

/// One step of the minimal gated recurrent cell, composed from tape
/// primitives so its gradient falls out of the existing backward rules.
ValueId gated_cell_step(Tape& t, ValueId z, ValueId h,
                        ValueId wg, ValueId ug, ValueId bg,
                        ValueId wc, ValueId uc, ValueId bc);

}  // namespace l2caf
