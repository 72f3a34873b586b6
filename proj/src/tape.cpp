#include "l2caf/tape.hpp"

#include <cmath>

#include "l2caf/kernels.hpp"

namespace l2caf {

namespace k = kernels;

ValueId Tape::push(TapeNode node) {
  nodes_.push_back(std::move(node));
  return static_cast<ValueId>(nodes_.size() - 1);
}

ValueId Tape::leaf(Tensor v) {
  TapeNode n;
  n.op = OpKind::kLeaf;
  n.value = std::move(v);
  return push(std::move(n));
}

ValueId Tape::conv2d(ValueId x, ValueId kernel, int stride, int padding) {
  TapeNode n;
  n.op = OpKind::kConv2d;
  n.parents = {x, kernel};
  n.p0 = stride;
  n.p1 = padding;
  n.value = k::conv2d(value(x), value(kernel), stride, padding);
  return push(std::move(n));
}

ValueId Tape::relu(ValueId x) {
  TapeNode n;
  n.op = OpKind::kRelu;
  n.parents = {x};
  n.value = k::relu(value(x));
  return push(std::move(n));
}

ValueId Tape::global_average_pool(ValueId x) {
  TapeNode n;
  n.op = OpKind::kGap;
  n.parents = {x};
  n.value = k::global_average_pool(value(x));
  return push(std::move(n));
}

ValueId Tape::matvec(ValueId w, ValueId x) {
  TapeNode n;
  n.op = OpKind::kMatVec;
  n.parents = {w, x};
  n.value = k::matvec(value(w), value(x));
  return push(std::move(n));
}

ValueId Tape::dense(ValueId w, ValueId x, ValueId b) {
  TapeNode n;
  n.op = OpKind::kDense;
  n.parents = {w, x, b};
  n.value = k::dense(value(w), value(x), value(b));
  return push(std::move(n));
}

ValueId Tape::flatten(ValueId x) { return reshape(x, {value(x).size()}); }

ValueId Tape::reshape(ValueId x, std::vector<int> shape) {
  TapeNode n;
  n.op = OpKind::kReshape;
  n.parents = {x};
  const Tensor& v = value(x);
  Tensor out(std::move(shape), std::vector<double>(v.data(), v.data() + v.size()));
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::softmax(ValueId x) {
  TapeNode n;
  n.op = OpKind::kSoftmax;
  n.parents = {x};
  n.value = k::softmax(value(x));
  return push(std::move(n));
}

ValueId Tape::add(ValueId a, ValueId b) {
  if (!value(a).same_shape(value(b)))
    throw ShapeError("add: shape mismatch " + value(a).shape_str() + " vs " + value(b).shape_str());
  TapeNode n;
  n.op = OpKind::kAdd;
  n.parents = {a, b};
  Tensor out = value(a);
  for (int i = 0; i < out.size(); ++i) out[i] += value(b)[i];
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::mul(ValueId a, ValueId b) {
  if (!value(a).same_shape(value(b)))
    throw ShapeError("mul: shape mismatch " + value(a).shape_str() + " vs " + value(b).shape_str());
  TapeNode n;
  n.op = OpKind::kMul;
  n.parents = {a, b};
  Tensor out = value(a);
  for (int i = 0; i < out.size(); ++i) out[i] *= value(b)[i];
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::scale_add(ValueId x, double alpha, double beta) {
  TapeNode n;
  n.op = OpKind::kScaleAdd;
  n.parents = {x};
  n.a = alpha;
  n.b = beta;
  Tensor out = value(x);
  for (int i = 0; i < out.size(); ++i) out[i] = alpha * out[i] + beta;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::squared_distance(ValueId a, ValueId b) {
  if (!value(a).same_shape(value(b)))
    throw ShapeError("squared_distance: shape mismatch " + value(a).shape_str() + " vs " + value(b).shape_str());
  TapeNode n;
  n.op = OpKind::kSquaredDistance;
  n.parents = {a, b};
  double s = 0.0;
  for (int i = 0; i < value(a).size(); ++i) {
    const double d = value(a)[i] - value(b)[i];
    s += d * d;
  }
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

ValueId Tape::dot(ValueId a, ValueId b) {
  if (!value(a).same_shape(value(b)))
    throw ShapeError("dot: shape mismatch " + value(a).shape_str() + " vs " + value(b).shape_str());
  TapeNode n;
  n.op = OpKind::kDot;
  n.parents = {a, b};
  double s = 0.0;
  for (int i = 0; i < value(a).size(); ++i) s += value(a)[i] * value(b)[i];
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

ValueId Tape::sum(ValueId x) {
  TapeNode n;
  n.op = OpKind::kSum;
  n.parents = {x};
  n.value = Tensor::scalar(value(x).sum());
  return push(std::move(n));
}

ValueId Tape::component(ValueId x, int index) {
  if (index < 0 || index >= value(x).size())
    throw std::out_of_range("component: index out of range");
  TapeNode n;
  n.op = OpKind::kComponent;
  n.parents = {x};
  n.p0 = index;
  n.value = Tensor::scalar(value(x)[index]);
  return push(std::move(n));
}

ValueId Tape::sqrt(ValueId x) {
  TapeNode n;
  n.op = OpKind::kSqrt;
  n.parents = {x};
  n.value = k::sqrt(value(x));
  return push(std::move(n));
}

ValueId Tape::l2_normalize(ValueId x) {
  TapeNode n;
  n.op = OpKind::kL2Normalize;
  n.parents = {x};
  n.value = k::l2_normalize(value(x));
  return push(std::move(n));
}

ValueId Tape::spatial_multiply(ValueId a, ValueId f) {
  TapeNode n;
  n.op = OpKind::kSpatialMul;
  n.parents = {a, f};
  n.value = k::spatial_multiply(value(a), value(f));
  return push(std::move(n));
}

ValueId Tape::sigmoid(ValueId x) {
  TapeNode n;
  n.op = OpKind::kSigmoid;
  n.parents = {x};
  n.value = k::sigmoid(value(x));
  return push(std::move(n));
}

ValueId Tape::tanh(ValueId x) {
  TapeNode n;
  n.op = OpKind::kTanh;
  n.parents = {x};
  n.value = k::tanh(value(x));
  return push(std::move(n));
}

ValueId Tape::pack(const std::vector<ValueId>& scalars) {
  if (scalars.empty()) throw ShapeError("pack: need at least one scalar");
  TapeNode n;
  n.op = OpKind::kPack;
  n.parents = scalars;
  Tensor out({static_cast<int>(scalars.size())});
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (value(scalars[i]).size() != 1) throw ShapeError("pack: inputs must be scalars");
    out[static_cast<int>(i)] = value(scalars[i])[0];
  }
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::cross_entropy_logits(ValueId z, int target) {
  TapeNode n;
  n.op = OpKind::kCrossEntropyLogits;
  n.parents = {z};
  n.p0 = target;
  n.value = Tensor::scalar(k::cross_entropy_logits(value(z), target));
  return push(std::move(n));
}

ValueId Tape::gaussian_grid(ValueId mu, int h, int w) {
  TapeNode n;
  n.op = OpKind::kGaussianGrid;
  n.parents = {mu};
  n.p0 = h;
  n.p1 = w;
  n.value = k::gaussian_grid(value(mu), h, w);
  return push(std::move(n));
}

Tensor& Tape::grad_buf(ValueId id) {
  Tensor& g = grads_[static_cast<std::size_t>(id)];
  if (g.empty()) g = Tensor::zeros_like(nodes_[static_cast<std::size_t>(id)].value);
  return g;
}

Tensor Tape::grad(ValueId id) const {
  const Tensor& g = grads_[static_cast<std::size_t>(id)];
  if (g.empty()) return Tensor::zeros_like(nodes_[static_cast<std::size_t>(id)].value);
  return g;
}

void Tape::clear() {
  nodes_.clear();
  grads_.clear();
}

void Tape::backward(ValueId loss) {
  if (value(loss).size() != 1)
    throw ShapeError("backward: loss must be scalar, got " + value(loss).shape_str());
  grads_.assign(nodes_.size(), Tensor{});
  grad_buf(loss)[0] = 1.0;
  for (ValueId id = loss; id >= 0; --id) {
    if (grads_[static_cast<std::size_t>(id)].empty()) continue;
    backprop_node(id);
  }
}

void Tape::backprop_node(ValueId id) {
  const TapeNode& n = nodes_[static_cast<std::size_t>(id)];
  const Tensor& gy = grads_[static_cast<std::size_t>(id)];
  switch (n.op) {
    case OpKind::kLeaf:
      break;
    case OpKind::kConv2d:
      k::conv2d_backward(value(n.parents[0]), value(n.parents[1]), n.p0, n.p1, gy,
                         grad_buf(n.parents[0]), grad_buf(n.parents[1]));
      break;
    case OpKind::kRelu:
      k::relu_backward(value(n.parents[0]), gy, grad_buf(n.parents[0]));
      break;
    case OpKind::kGap:
      k::global_average_pool_backward(value(n.parents[0]), gy, grad_buf(n.parents[0]));
      break;
    case OpKind::kMatVec:
      k::matvec_backward(value(n.parents[0]), value(n.parents[1]), gy,
                         grad_buf(n.parents[0]), grad_buf(n.parents[1]));
      break;
    case OpKind::kDense: {
      k::matvec_backward(value(n.parents[0]), value(n.parents[1]), gy,
                         grad_buf(n.parents[0]), grad_buf(n.parents[1]));
      Tensor& gb = grad_buf(n.parents[2]);
      for (int i = 0; i < gy.size(); ++i) gb[i] += gy[i];
      break;
    }
    case OpKind::kFlatten:
    case OpKind::kReshape: {
      Tensor& gx = grad_buf(n.parents[0]);
      for (int i = 0; i < gy.size(); ++i) gx[i] += gy[i];
      break;
    }
    case OpKind::kSoftmax:
      k::softmax_backward(n.value, gy, grad_buf(n.parents[0]));
      break;
    case OpKind::kAdd: {
      Tensor& ga = grad_buf(n.parents[0]);
      Tensor& gb = grad_buf(n.parents[1]);
      for (int i = 0; i < gy.size(); ++i) {
        ga[i] += gy[i];
        gb[i] += gy[i];
      }
      break;
    }
    case OpKind::kMul: {
      const Tensor& a = value(n.parents[0]);
      const Tensor& b = value(n.parents[1]);
      Tensor& ga = grad_buf(n.parents[0]);
      Tensor& gb = grad_buf(n.parents[1]);
      for (int i = 0; i < gy.size(); ++i) {
        ga[i] += gy[i] * b[i];
        gb[i] += gy[i] * a[i];
      }
      break;
    }
    case OpKind::kScaleAdd: {
      Tensor& gx = grad_buf(n.parents[0]);
      for (int i = 0; i < gy.size(); ++i) gx[i] += gy[i] * n.a;
      break;
    }
    case OpKind::kSquaredDistance: {
      const Tensor& a = value(n.parents[0]);
      const Tensor& b = value(n.parents[1]);
      Tensor& ga = grad_buf(n.parents[0]);
      Tensor& gb = grad_buf(n.parents[1]);
      const double g = gy[0];
      for (int i = 0; i < a.size(); ++i) {
        const double d = 2.0 * (a[i] - b[i]) * g;
        ga[i] += d;
        gb[i] -= d;
      }
      break;
    }
    case OpKind::kDot: {
      const Tensor& a = value(n.parents[0]);
      const Tensor& b = value(n.parents[1]);
      Tensor& ga = grad_buf(n.parents[0]);
      Tensor& gb = grad_buf(n.parents[1]);
      const double g = gy[0];
      for (int i = 0; i < a.size(); ++i) {
        ga[i] += g * b[i];
        gb[i] += g * a[i];
      }
      break;
    }
    case OpKind::kSum: {
      Tensor& gx = grad_buf(n.parents[0]);
      const double g = gy[0];
      for (int i = 0; i < gx.size(); ++i) gx[i] += g;
      break;
    }
    case OpKind::kComponent:
      grad_buf(n.parents[0])[n.p0] += gy[0];
      break;
    case OpKind::kSqrt:
      k::sqrt_backward(n.value, gy, grad_buf(n.parents[0]));
      break;
    case OpKind::kL2Normalize:
      k::l2_normalize_backward(value(n.parents[0]), n.value, gy, grad_buf(n.parents[0]));
      break;
    case OpKind::kSpatialMul:
      k::spatial_multiply_backward(value(n.parents[0]), value(n.parents[1]), gy,
                                   grad_buf(n.parents[0]), grad_buf(n.parents[1]));
      break;
    case OpKind::kSigmoid:
      k::sigmoid_backward(n.value, gy, grad_buf(n.parents[0]));
      break;
    case OpKind::kTanh:
      k::tanh_backward(n.value, gy, grad_buf(n.parents[0]));
      break;
    case OpKind::kPack:
      for (std::size_t i = 0; i < n.parents.size(); ++i)
        grad_buf(n.parents[i])[0] += gy[static_cast<int>(i)];
      break;
    case OpKind::kCrossEntropyLogits:
      k::cross_entropy_logits_backward(value(n.parents[0]), n.p0, gy[0], grad_buf(n.parents[0]));
      break;
    case OpKind::kGaussianGrid:
      k::gaussian_grid_backward(value(n.parents[0]), n.value, gy, grad_buf(n.parents[0]));
      break;
  }
}

ValueId gated_cell_step(Tape& t, ValueId z, ValueId h,
                        ValueId wg, ValueId ug, ValueId bg,
                        ValueId wc, ValueId uc, ValueId bc) {
  ValueId gate = t.sigmoid(t.add(t.add(t.matvec(wg, z), t.matvec(ug, h)), bg));
  ValueId cand = t.tanh(t.add(t.add(t.matvec(wc, z), t.matvec(uc, h)), bc));
  ValueId keep = t.scale_add(gate, -1.0, 1.0);
  return t.add(t.mul(gate, cand), t.mul(keep, h));
}

}  // namespace l2caf
