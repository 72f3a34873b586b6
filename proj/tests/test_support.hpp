#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "l2caf/network.hpp"
#include "l2caf/rng.hpp"
#include "l2caf/tape.hpp"
#include "l2caf/tensor.hpp"

namespace l2caf::testing {

inline Tensor random_tensor(std::vector<int> shape, SplitRng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

/// Random values in [-1,1] kept away from zero (kinks of relu/abs/sqrt).
inline Tensor random_tensor_away_from(std::vector<int> shape, SplitRng& rng, double gap) {
  Tensor t(std::move(shape));
  for (int i = 0; i < t.size(); ++i) {
    double v;
    do {
      v = rng.uniform(-1.0, 1.0);
    } while (std::fabs(v) < gap);
    t[i] = v;
  }
  return t;
}

inline Tensor random_integer_tensor(std::vector<int> shape, SplitRng& rng, int lo = -3,
                                    int hi = 3) {
  Tensor t(std::move(shape));
  for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform_int(lo, hi);
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (int i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

/// Scaled relative error, the usual gradient-check metric.
inline double max_rel_err(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    const double scale = std::max({1.0, std::fabs(a[i]), std::fabs(b[i])});
    m = std::max(m, std::fabs(a[i] - b[i]) / scale);
  }
  return m;
}

/// Central finite differences of a scalar function, step 1e-6.
template <typename F>
Tensor finite_difference(const F& f, Tensor x, double step = 1e-6) {
  Tensor g = Tensor::zeros_like(x);
  for (int i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double fp = f(x);
    x[i] = orig - step;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

using GraphBuilder = std::function<ValueId(Tape&, const std::vector<ValueId>&)>;

/// Autodiff vs finite differences for every input of a scalar graph.
/// Returns the worst scaled relative error across all inputs.
inline double gradient_check(const GraphBuilder& build, std::vector<Tensor> inputs) {
  Tape t;
  std::vector<ValueId> ids;
  for (const Tensor& in : inputs) ids.push_back(t.leaf(in));
  ValueId loss = build(t, ids);
  t.backward(loss);

  double worst = 0.0;
  for (std::size_t q = 0; q < inputs.size(); ++q) {
    Tensor ad = t.grad(ids[q]);
    Tensor fd = finite_difference(
        [&](const Tensor& xq) {
          Tape t2;
          std::vector<ValueId> ids2;
          for (std::size_t r = 0; r < inputs.size(); ++r)
            ids2.push_back(t2.leaf(r == q ? xq : inputs[r]));
          return t2.value(build(t2, ids2))[0];
        },
        inputs[q]);
    worst = std::max(worst, max_rel_err(ad, fd));
  }
  return worst;
}

/// Independent quadruple-loop cross-correlation oracle.
inline Tensor naive_conv2d(const Tensor& x, const Tensor& k, int stride, int padding) {
  const int h = x.dim(0), w = x.dim(1), ci = x.dim(2);
  const int kh = k.dim(0), kw = k.dim(1), co = k.dim(3);
  const int oh = (h + 2 * padding - kh) / stride + 1;
  const int ow = (w + 2 * padding - kw) / stride + 1;
  Tensor y({oh, ow, co});
  for (int o = 0; o < co; ++o)
    for (int r = 0; r < oh; ++r)
      for (int c = 0; c < ow; ++c) {
        double acc = 0.0;
        for (int i = 0; i < ci; ++i)
          for (int a = 0; a < kh; ++a)
            for (int b = 0; b < kw; ++b) {
              const int ir = r * stride + a - padding;
              const int ic = c * stride + b - padding;
              if (ir < 0 || ir >= h || ic < 0 || ic >= w) continue;
              acc += x.at3(ir, ic, i) * k[((a * kw + b) * ci + i) * co + o];
            }
        y.at3(r, c, o) = acc;
      }
  return y;
}

/// Two-pass separable bilinear interpolation oracle (rows, then columns).
inline Tensor two_pass_bilinear(const Tensor& grid, int out_h, int out_w) {
  const int h = grid.dim(0), w = grid.dim(1);
  auto coord = [](int out_i, int out_n, int in_n) {
    return out_n > 1 ? static_cast<double>(out_i) * (in_n - 1) / (out_n - 1) : 0.0;
  };
  Tensor rows({out_h, w});
  for (int r = 0; r < out_h; ++r) {
    const double fr = coord(r, out_h, h);
    const int r0 = std::min(static_cast<int>(fr), h - 1);
    const int r1 = std::min(r0 + 1, h - 1);
    const double t = fr - r0;
    for (int c = 0; c < w; ++c) rows.at2(r, c) = (1.0 - t) * grid.at2(r0, c) + t * grid.at2(r1, c);
  }
  Tensor out({out_h, out_w});
  for (int c = 0; c < out_w; ++c) {
    const double fc = coord(c, out_w, w);
    const int c0 = std::min(static_cast<int>(fc), w - 1);
    const int c1 = std::min(c0 + 1, w - 1);
    const double t = fc - c0;
    for (int r = 0; r < out_h; ++r) out.at2(r, c) = (1.0 - t) * rows.at2(r, c0) + t * rows.at2(r, c1);
  }
  return out;
}

/// Small random shape-consistent conv net for property tests.
inline NetworkModel random_toy_net(SplitRng& rng, HeadKind head) {
  const int hw = rng.uniform_int(6, 10);
  const int cin = rng.uniform_int(1, 3);
  std::vector<LayerSpec> layers;
  const int blocks = rng.uniform_int(1, 2);
  for (int b = 0; b < blocks; ++b) {
    const int k = rng.bernoulli(0.5) ? 3 : 1;
    layers.push_back(LayerSpec::conv(k, k, rng.uniform_int(2, 5), 1, k == 3 ? 1 : 0));
    layers.push_back(LayerSpec::relu());
  }
  layers.push_back(LayerSpec::gap());
  if (head == HeadKind::kLogits) {
    layers.push_back(LayerSpec::dense(rng.uniform_int(2, 4)));
  } else {
    layers.push_back(LayerSpec::dense(rng.uniform_int(3, 8)));
    if (rng.bernoulli(0.5)) layers.push_back(LayerSpec::embed_normalize());
  }
  return build_network({hw, hw, cin}, layers, head, rng.next_u64());
}

}  // namespace l2caf::testing
