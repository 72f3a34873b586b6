#include "l2caf/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace l2caf::kernels {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int padding) {
  require(x.rank() == 3, "conv2d: input must be [h,w,c], got " + x.shape_str());
  require(k.rank() == 4, "conv2d: kernel must be [kh,kw,c_in,c_out], got " + k.shape_str());
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(padding >= 0, "conv2d: padding must be >= 0");
  const int h = x.dim(0), w = x.dim(1), ci = x.dim(2);
  const int kh = k.dim(0), kw = k.dim(1), kci = k.dim(2), co = k.dim(3);
  require(ci == kci, "conv2d: input channels " + x.shape_str() + " do not match kernel channels " + k.shape_str());
  require(h + 2 * padding >= kh && w + 2 * padding >= kw,
          "conv2d: padded input " + x.shape_str() + " smaller than kernel " + k.shape_str());
  const int oh = (h + 2 * padding - kh) / stride + 1;
  const int ow = (w + 2 * padding - kw) / stride + 1;

  Tensor y({oh, ow, co});
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      for (int o = 0; o < co; ++o) {
        double acc = 0.0;
        for (int a = 0; a < kh; ++a) {
          const int ir = r * stride + a - padding;
          if (ir < 0 || ir >= h) continue;
          for (int b = 0; b < kw; ++b) {
            const int ic = c * stride + b - padding;
            if (ic < 0 || ic >= w) continue;
            const double* xr = x.data() + (ir * w + ic) * ci;
            const double* kr = k.data() + ((a * kw + b) * ci) * co + o;
            for (int i = 0; i < ci; ++i) acc += xr[i] * kr[i * co];
          }
        }
        y.at3(r, c, o) = acc;
      }
    }
  }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& k, int stride, int padding,
                     const Tensor& gy, Tensor& gx, Tensor& gk) {
  const int h = x.dim(0), w = x.dim(1), ci = x.dim(2);
  const int kh = k.dim(0), kw = k.dim(1), co = k.dim(3);
  const int oh = gy.dim(0), ow = gy.dim(1);
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      for (int o = 0; o < co; ++o) {
        const double g = gy.at3(r, c, o);
        if (g == 0.0) continue;
        for (int a = 0; a < kh; ++a) {
          const int ir = r * stride + a - padding;
          if (ir < 0 || ir >= h) continue;
          for (int b = 0; b < kw; ++b) {
            const int ic = c * stride + b - padding;
            if (ic < 0 || ic >= w) continue;
            const double* xr = x.data() + (ir * w + ic) * ci;
            double* gxr = gx.data() + (ir * w + ic) * ci;
            const double* kr = k.data() + ((a * kw + b) * ci) * co + o;
            double* gkr = gk.data() + ((a * kw + b) * ci) * co + o;
            for (int i = 0; i < ci; ++i) {
              gxr[i] += g * kr[i * co];
              gkr[i * co] += g * xr[i];
            }
          }
        }
      }
    }
  }
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (int i = 0; i < y.size(); ++i)
    if (y[i] < 0.0) y[i] = 0.0;
  return y;
}

void relu_backward(const Tensor& x, const Tensor& gy, Tensor& gx) {
  for (int i = 0; i < x.size(); ++i)
    if (x[i] > 0.0) gx[i] += gy[i];
}

Tensor global_average_pool(const Tensor& x) {
  require(x.rank() == 3, "global_average_pool: input must be [h,w,c], got " + x.shape_str());
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor y({c});
  for (int i = 0; i < h * w; ++i)
    for (int ch = 0; ch < c; ++ch) y[ch] += x[i * c + ch];
  const double inv = 1.0 / (h * w);
  for (int ch = 0; ch < c; ++ch) y[ch] *= inv;
  return y;
}

void global_average_pool_backward(const Tensor& x, const Tensor& gy, Tensor& gx) {
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const double inv = 1.0 / (h * w);
  for (int i = 0; i < h * w; ++i)
    for (int ch = 0; ch < c; ++ch) gx[i * c + ch] += gy[ch] * inv;
}

Tensor matvec(const Tensor& w, const Tensor& x) {
  require(w.rank() == 2, "matvec: weight must be [out,in], got " + w.shape_str());
  require(x.rank() == 1 && x.dim(0) == w.dim(1),
          "matvec: input " + x.shape_str() + " does not match weight " + w.shape_str());
  const int out = w.dim(0), in = w.dim(1);
  Tensor y({out});
  for (int o = 0; o < out; ++o) {
    double acc = 0.0;
    const double* wr = w.data() + o * in;
    for (int i = 0; i < in; ++i) acc += wr[i] * x[i];
    y[o] = acc;
  }
  return y;
}

void matvec_backward(const Tensor& w, const Tensor& x, const Tensor& gy, Tensor& gw, Tensor& gx) {
  const int out = w.dim(0), in = w.dim(1);
  for (int o = 0; o < out; ++o) {
    const double g = gy[o];
    const double* wr = w.data() + o * in;
    double* gwr = gw.data() + o * in;
    for (int i = 0; i < in; ++i) {
      gwr[i] += g * x[i];
      gx[i] += g * wr[i];
    }
  }
}

Tensor dense(const Tensor& w, const Tensor& x, const Tensor& b) {
  Tensor y = matvec(w, x);
  require(b.rank() == 1 && b.dim(0) == y.dim(0),
          "dense: bias " + b.shape_str() + " does not match output " + y.shape_str());
  for (int o = 0; o < y.size(); ++o) y[o] += b[o];
  return y;
}

Tensor softmax(const Tensor& x) {
  Tensor y = x;
  double m = x.max();
  double s = 0.0;
  for (int i = 0; i < y.size(); ++i) {
    y[i] = std::exp(x[i] - m);
    s += y[i];
  }
  for (int i = 0; i < y.size(); ++i) y[i] /= s;
  return y;
}

void softmax_backward(const Tensor& y, const Tensor& gy, Tensor& gx) {
  double dot = 0.0;
  for (int i = 0; i < y.size(); ++i) dot += gy[i] * y[i];
  for (int i = 0; i < y.size(); ++i) gx[i] += y[i] * (gy[i] - dot);
}

Tensor l2_normalize(const Tensor& v) {
  const double n = v.l2_norm();
  if (n == 0.0) throw std::domain_error("l2_normalize: zero-norm input");
  Tensor y = v;
  for (int i = 0; i < y.size(); ++i) y[i] /= n;
  return y;
}

void l2_normalize_backward(const Tensor& v, const Tensor& y, const Tensor& gy, Tensor& gx) {
  const double n = v.l2_norm();
  double dot = 0.0;
  for (int i = 0; i < y.size(); ++i) dot += gy[i] * y[i];
  for (int i = 0; i < y.size(); ++i) gx[i] += (gy[i] - y[i] * dot) / n;
}

Tensor spatial_multiply(const Tensor& a, const Tensor& f) {
  require(a.rank() == 3, "spatial_multiply: feature map must be [h,w,k], got " + a.shape_str());
  require(f.rank() == 2, "spatial_multiply: filter must be [h,w], got " + f.shape_str());
  require(a.dim(0) == f.dim(0) && a.dim(1) == f.dim(1),
          "spatial_multiply: spatial dims of " + a.shape_str() + " and " + f.shape_str() + " differ");
  const int hw = f.size(), c = a.dim(2);
  Tensor y = a;
  for (int i = 0; i < hw; ++i) {
    const double fv = f[i];
    for (int ch = 0; ch < c; ++ch) y[i * c + ch] *= fv;
  }
  return y;
}

void spatial_multiply_backward(const Tensor& a, const Tensor& f, const Tensor& gy,
                               Tensor& ga, Tensor& gf) {
  const int hw = f.size(), c = a.dim(2);
  for (int i = 0; i < hw; ++i) {
    const double fv = f[i];
    double acc = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      ga[i * c + ch] += gy[i * c + ch] * fv;
      acc += gy[i * c + ch] * a[i * c + ch];
    }
    gf[i] += acc;
  }
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (int i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return y;
}

void sigmoid_backward(const Tensor& y, const Tensor& gy, Tensor& gx) {
  for (int i = 0; i < y.size(); ++i) gx[i] += gy[i] * y[i] * (1.0 - y[i]);
}

Tensor tanh(const Tensor& x) {
  Tensor y = x;
  for (int i = 0; i < y.size(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

void tanh_backward(const Tensor& y, const Tensor& gy, Tensor& gx) {
  for (int i = 0; i < y.size(); ++i) gx[i] += gy[i] * (1.0 - y[i] * y[i]);
}

Tensor sqrt(const Tensor& x) {
  Tensor y = x;
  for (int i = 0; i < y.size(); ++i) {
    if (x[i] < 0.0) throw std::domain_error("sqrt: negative input");
    y[i] = std::sqrt(x[i]);
  }
  return y;
}

void sqrt_backward(const Tensor& y, const Tensor& gy, Tensor& gx) {
  for (int i = 0; i < y.size(); ++i) gx[i] += gy[i] * 0.5 / std::max(y[i], 1e-12);
}

Tensor gaussian_grid(const Tensor& mu, int h, int w) {
  require(mu.size() == 2, "gaussian_grid: mu must have two components");
  Tensor g({h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double dr = i - mu[0], dc = j - mu[1];
      g.at2(i, j) = std::exp(-(dr * dr + dc * dc) / 2.0);
    }
  return g;
}

void gaussian_grid_backward(const Tensor& mu, const Tensor& y, const Tensor& gy, Tensor& gmu) {
  const int h = y.dim(0), w = y.dim(1);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double g = gy.at2(i, j) * y.at2(i, j);
      gmu[0] += g * (i - mu[0]);
      gmu[1] += g * (j - mu[1]);
    }
}

double cross_entropy_logits(const Tensor& z, int target) {
  if (target < 0 || target >= z.size()) throw std::out_of_range("cross_entropy_logits: target out of range");
  const double m = z.max();
  double s = 0.0;
  for (int i = 0; i < z.size(); ++i) s += std::exp(z[i] - m);
  return m + std::log(s) - z[target];
}

void cross_entropy_logits_backward(const Tensor& z, int target, double gy, Tensor& gz) {
  Tensor p = softmax(z);
  for (int i = 0; i < z.size(); ++i) gz[i] += gy * (p[i] - (i == target ? 1.0 : 0.0));
}

Tensor gated_cell_step(const Tensor& z, const Tensor& h,
                       const Tensor& wg, const Tensor& ug, const Tensor& bg,
                       const Tensor& wc, const Tensor& uc, const Tensor& bc) {
  // Mirrors the taped composition op for op so both paths agree bitwise.
  Tensor g_pre = matvec(wg, z);
  {
    Tensor uh = matvec(ug, h);
    for (int i = 0; i < g_pre.size(); ++i) g_pre[i] += uh[i];
    for (int i = 0; i < g_pre.size(); ++i) g_pre[i] += bg[i];
  }
  Tensor gate = sigmoid(g_pre);

  Tensor c_pre = matvec(wc, z);
  {
    Tensor uh = matvec(uc, h);
    for (int i = 0; i < c_pre.size(); ++i) c_pre[i] += uh[i];
    for (int i = 0; i < c_pre.size(); ++i) c_pre[i] += bc[i];
  }
  Tensor cand = tanh(c_pre);

  Tensor out = gate;
  for (int i = 0; i < out.size(); ++i) out[i] = gate[i] * cand[i] + (1.0 - gate[i]) * h[i];
  return out;
}

Tensor bilinear_resize(const Tensor& grid, int out_h, int out_w) {
  require(grid.rank() == 2, "bilinear_resize: grid must be 2-D, got " + grid.shape_str());
  require(out_h >= 1 && out_w >= 1, "bilinear_resize: output dims must be positive");
  const int h = grid.dim(0), w = grid.dim(1);
  Tensor out({out_h, out_w});
  const double sr = out_h > 1 ? static_cast<double>(h - 1) / (out_h - 1) : 0.0;
  const double sc = out_w > 1 ? static_cast<double>(w - 1) / (out_w - 1) : 0.0;
  for (int r = 0; r < out_h; ++r) {
    const double fr = r * sr;
    const int r0 = std::min(static_cast<int>(fr), h - 1);
    const int r1 = std::min(r0 + 1, h - 1);
    const double tr = fr - r0;
    for (int c = 0; c < out_w; ++c) {
      const double fc = c * sc;
      const int c0 = std::min(static_cast<int>(fc), w - 1);
      const int c1 = std::min(c0 + 1, w - 1);
      const double tc = fc - c0;
      out.at2(r, c) = (1.0 - tr) * ((1.0 - tc) * grid.at2(r0, c0) + tc * grid.at2(r0, c1)) +
                      tr * ((1.0 - tc) * grid.at2(r1, c0) + tc * grid.at2(r1, c1));
    }
  }
  return out;
}

Tensor min_max_rescale(const Tensor& grid) {
  const double lo = grid.min(), hi = grid.max();
  Tensor out = grid;
  if (hi > lo) {
    for (int i = 0; i < out.size(); ++i) out[i] = (out[i] - lo) / (hi - lo);
  } else {
    const double v = hi > 0.0 ? 1.0 : 0.0;
    for (int i = 0; i < out.size(); ++i) out[i] = v;
  }
  return out;
}

}  // namespace l2caf::kernels
