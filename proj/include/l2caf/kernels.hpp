#pragma once

#include "l2caf/tensor.hpp"

namespace l2caf::kernels {

// Shared arithmetic for plain and taped execution. The taped ops call these
// exact routines, so cached activations and recomputed ones are bitwise equal.

/// Cross-correlation of x[h,w,c_in] with k[kh,kw,c_in,c_out]; zero padding.
Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int padding);
void conv2d_backward(const Tensor& x, const Tensor& k, int stride, int padding,
                     const Tensor& gy, Tensor& gx, Tensor& gk);

Tensor relu(const Tensor& x);
void relu_backward(const Tensor& x, const Tensor& gy, Tensor& gx);

/// Global average pool: [h,w,c] -> [c].
Tensor global_average_pool(const Tensor& x);
void global_average_pool_backward(const Tensor& x, const Tensor& gy, Tensor& gx);

/// W[out,in] * x[in].
Tensor matvec(const Tensor& w, const Tensor& x);
void matvec_backward(const Tensor& w, const Tensor& x, const Tensor& gy, Tensor& gw, Tensor& gx);

/// W[out,in] * x[in] + b[out].
Tensor dense(const Tensor& w, const Tensor& x, const Tensor& b);

Tensor softmax(const Tensor& x);
void softmax_backward(const Tensor& y, const Tensor& gy, Tensor& gx);

/// v / ||v||_2. Throws on zero norm.
Tensor l2_normalize(const Tensor& v);
void l2_normalize_backward(const Tensor& v, const Tensor& y, const Tensor& gy, Tensor& gx);

/// A[h,w,k] * f[h,w] broadcast over channels.
Tensor spatial_multiply(const Tensor& a, const Tensor& f);
void spatial_multiply_backward(const Tensor& a, const Tensor& f, const Tensor& gy,
                               Tensor& ga, Tensor& gf);

Tensor sigmoid(const Tensor& x);
void sigmoid_backward(const Tensor& y, const Tensor& gy, Tensor& gx);

Tensor tanh(const Tensor& x);
void tanh_backward(const Tensor& y, const Tensor& gy, Tensor& gx);

Tensor sqrt(const Tensor& x);
void sqrt_backward(const Tensor& y, const Tensor& gy, Tensor& gx);

/// Grid g[i,j] = exp(-((i - mu[0])^2 + (j - mu[1])^2) / 2), unnormalized peak 1.
Tensor gaussian_grid(const Tensor& mu, int h, int w);
void gaussian_grid_backward(const Tensor& mu, const Tensor& y, const Tensor& gy, Tensor& gmu);

/// logsumexp(z) - z[target]; max-subtracted for stability.
double cross_entropy_logits(const Tensor& z, int target);
void cross_entropy_logits_backward(const Tensor& z, int target, double gy, Tensor& gz);

/// Minimal gated recurrent step: gate = sigmoid(Wg z + Ug h + bg),
/// cand = tanh(Wc z + Uc h + bc), h' = gate*cand + (1-gate)*h.
Tensor gated_cell_step(const Tensor& z, const Tensor& h,
                       const Tensor& wg, const Tensor& ug, const Tensor& bg,
                       const Tensor& wc, const Tensor& uc, const Tensor& bc);

/// Bilinear resize of a 2-D grid to (out_h, out_w), corner-aligned sampling.
Tensor bilinear_resize(const Tensor& grid, int out_h, int out_w);

/// Affine min-max rescale to [0,1]. A constant positive grid maps to all
/// ones; a constant zero (or negative) grid maps to all zeros.
Tensor min_max_rescale(const Tensor& grid);

}  // namespace l2caf::kernels
