#pragma once

#include <vector>

#include "gfk/tensor.hpp"

namespace gfk {

// Elementwise; shapes must match exactly (broadcasting is limited to the
// explicit scalar/bias/scale ops below).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);

// x * s where s is a single-element tensor (learned scalar), broadcast.
Tensor scale_by(const Tensor& x, const Tensor& s);
// x + b where b matches the last axis of x, broadcast over leading axes.
Tensor add_bias(const Tensor& x, const Tensor& b);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor softmax(const Tensor& x, int axis);

// Normalizes over the last axis; gamma/beta match that axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-12);
// Channels on axis 1, rank >= 3; normalizes each (sample, group) over its
// channels and all trailing spatial axes.
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups, double eps = 1e-12);

// 2-D or batched N-D with identical leading batch dims.
Tensor matmul(const Tensor& a, const Tensor& b);

// x (N,Ci,H,W), w (Co,Ci,kh,kw), optional bias (Co); zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding);
// x (B,Ci,L), w (Co,Ci,k), optional bias (Co); stride 1, zero padding.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int padding);
// Slides over `axis` of a rank-4 (N,T,P,C) map with channels on the last
// axis; wraps conv1d via permute/reshape.
Tensor conv1d_over_axis(const Tensor& x, const Tensor& w, const Tensor& bias, int axis, int padding);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor concat(const std::vector<Tensor>& parts, int axis);
// Multi-axis crop: out[i...] = x[starts + i...].
Tensor slice(const Tensor& x, const std::vector<int64_t>& starts, const std::vector<int64_t>& lengths);
Tensor slice_axis(const Tensor& x, int axis, int64_t start, int64_t length);
// Cyclic shift along one axis; out[i] = x[(i - shift) mod n].
Tensor roll_axis(const Tensor& x, int axis, int64_t shift);

// (N,C,H,W) -> (N,C,2H,2W).
Tensor upsample_nearest2x(const Tensor& x);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor sum_axis(const Tensor& x, int axis);
Tensor mean_axis(const Tensor& x, int axis);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return divide(a, b); }

}  // namespace gfk
