#pragma once

#include "ssga/tape.hpp"

namespace ssga::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var offset(Var a, double c);
Var matmul(Var a, Var b);
Var transpose(Var a);

/// x: [B, Cin, H, W], w: [Cout, Cin, K, K]; zero padding `pad` on each side, stride 1.
Var conv2d(Var x, Var w, std::size_t pad);
Var conv2d_grad_input(Var g, Var w, const Shape& input_shape, std::size_t pad);
Var conv2d_grad_weight(Var x, Var g, const Shape& weight_shape, std::size_t pad);

Var upsample2x(Var x);
Var mean_pool2x(Var x);

/// Same-rank broadcast: every axis of `a` equals the target extent or is 1.
Var broadcast_to(Var a, const Shape& shape);
/// Adjoint of broadcast_to: sums over the axes where `shape` has extent 1.
Var reduce_sum_to(Var a, const Shape& shape);

Var leaky_relu(Var x, double slope);
Var leaky_relu_slope(Var x, double slope);
Var tanh(Var x);
Var sigmoid(Var x);
Var softplus(Var x);
Var sqrt(Var x);
Var safe_reciprocal(Var x);
Var reshape(Var x, const Shape& shape);

Var concat_cols(Var a, Var b);
Var slice_cols(Var a, std::size_t offset, std::size_t width);
Var pad_cols(Var a, std::size_t offset, std::size_t total);

// Composites built from the primitives above.
Var relu(Var x);
Var sum(Var x);
Var mean(Var x);
Var inner(Var a, Var b);
Var square(Var x);
/// x: [B, C, H, W] -> [B, C]
Var global_mean_pool(Var x);
/// x: [B, C, H, W] + bias [C]
Var add_channel_bias(Var x, Var bias);
/// x: [B, F] + bias [F]
Var add_row_bias(Var x, Var bias);
/// Row-wise L2 norm of a [B, F] matrix -> [B, 1].
Var row_norms(Var x);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

}  // namespace ssga::ad
