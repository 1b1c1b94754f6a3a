#include "ssga/ops.hpp"

#include "ssga/error.hpp"

namespace ssga::ad {

namespace {

Tape& same_tape(Var a, Var b) {
    if (a.tape != b.tape || !a.tape) throw config_error("ops: operands live on different tapes");
    return *a.tape;
}

Var unary(Op op, Var a, Attrs at = {}) { return a.tape->record(op, {a.id}, std::move(at)); }

Var binary(Op op, Var a, Var b, Attrs at = {}) { return same_tape(a, b).record(op, {a.id, b.id}, std::move(at)); }

}  // namespace

Var add(Var a, Var b) { return binary(Op::add, a, b); }
Var sub(Var a, Var b) { return binary(Op::sub, a, b); }
Var mul(Var a, Var b) { return binary(Op::mul, a, b); }
Var scale(Var a, double c) { return unary(Op::scale, a, {.c = c}); }
Var offset(Var a, double c) { return unary(Op::offset, a, {.c = c}); }
Var matmul(Var a, Var b) { return binary(Op::matmul, a, b); }
Var transpose(Var a) { return unary(Op::transpose, a); }

Var conv2d(Var x, Var w, std::size_t pad) { return binary(Op::conv2d, x, w, {.i0 = pad}); }

Var conv2d_grad_input(Var g, Var w, const Shape& input_shape, std::size_t pad) {
    return binary(Op::conv2d_grad_input, g, w, {.i0 = pad, .shape = input_shape});
}

Var conv2d_grad_weight(Var x, Var g, const Shape& weight_shape, std::size_t pad) {
    return binary(Op::conv2d_grad_weight, x, g, {.i0 = pad, .shape = weight_shape});
}

Var upsample2x(Var x) { return unary(Op::upsample2x, x); }
Var mean_pool2x(Var x) { return unary(Op::mean_pool2x, x); }
Var broadcast_to(Var a, const Shape& shape) { return unary(Op::broadcast_to, a, {.shape = shape}); }
Var reduce_sum_to(Var a, const Shape& shape) { return unary(Op::reduce_sum_to, a, {.shape = shape}); }
Var leaky_relu(Var x, double slope) { return unary(Op::leaky_relu, x, {.c = slope}); }
Var leaky_relu_slope(Var x, double slope) { return unary(Op::leaky_relu_slope, x, {.c = slope}); }
Var tanh(Var x) { return unary(Op::tanh, x); }
Var sigmoid(Var x) { return unary(Op::sigmoid, x); }
Var softplus(Var x) { return unary(Op::softplus, x); }
Var sqrt(Var x) { return unary(Op::sqrt, x); }
Var safe_reciprocal(Var x) { return unary(Op::safe_reciprocal, x); }
Var reshape(Var x, const Shape& shape) { return unary(Op::reshape, x, {.shape = shape}); }
Var concat_cols(Var a, Var b) { return binary(Op::concat_cols, a, b); }
Var slice_cols(Var a, std::size_t offset, std::size_t width) {
    return unary(Op::slice_cols, a, {.i0 = offset, .i1 = width});
}
Var pad_cols(Var a, std::size_t offset, std::size_t total) {
    return unary(Op::pad_cols, a, {.i0 = offset, .i1 = total});
}

Var relu(Var x) { return leaky_relu(x, 0.0); }

Var sum(Var x) {
    const Shape ones(x.shape().size(), 1);
    return reshape(reduce_sum_to(x, ones), {1});
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var inner(Var a, Var b) { return sum(mul(a, b)); }

Var square(Var x) { return mul(x, x); }

Var global_mean_pool(Var x) {
    const auto& s = x.shape();
    if (s.size() != 4) throw config_error("global_mean_pool: expected rank 4, got " + shape_str(s));
    auto pooled = reduce_sum_to(x, {s[0], s[1], 1, 1});
    return reshape(scale(pooled, 1.0 / static_cast<double>(s[2] * s[3])), {s[0], s[1]});
}

Var add_channel_bias(Var x, Var bias) {
    const auto& s = x.shape();
    if (s.size() != 4 || bias.value().size() != s[1])
        throw config_error("add_channel_bias: bias " + shape_str(bias.shape()) + " for input " + shape_str(s));
    return add(x, broadcast_to(reshape(bias, {1, s[1], 1, 1}), s));
}

Var add_row_bias(Var x, Var bias) {
    const auto& s = x.shape();
    if (s.size() != 2 || bias.value().size() != s[1])
        throw config_error("add_row_bias: bias " + shape_str(bias.shape()) + " for input " + shape_str(s));
    return add(x, broadcast_to(reshape(bias, {1, s[1]}), s));
}

Var row_norms(Var x) {
    const auto& s = x.shape();
    if (s.size() != 2) throw config_error("row_norms: expected rank 2, got " + shape_str(s));
    return sqrt(reduce_sum_to(square(x), {s[0], 1}));
}

}  // namespace ssga::ad
