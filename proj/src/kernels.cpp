// Forward kernels for the primitive set. All loops run in a fixed order so
// results are bit-reproducible.
#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "ssga/error.hpp"
#include "ssga/tape.hpp"

namespace ssga::ad {

namespace {

[[noreturn]] void fail(Op op, const std::string& what) {
    throw config_error(std::string("op ") + op_name(op) + ": " + what);
}

void require_same(Op op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_rank(Op op, const Tensor& a, std::size_t rank) {
    if (a.rank() != rank) fail(op, "expected rank " + std::to_string(rank) + ", got " + shape_str(a.shape()));
}

template <class F>
Tensor map1(const Tensor& a, F f) {
    Tensor out(a.shape());
    auto src = a.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
    return out;
}

template <class F>
Tensor map2(Op op, const Tensor& a, const Tensor& b, F f) {
    require_same(op, a, b);
    Tensor out(a.shape());
    auto x = a.data();
    auto y = b.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
    return out;
}

struct ConvGeom {
    std::size_t batch, cin, cout, h, w, k, ho, wo, pad;
};

ConvGeom conv_geom(Op op, const Shape& x, const Shape& wt, std::size_t pad) {
    if (x.size() != 4 || wt.size() != 4) fail(op, "conv expects rank-4 input and weight");
    if (x[1] != wt[1]) fail(op, "input channels " + std::to_string(x[1]) + " vs weight " + shape_str(wt));
    if (wt[2] != wt[3]) fail(op, "non-square kernel");
    ConvGeom g{x[0], x[1], wt[0], x[2], x[3], wt[2], 0, 0, pad};
    if (g.h + 2 * pad < g.k || g.w + 2 * pad < g.k) fail(op, "kernel larger than padded input");
    g.ho = g.h + 2 * pad - g.k + 1;
    g.wo = g.w + 2 * pad - g.k + 1;
    return g;
}

// Output column range [lo, hi) for which input column xo + kx - pad is valid.
inline void valid_range(std::size_t kx, std::size_t pad, std::size_t in, std::size_t out, std::size_t& lo,
                        std::size_t& hi) {
    lo = kx < pad ? pad - kx : 0;
    const std::size_t limit = in + pad > kx ? in + pad - kx : 0;  // xo < limit
    hi = std::min(out, limit);
    if (lo > hi) lo = hi;
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Column matrix (cin*k*k, batch*ho*wo); row (ci*k + ky)*k + kx, column
// b*ho*wo + yo*wo + xo holds x[b, ci, yo+ky-pad, xo+kx-pad] or 0 outside.
RowMat im2col(const double* X, const ConvGeom& g) {
    const std::size_t n = g.ho * g.wo;
    RowMat cols(static_cast<Eigen::Index>(g.cin * g.k * g.k), static_cast<Eigen::Index>(g.batch * n));
    for (std::size_t ci = 0; ci < g.cin; ++ci)
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            std::size_t ylo, yhi;
            valid_range(ky, g.pad, g.h, g.ho, ylo, yhi);
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                std::size_t xlo, xhi;
                valid_range(kx, g.pad, g.w, g.wo, xlo, xhi);
                double* row = cols.data() + ((ci * g.k + ky) * g.k + kx) * g.batch * n;
                for (std::size_t b = 0; b < g.batch; ++b) {
                    const double* xplane = X + (b * g.cin + ci) * g.h * g.w;
                    double* plane = row + b * n;
                    // only the padding taps need zeros
                    std::fill(plane, plane + ylo * g.wo, 0.0);
                    std::fill(plane + yhi * g.wo, plane + n, 0.0);
                    for (std::size_t yo = ylo; yo < yhi; ++yo) {
                        const double* xrow = xplane + (yo + ky - g.pad) * g.w;
                        double* dst = plane + yo * g.wo;
                        std::fill(dst, dst + xlo, 0.0);
                        std::fill(dst + xhi, dst + g.wo, 0.0);
                        for (std::size_t xo = xlo; xo < xhi; ++xo) dst[xo] = xrow[xo + kx - g.pad];
                    }
                }
            }
        }
    return cols;
}

// Adjoint of im2col: scatter-add columns back into an input-shaped buffer.
void col2im(const RowMat& cols, const ConvGeom& g, double* DX) {
    const std::size_t n = g.ho * g.wo;
    for (std::size_t ci = 0; ci < g.cin; ++ci)
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            std::size_t ylo, yhi;
            valid_range(ky, g.pad, g.h, g.ho, ylo, yhi);
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                std::size_t xlo, xhi;
                valid_range(kx, g.pad, g.w, g.wo, xlo, xhi);
                const double* row = cols.data() + ((ci * g.k + ky) * g.k + kx) * g.batch * n;
                for (std::size_t b = 0; b < g.batch; ++b) {
                    double* xplane = DX + (b * g.cin + ci) * g.h * g.w;
                    for (std::size_t yo = ylo; yo < yhi; ++yo) {
                        double* xrow = xplane + (yo + ky - g.pad) * g.w;
                        const double* src = row + b * n + yo * g.wo;
                        for (std::size_t xo = xlo; xo < xhi; ++xo) xrow[xo + kx - g.pad] += src[xo];
                    }
                }
            }
        }
}

// (B, C, N) <-> (C, B*N)
RowMat channels_major(const double* G, std::size_t batch, std::size_t c, std::size_t n) {
    RowMat m(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(batch * n));
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            std::copy(G + (b * c + ch) * n, G + (b * c + ch + 1) * n, m.data() + ch * batch * n + b * n);
    return m;
}

Tensor conv_forward(const Tensor& x, const Tensor& wt, std::size_t pad) {
    const auto g = conv_geom(Op::conv2d, x.shape(), wt.shape(), pad);
    const std::size_t n = g.ho * g.wo;
    const auto K = static_cast<Eigen::Index>(g.cin * g.k * g.k);
    const RowMat cols = im2col(x.data().data(), g);
    Eigen::Map<const RowMat> W(wt.data().data(), static_cast<Eigen::Index>(g.cout), K);
    const RowMat y = W * cols;
    Tensor out({g.batch, g.cout, g.ho, g.wo});
    double* Y = out.data().data();
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t co = 0; co < g.cout; ++co)
            std::copy(y.data() + co * g.batch * n + b * n, y.data() + co * g.batch * n + (b + 1) * n,
                      Y + (b * g.cout + co) * n);
    return out;
}

Tensor conv_grad_input(const Tensor& gout, const Tensor& wt, const Shape& xshape, std::size_t pad) {
    const auto g = conv_geom(Op::conv2d_grad_input, xshape, wt.shape(), pad);
    if (gout.shape() != Shape{g.batch, g.cout, g.ho, g.wo})
        fail(Op::conv2d_grad_input, "gradient shape " + shape_str(gout.shape()));
    const auto K = static_cast<Eigen::Index>(g.cin * g.k * g.k);
    Eigen::Map<const RowMat> W(wt.data().data(), static_cast<Eigen::Index>(g.cout), K);
    const RowMat G = channels_major(gout.data().data(), g.batch, g.cout, g.ho * g.wo);
    const RowMat dcols = W.transpose() * G;
    Tensor dx(xshape);
    col2im(dcols, g, dx.data().data());
    return dx;
}

Tensor conv_grad_weight(const Tensor& x, const Tensor& gout, const Shape& wshape, std::size_t pad) {
    const auto g = conv_geom(Op::conv2d_grad_weight, x.shape(), wshape, pad);
    if (gout.shape() != Shape{g.batch, g.cout, g.ho, g.wo})
        fail(Op::conv2d_grad_weight, "gradient shape " + shape_str(gout.shape()));
    const RowMat cols = im2col(x.data().data(), g);
    const RowMat G = channels_major(gout.data().data(), g.batch, g.cout, g.ho * g.wo);
    const RowMat dw = G * cols.transpose();
    Tensor out(wshape);
    std::copy(dw.data(), dw.data() + dw.size(), out.data().begin());
    return out;
}

Tensor upsample(const Tensor& x) {
    require_rank(Op::upsample2x, x, 4);
    const auto& s = x.shape();
    const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
    Tensor out({s[0], s[1], 2 * h, 2 * w});
    const double* X = x.data().data();
    double* Y = out.data().data();
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t y = 0; y < 2 * h; ++y) {
            const double* xrow = X + (p * h + y / 2) * w;
            double* yrow = Y + (p * 2 * h + y) * 2 * w;
            for (std::size_t xx = 0; xx < 2 * w; ++xx) yrow[xx] = xrow[xx / 2];
        }
    return out;
}

Tensor mean_pool(const Tensor& x) {
    require_rank(Op::mean_pool2x, x, 4);
    const auto& s = x.shape();
    if (s[2] % 2 || s[3] % 2) fail(Op::mean_pool2x, "odd spatial extent " + shape_str(s));
    const std::size_t planes = s[0] * s[1], h = s[2] / 2, w = s[3] / 2;
    Tensor out({s[0], s[1], h, w});
    const double* X = x.data().data();
    double* Y = out.data().data();
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t y = 0; y < h; ++y) {
            const double* r0 = X + (p * 2 * h + 2 * y) * 2 * w;
            const double* r1 = r0 + 2 * w;
            double* yrow = Y + (p * h + y) * w;
            for (std::size_t xx = 0; xx < w; ++xx)
                yrow[xx] = 0.25 * ((r0[2 * xx] + r0[2 * xx + 1]) + (r1[2 * xx] + r1[2 * xx + 1]));
        }
    return out;
}

void require_broadcastable(Op op, const Shape& small, const Shape& big) {
    if (small.size() != big.size()) fail(op, "rank mismatch " + shape_str(small) + " vs " + shape_str(big));
    for (std::size_t i = 0; i < small.size(); ++i)
        if (small[i] != big[i] && small[i] != 1)
            fail(op, "cannot broadcast " + shape_str(small) + " to " + shape_str(big));
}

// Calls f(big_index, small_index) for every element of `big` in row-major order.
template <class F>
void for_each_broadcast(const Shape& small, const Shape& big, F f) {
    const std::size_t rank = big.size();
    std::vector<std::size_t> sstride(rank, 0);
    std::size_t st = 1;
    for (std::size_t i = rank; i-- > 0;) {
        sstride[i] = small[i] == 1 ? 0 : st;
        st *= small[i];
    }
    const std::size_t total = numel(big);
    if (rank == 0) {
        f(0, 0);
        return;
    }
    std::vector<std::size_t> idx(rank, 0);
    const std::size_t inner = big[rank - 1];
    const std::size_t inner_stride = sstride[rank - 1];
    std::size_t soff = 0;
    for (std::size_t flat = 0; flat < total; flat += inner) {
        for (std::size_t j = 0; j < inner; ++j) f(flat + j, soff + j * inner_stride);
        // advance odometer over the outer axes
        for (std::size_t ax = rank - 1; ax-- > 0;) {
            soff += sstride[ax];
            if (++idx[ax] < big[ax]) break;
            soff -= sstride[ax] * big[ax];
            idx[ax] = 0;
        }
    }
}

Tensor broadcast(const Tensor& a, const Shape& shape) {
    require_broadcastable(Op::broadcast_to, a.shape(), shape);
    Tensor out(shape);
    auto src = a.data();
    auto dst = out.data();
    for_each_broadcast(a.shape(), shape, [&](std::size_t bi, std::size_t si) { dst[bi] = src[si]; });
    return out;
}

Tensor reduce_sum(const Tensor& a, const Shape& shape) {
    require_broadcastable(Op::reduce_sum_to, shape, a.shape());
    Tensor out(shape);
    auto src = a.data();
    auto dst = out.data();
    for_each_broadcast(shape, a.shape(), [&](std::size_t bi, std::size_t si) { dst[si] += src[bi]; });
    return out;
}

Tensor matmul_kernel(const Tensor& a, const Tensor& b) {
    require_rank(Op::matmul, a, 2);
    require_rank(Op::matmul, b, 2);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) fail(Op::matmul, "inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Tensor out({m, n});
    const double* A = a.data().data();
    const double* B = b.data().data();
    double* C = out.data().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            const double* brow = B + p * n;
            double* crow = C + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    return out;
}

Tensor transpose_kernel(const Tensor& a) {
    require_rank(Op::transpose, a, 2);
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    return out;
}

double softplus_scalar(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid_scalar(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Tensor evaluate(Op op, std::span<const Tensor* const> in, const Attrs& at) {
    auto arity = [&](std::size_t n) {
        if (in.size() != n) fail(op, "expected " + std::to_string(n) + " inputs");
    };
    switch (op) {
        case Op::leaf:
            fail(op, "leaves are not evaluated");
        case Op::add:
            arity(2);
            return map2(op, *in[0], *in[1], [](double a, double b) { return a + b; });
        case Op::sub:
            arity(2);
            return map2(op, *in[0], *in[1], [](double a, double b) { return a - b; });
        case Op::mul:
            arity(2);
            return map2(op, *in[0], *in[1], [](double a, double b) { return a * b; });
        case Op::scale: {
            arity(1);
            const double c = at.c;
            return map1(*in[0], [c](double a) { return c * a; });
        }
        case Op::offset: {
            arity(1);
            const double c = at.c;
            return map1(*in[0], [c](double a) { return a + c; });
        }
        case Op::matmul:
            arity(2);
            return matmul_kernel(*in[0], *in[1]);
        case Op::transpose:
            arity(1);
            return transpose_kernel(*in[0]);
        case Op::conv2d:
            arity(2);
            return conv_forward(*in[0], *in[1], at.i0);
        case Op::conv2d_grad_input:
            arity(2);
            return conv_grad_input(*in[0], *in[1], at.shape, at.i0);
        case Op::conv2d_grad_weight:
            arity(2);
            return conv_grad_weight(*in[0], *in[1], at.shape, at.i0);
        case Op::upsample2x:
            arity(1);
            return upsample(*in[0]);
        case Op::mean_pool2x:
            arity(1);
            return mean_pool(*in[0]);
        case Op::broadcast_to:
            arity(1);
            return broadcast(*in[0], at.shape);
        case Op::reduce_sum_to:
            arity(1);
            return reduce_sum(*in[0], at.shape);
        case Op::leaky_relu: {
            arity(1);
            const double s = at.c;
            return map1(*in[0], [s](double a) { return a >= 0 ? a : s * a; });
        }
        case Op::leaky_relu_slope: {
            arity(1);
            const double s = at.c;
            return map1(*in[0], [s](double a) { return a >= 0 ? 1.0 : s; });
        }
        case Op::tanh:
            arity(1);
            return map1(*in[0], [](double a) { return std::tanh(a); });
        case Op::sigmoid:
            arity(1);
            return map1(*in[0], sigmoid_scalar);
        case Op::softplus:
            arity(1);
            return map1(*in[0], softplus_scalar);
        case Op::sqrt:
            arity(1);
            for (double v : in[0]->data())
                if (v < 0) fail(op, "negative argument");
            return map1(*in[0], [](double a) { return std::sqrt(a); });
        case Op::safe_reciprocal:
            arity(1);
            return map1(*in[0], [](double a) { return a == 0.0 ? 0.0 : 1.0 / a; });
        case Op::reshape:
            arity(1);
            if (numel(at.shape) != in[0]->size())
                fail(op, "cannot reshape " + shape_str(in[0]->shape()) + " to " + shape_str(at.shape));
            return in[0]->reshaped(at.shape).cast(DType::f64);
        case Op::concat_cols: {
            arity(2);
            const Tensor& a = *in[0];
            const Tensor& b = *in[1];
            require_rank(op, a, 2);
            require_rank(op, b, 2);
            if (a.dim(0) != b.dim(0)) fail(op, "row mismatch");
            const std::size_t rows = a.dim(0), wa = a.dim(1), wb = b.dim(1);
            Tensor out({rows, wa + wb});
            for (std::size_t r = 0; r < rows; ++r) {
                std::copy_n(a.data().data() + r * wa, wa, out.data().data() + r * (wa + wb));
                std::copy_n(b.data().data() + r * wb, wb, out.data().data() + r * (wa + wb) + wa);
            }
            return out;
        }
        case Op::slice_cols: {
            arity(1);
            const Tensor& a = *in[0];
            require_rank(op, a, 2);
            const std::size_t rows = a.dim(0), cols = a.dim(1), width = at.i1;
            if (at.i0 + width > cols) fail(op, "slice out of range");
            Tensor out({rows, width});
            for (std::size_t r = 0; r < rows; ++r)
                std::copy_n(a.data().data() + r * cols + at.i0, width, out.data().data() + r * width);
            return out;
        }
        case Op::pad_cols: {
            arity(1);
            const Tensor& a = *in[0];
            require_rank(op, a, 2);
            const std::size_t rows = a.dim(0), width = a.dim(1), total = at.i1;
            if (at.i0 + width > total) fail(op, "pad out of range");
            Tensor out({rows, total});
            for (std::size_t r = 0; r < rows; ++r)
                std::copy_n(a.data().data() + r * width, width, out.data().data() + r * total + at.i0);
            return out;
        }
    }
    fail(op, "unknown op");
}

}  // namespace ssga::ad
