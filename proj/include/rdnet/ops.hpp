#pragma once

// Differentiable primitives. Every function returns a new Tensor; inputs are
// never modified. Convolutions use stride 1 and zero "same" padding.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rdnet/tensor.hpp"

namespace rdnet {

namespace detail {

struct BroadcastStrides {
    std::size_t n, c, h, w;
};

inline BroadcastStrides broadcast_strides(const Shape& s) {
    const std::size_t zero = 0;
    return {s.n == 1 ? zero : s.c * s.h * s.w, s.c == 1 ? zero : s.h * s.w, s.h == 1 ? zero : s.w,
            s.w == 1 ? zero : std::size_t{1}};
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    auto dim = [&](std::size_t x, std::size_t y) {
        if (x == y || y == 1) return x;
        if (x == 1) return y;
        throw ShapeError(std::string(op) + ": cannot broadcast " + a.str() + " with " + b.str());
    };
    return {dim(a.n, b.n), dim(a.c, b.c), dim(a.h, b.h), dim(a.w, b.w)};
}

// Calls f(out_index, a_index, b_index) over the broadcast output.
template <class F>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, F&& f) {
    const BroadcastStrides sa = broadcast_strides(a);
    const BroadcastStrides sb = broadcast_strides(b);
    std::size_t o = 0;
    for (std::size_t n = 0; n < out.n; ++n)
        for (std::size_t c = 0; c < out.c; ++c)
            for (std::size_t h = 0; h < out.h; ++h) {
                std::size_t ia = n * sa.n + c * sa.c + h * sa.h;
                std::size_t ib = n * sb.n + c * sb.c + h * sb.h;
                for (std::size_t w = 0; w < out.w; ++w, ++o) f(o, ia + w * sa.w, ib + w * sb.w);
            }
}

// y = f(a, b); da, db give the partial derivatives given (a, b, y).
template <class F, class DA, class DB>
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
    const Shape out = broadcast_shape(a.shape(), b.shape(), op);
    std::vector<double> y(out.numel());
    const auto av = a.data();
    const auto bv = b.data();
    if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(av[i], bv[i]);
    } else {
        for_each_broadcast(out, a.shape(), b.shape(),
                           [&](std::size_t o, std::size_t ia, std::size_t ib) { y[o] = f(av[ia], bv[ib]); });
    }
    return make_result(op, out, std::move(y), {&a, &b}, [da, db](Node& self) {
        const Node& na = *self.inputs[0];
        const Node& nb = *self.inputs[1];
        std::vector<double>* ga = input_grad(self, 0);
        std::vector<double>* gb = input_grad(self, 1);
        const auto& g = self.grad;
        const auto& yv = self.value;
        if (na.shape == nb.shape) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (ga) (*ga)[i] += g[i] * da(na.value[i], nb.value[i], yv[i]);
                if (gb) (*gb)[i] += g[i] * db(na.value[i], nb.value[i], yv[i]);
            }
            return;
        }
        for_each_broadcast(self.shape, na.shape, nb.shape, [&](std::size_t o, std::size_t ia, std::size_t ib) {
            if (ga) (*ga)[ia] += g[o] * da(na.value[ia], nb.value[ib], yv[o]);
            if (gb) (*gb)[ib] += g[o] * db(na.value[ia], nb.value[ib], yv[o]);
        });
    });
}

// y = f(x); df(x, y) is the derivative.
template <class F, class DF>
Tensor unary_op(const char* op, const Tensor& x, F f, DF df) {
    const auto xv = x.data();
    std::vector<double> y(xv.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
    return make_result(op, x.shape(), std::move(y), {&x}, [df](Node& self) {
        std::vector<double>& gx = *input_grad(self, 0);
        const auto& xin = self.inputs[0]->value;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * df(xin[i], self.value[i]);
    });
}

inline double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (numpy-style broadcasting over size-1 dimensions)
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        "div", a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
        [](double x, double y, double) { return -x / (y * y); });
}

inline Tensor scale(const Tensor& x, double s) {
    return detail::unary_op(
        "scale", x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

inline Tensor add_scalar(const Tensor& x, double s) {
    return detail::unary_op(
        "add_scalar", x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

/// s - x
inline Tensor rsub_scalar(double s, const Tensor& x) {
    return detail::unary_op(
        "rsub_scalar", x, [s](double v) { return s - v; }, [](double, double) { return -1.0; });
}

inline Tensor sigmoid(const Tensor& x) {
    return detail::unary_op("sigmoid", x, detail::stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor relu(const Tensor& x) {
    return detail::unary_op(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor log(const Tensor& x) {
    return detail::unary_op(
        "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Tensor square(const Tensor& x) {
    return detail::unary_op(
        "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

/// Gradient is zero where the input lies outside [lo, hi].
inline Tensor clamp(const Tensor& x, double lo, double hi) {
    return detail::unary_op(
        "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Convolution, pooling, fully connected
// ---------------------------------------------------------------------------

/// 2-D convolution, stride 1, zero padding (k-1)/2 so the output keeps the
/// input's spatial size. weight: (Cout, Cin, k, k), bias: (1, Cout, 1, 1) or
/// undefined.
inline Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias = Tensor()) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    if (ws.h != ws.w) throw ArgumentError("conv2d: kernel must be square, got " + ws.str());
    if (ws.h % 2 == 0) throw ArgumentError("conv2d: kernel size must be odd, got " + std::to_string(ws.h));
    if (ws.c != xs.c)
        throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels, weight expects " +
                         std::to_string(ws.c));
    const bool has_bias = bias.defined();
    if (has_bias && bias.shape() != Shape{1, ws.n, 1, 1})
        throw ShapeError("conv2d: bias shape " + bias.shape().str() + " does not match " + std::to_string(ws.n) +
                         " output channels");

    const std::size_t N = xs.n, Cin = xs.c, H = xs.h, W = xs.w, Cout = ws.n, K = ws.h;
    const long pad = static_cast<long>(K / 2);
    const Shape out{N, Cout, H, W};
    std::vector<double> y(out.numel(), 0.0);
    const double* xv = x.data().data();
    const double* wv = weight.data().data();

    // Visits every (output row/col range, input offset) pair for one kernel tap.
    auto tap_range = [&](std::size_t k, std::size_t len, std::size_t& begin, std::size_t& end) {
        const long off = static_cast<long>(k) - pad;
        begin = static_cast<std::size_t>(std::max(0L, -off));
        end = static_cast<std::size_t>(std::max(0L, std::min(static_cast<long>(len), static_cast<long>(len) - off)));
        end = std::max(begin, end);  // a tap can miss the input entirely
        return off;
    };

    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t co = 0; co < Cout; ++co) {
            double* yp = y.data() + (n * Cout + co) * H * W;
            if (has_bias) std::fill(yp, yp + H * W, bias.data()[co]);
            for (std::size_t ci = 0; ci < Cin; ++ci) {
                const double* xp = xv + (n * Cin + ci) * H * W;
                const double* wk = wv + (co * Cin + ci) * K * K;
                for (std::size_t ky = 0; ky < K; ++ky) {
                    std::size_t y0, y1;
                    const long dy = tap_range(ky, H, y0, y1);
                    for (std::size_t kx = 0; kx < K; ++kx) {
                        std::size_t x0, x1;
                        const long dx = tap_range(kx, W, x0, x1);
                        const double wt = wk[ky * K + kx];
                        if (wt == 0.0) continue;
                        const std::size_t span = x1 - x0;
                        const std::size_t xstart = static_cast<std::size_t>(static_cast<long>(x0) + dx);
                        for (std::size_t r = y0; r < y1; ++r) {
                            double* yr = yp + r * W + x0;
                            const double* xr = xp + static_cast<std::size_t>(static_cast<long>(r) + dy) * W + xstart;
                            for (std::size_t i = 0; i < span; ++i) yr[i] += wt * xr[i];
                        }
                    }
                }
            }
        }
    }

    std::vector<Tensor> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    return detail::make_result(
        "conv2d", out, std::move(y), inputs, [=](detail::Node& self) {
            const auto& g = self.grad;
            const auto& xin = self.inputs[0]->value;
            const auto& win = self.inputs[1]->value;
            std::vector<double>* gx = detail::input_grad(self, 0);
            std::vector<double>* gw = detail::input_grad(self, 1);
            std::vector<double>* gb = has_bias ? detail::input_grad(self, 2) : nullptr;
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t co = 0; co < Cout; ++co) {
                    const double* gp = g.data() + (n * Cout + co) * H * W;
                    if (gb) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < H * W; ++i) s += gp[i];
                        (*gb)[co] += s;
                    }
                    for (std::size_t ci = 0; ci < Cin; ++ci) {
                        const std::size_t xoff = (n * Cin + ci) * H * W;
                        const std::size_t woff = (co * Cin + ci) * K * K;
                        for (std::size_t ky = 0; ky < K; ++ky) {
                            const long dy = static_cast<long>(ky) - pad;
                            const std::size_t y0 = static_cast<std::size_t>(std::max(0L, -dy));
                            const std::size_t y1 = std::max(y0, static_cast<std::size_t>(std::max(
                                0L, std::min(static_cast<long>(H), static_cast<long>(H) - dy))));
                            for (std::size_t kx = 0; kx < K; ++kx) {
                                const long dx = static_cast<long>(kx) - pad;
                                const std::size_t x0 = static_cast<std::size_t>(std::max(0L, -dx));
                                const std::size_t x1 = std::max(x0, static_cast<std::size_t>(std::max(
                                    0L, std::min(static_cast<long>(W), static_cast<long>(W) - dx))));
                                const double wt = win[woff + ky * K + kx];
                                const std::size_t span = x1 - x0;
                                const std::size_t xstart = static_cast<std::size_t>(static_cast<long>(x0) + dx);
                                double acc = 0.0;
                                for (std::size_t r = y0; r < y1; ++r) {
                                    const double* gr = gp + r * W + x0;
                                    const std::size_t xrow =
                                        xoff + static_cast<std::size_t>(static_cast<long>(r) + dy) * W + xstart;
                                    const double* xr = xin.data() + xrow;
                                    if (gw)
                                        for (std::size_t i = 0; i < span; ++i) acc += gr[i] * xr[i];
                                    if (gx) {
                                        double* gxr = gx->data() + xrow;
                                        for (std::size_t i = 0; i < span; ++i) gxr[i] += wt * gr[i];
                                    }
                                }
                                if (gw) (*gw)[woff + ky * K + kx] += acc;
                            }
                        }
                    }
                }
            }
        });
}

/// Mean over each H×W plane: (N,C,H,W) -> (N,C,1,1).
inline Tensor global_avg_pool(const Tensor& x) {
    const Shape s = x.shape();
    const std::size_t P = s.plane();
    std::vector<double> y(s.n * s.c);
    const auto xv = x.data();
    for (std::size_t i = 0; i < y.size(); ++i) {
        double acc = 0.0;
        for (std::size_t p = 0; p < P; ++p) acc += xv[i * P + p];
        y[i] = acc / static_cast<double>(P);
    }
    return detail::make_result("global_avg_pool", {s.n, s.c, 1, 1}, std::move(y), {&x}, [P](detail::Node& self) {
        auto& gx = *detail::input_grad(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double g = self.grad[i] / static_cast<double>(P);
            for (std::size_t p = 0; p < P; ++p) gx[i * P + p] += g;
        }
    });
}

/// Per-pixel maximum across channels: (N,C,H,W) -> (N,1,H,W). The gradient
/// goes to the lowest-index channel attaining the maximum.
inline Tensor channel_max_pool(const Tensor& x) {
    const Shape s = x.shape();
    const std::size_t P = s.plane();
    std::vector<double> y(s.n * P);
    std::vector<std::size_t> argmax(s.n * P);
    const auto xv = x.data();
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t p = 0; p < P; ++p) {
            std::size_t best = n * s.c * P + p;
            for (std::size_t c = 1; c < s.c; ++c) {
                const std::size_t idx = (n * s.c + c) * P + p;
                if (xv[idx] > xv[best]) best = idx;
            }
            y[n * P + p] = xv[best];
            argmax[n * P + p] = best;
        }
    }
    return detail::make_result("channel_max_pool", {s.n, 1, s.h, s.w}, std::move(y), {&x},
                               [argmax = std::move(argmax)](detail::Node& self) {
                                   auto& gx = *detail::input_grad(self, 0);
                                   for (std::size_t i = 0; i < self.grad.size(); ++i) gx[argmax[i]] += self.grad[i];
                               });
}

/// 2×2 mean with stride 2: (N,C,H,W) -> (N,C,H/2,W/2).
inline Tensor avg_pool2(const Tensor& x) {
    const Shape s = x.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) throw ArgumentError("avg_pool2: spatial size must be even, got " + s.str());
    const Shape out{s.n, s.c, s.h / 2, s.w / 2};
    std::vector<double> y(out.numel());
    const auto xv = x.data();
    for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
        const double* xp = xv.data() + plane * s.plane();
        double* yp = y.data() + plane * out.plane();
        for (std::size_t r = 0; r < out.h; ++r)
            for (std::size_t c = 0; c < out.w; ++c) {
                const double* a = xp + 2 * r * s.w + 2 * c;
                yp[r * out.w + c] = 0.25 * (a[0] + a[1] + a[s.w] + a[s.w + 1]);
            }
    }
    return detail::make_result("avg_pool2", out, std::move(y), {&x}, [s, out](detail::Node& self) {
        auto& gx = *detail::input_grad(self, 0);
        for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
            double* gp = gx.data() + plane * s.plane();
            const double* g = self.grad.data() + plane * out.plane();
            for (std::size_t r = 0; r < out.h; ++r)
                for (std::size_t c = 0; c < out.w; ++c) {
                    const double v = 0.25 * g[r * out.w + c];
                    double* a = gp + 2 * r * s.w + 2 * c;
                    a[0] += v;
                    a[1] += v;
                    a[s.w] += v;
                    a[s.w + 1] += v;
                }
        }
    });
}

/// Affine map per sample. x is flattened to D = C·H·W; weight: (1,1,Dout,D);
/// bias: (1,Dout,1,1) or undefined. Output (N,Dout,1,1).
inline Tensor fully_connected(const Tensor& x, const Tensor& weight, const Tensor& bias = Tensor()) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    const std::size_t D = xs.sample();
    const std::size_t Dout = ws.h;
    if (ws.n != 1 || ws.c != 1 || ws.w != D)
        throw ShapeError("fully_connected: weight " + ws.str() + " incompatible with input " + xs.str());
    const bool has_bias = bias.defined();
    if (has_bias && bias.shape() != Shape{1, Dout, 1, 1})
        throw ShapeError("fully_connected: bias shape " + bias.shape().str());
    std::vector<double> y(xs.n * Dout);
    const auto xv = x.data();
    const auto wv = weight.data();
    for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t o = 0; o < Dout; ++o) {
            double acc = has_bias ? bias.data()[o] : 0.0;
            for (std::size_t d = 0; d < D; ++d) acc += wv[o * D + d] * xv[n * D + d];
            y[n * Dout + o] = acc;
        }
    std::vector<Tensor> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    return detail::make_result(
        "fully_connected", {xs.n, Dout, 1, 1}, std::move(y), inputs, [=, N = xs.n](detail::Node& self) {
            const auto& xin = self.inputs[0]->value;
            const auto& win = self.inputs[1]->value;
            auto* gx = detail::input_grad(self, 0);
            auto* gw = detail::input_grad(self, 1);
            auto* gb = has_bias ? detail::input_grad(self, 2) : nullptr;
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t o = 0; o < Dout; ++o) {
                    const double g = self.grad[n * Dout + o];
                    if (gb) (*gb)[o] += g;
                    for (std::size_t d = 0; d < D; ++d) {
                        if (gw) (*gw)[o * D + d] += g * xin[n * D + d];
                        if (gx) (*gx)[n * D + d] += g * win[o * D + d];
                    }
                }
        });
}

// ---------------------------------------------------------------------------
// Matrix operations over the last two dimensions, batched over (N, C)
// ---------------------------------------------------------------------------

/// (N,C,P,Q) × (N,C,Q,R) -> (N,C,P,R)
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape as = a.shape();
    const Shape bs = b.shape();
    if (as.n != bs.n || as.c != bs.c || as.w != bs.h)
        throw ShapeError("matmul: cannot multiply " + as.str() + " by " + bs.str());
    const std::size_t B = as.n * as.c, P = as.h, Q = as.w, R = bs.w;
    std::vector<double> y(B * P * R, 0.0);
    const auto av = a.data();
    const auto bv = b.data();
    for (std::size_t m = 0; m < B; ++m) {
        const double* A = av.data() + m * P * Q;
        const double* Bm = bv.data() + m * Q * R;
        double* Y = y.data() + m * P * R;
        for (std::size_t i = 0; i < P; ++i)
            for (std::size_t k = 0; k < Q; ++k) {
                const double aik = A[i * Q + k];
                for (std::size_t j = 0; j < R; ++j) Y[i * R + j] += aik * Bm[k * R + j];
            }
    }
    return detail::make_result("matmul", {as.n, as.c, P, R}, std::move(y), {&a, &b}, [=](detail::Node& self) {
        const auto& A = self.inputs[0]->value;
        const auto& Bv = self.inputs[1]->value;
        auto* ga = detail::input_grad(self, 0);
        auto* gb = detail::input_grad(self, 1);
        for (std::size_t m = 0; m < B; ++m) {
            const double* G = self.grad.data() + m * P * R;
            for (std::size_t i = 0; i < P; ++i)
                for (std::size_t k = 0; k < Q; ++k) {
                    const double* brow = Bv.data() + m * Q * R + k * R;
                    if (ga) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < R; ++j) acc += G[i * R + j] * brow[j];
                        (*ga)[m * P * Q + i * Q + k] += acc;
                    }
                    if (gb) {
                        const double aik = A[m * P * Q + i * Q + k];
                        double* gbrow = gb->data() + m * Q * R + k * R;
                        for (std::size_t j = 0; j < R; ++j) gbrow[j] += aik * G[i * R + j];
                    }
                }
        }
    });
}

/// Softmax along the last dimension with max subtraction.
inline Tensor softmax(const Tensor& x) {
    const Shape s = x.shape();
    const std::size_t R = s.w;
    const std::size_t rows = s.numel() / R;
    std::vector<double> y(s.numel());
    const auto xv = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * R;
        double* yr = y.data() + r * R;
        const double mx = *std::max_element(xr, xr + R);
        double sum = 0.0;
        for (std::size_t j = 0; j < R; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        for (std::size_t j = 0; j < R; ++j) yr[j] /= sum;
    }
    return detail::make_result("softmax", s, std::move(y), {&x}, [rows, R](detail::Node& self) {
        auto& gx = *detail::input_grad(self, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* yr = self.value.data() + r * R;
            const double* gr = self.grad.data() + r * R;
            double dot = 0.0;
            for (std::size_t j = 0; j < R; ++j) dot += gr[j] * yr[j];
            for (std::size_t j = 0; j < R; ++j) gx[r * R + j] += yr[j] * (gr[j] - dot);
        }
    });
}

/// Swaps the last two dimensions.
inline Tensor transpose(const Tensor& x) {
    const Shape s = x.shape();
    const Shape out{s.n, s.c, s.w, s.h};
    std::vector<double> y(s.numel());
    const auto xv = x.data();
    for (std::size_t m = 0; m < s.n * s.c; ++m)
        for (std::size_t i = 0; i < s.h; ++i)
            for (std::size_t j = 0; j < s.w; ++j) y[m * s.plane() + j * s.h + i] = xv[m * s.plane() + i * s.w + j];
    return detail::make_result("transpose", out, std::move(y), {&x}, [s](detail::Node& self) {
        auto& gx = *detail::input_grad(self, 0);
        for (std::size_t m = 0; m < s.n * s.c; ++m)
            for (std::size_t i = 0; i < s.h; ++i)
                for (std::size_t j = 0; j < s.w; ++j)
                    gx[m * s.plane() + i * s.w + j] += self.grad[m * s.plane() + j * s.h + i];
    });
}

/// Reinterprets the row-major buffer under a new shape of equal size.
inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape.numel() != x.numel() || shape.numel() == 0)
        throw ShapeError("reshape: cannot view " + x.shape().str() + " as " + shape.str());
    std::vector<double> y(x.data().begin(), x.data().end());
    return detail::make_result("reshape", shape, std::move(y), {&x}, [](detail::Node& self) {
        auto& gx = *detail::input_grad(self, 0);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Structural operations
// ---------------------------------------------------------------------------

/// Stacks along the channel dimension; N, H, W must agree.
inline Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ArgumentError("concat_channels: no inputs");
    const Shape first = parts.front().shape();
    std::size_t C = 0;
    for (const Tensor& t : parts) {
        const Shape s = t.shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w)
            throw ShapeError("concat_channels: " + s.str() + " incompatible with " + first.str());
        C += s.c;
    }
    const Shape out{first.n, C, first.h, first.w};
    const std::size_t P = first.plane();
    std::vector<double> y(out.numel());
    std::size_t c0 = 0;
    for (const Tensor& t : parts) {
        const std::size_t tc = t.shape().c;
        for (std::size_t n = 0; n < first.n; ++n)
            std::copy_n(t.data().data() + n * tc * P, tc * P, y.data() + (n * C + c0) * P);
        c0 += tc;
    }
    return detail::make_result("concat_channels", out, std::move(y), parts, [out, P](detail::Node& self) {
        std::size_t c0 = 0;
        for (std::size_t i = 0; i < self.inputs.size(); ++i) {
            const std::size_t tc = self.inputs[i]->shape.c;
            if (auto* g = detail::input_grad(self, i)) {
                for (std::size_t n = 0; n < out.n; ++n) {
                    const double* src = self.grad.data() + (n * out.c + c0) * P;
                    double* dst = g->data() + n * tc * P;
                    for (std::size_t k = 0; k < tc * P; ++k) dst[k] += src[k];
                }
            }
            c0 += tc;
        }
    });
}

/// Sample `index` of the batch as a (1,C,H,W) tensor.
inline Tensor slice_batch(const Tensor& x, std::size_t index) {
    const Shape s = x.shape();
    if (index >= s.n) throw ArgumentError("slice_batch: index " + std::to_string(index) + " out of range " + s.str());
    const std::size_t S = s.sample();
    std::vector<double> y(x.data().begin() + index * S, x.data().begin() + (index + 1) * S);
    return detail::make_result("slice_batch", {1, s.c, s.h, s.w}, std::move(y), {&x},
                               [index, S](detail::Node& self) {
                                   auto& gx = *detail::input_grad(self, 0);
                                   for (std::size_t k = 0; k < S; ++k) gx[index * S + k] += self.grad[k];
                               });
}

/// Stacks along the batch dimension; C, H, W must agree.
inline Tensor concat_batch(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ArgumentError("concat_batch: no inputs");
    const Shape first = parts.front().shape();
    std::size_t N = 0;
    for (const Tensor& t : parts) {
        const Shape s = t.shape();
        if (s.c != first.c || s.h != first.h || s.w != first.w)
            throw ShapeError("concat_batch: " + s.str() + " incompatible with " + first.str());
        N += s.n;
    }
    std::vector<double> y;
    y.reserve(N * first.sample());
    for (const Tensor& t : parts) y.insert(y.end(), t.data().begin(), t.data().end());
    return detail::make_result("concat_batch", {N, first.c, first.h, first.w}, std::move(y), parts,
                               [](detail::Node& self) {
                                   std::size_t off = 0;
                                   for (std::size_t i = 0; i < self.inputs.size(); ++i) {
                                       const std::size_t len = self.inputs[i]->value.size();
                                       if (auto* g = detail::input_grad(self, i))
                                           for (std::size_t k = 0; k < len; ++k) (*g)[k] += self.grad[off + k];
                                       off += len;
                                   }
                               });
}

/// Nearest-neighbour upsampling by an integer factor.
inline Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
    if (factor == 0) throw ArgumentError("upsample_nearest: factor must be positive");
    const Shape s = x.shape();
    const Shape out{s.n, s.c, s.h * factor, s.w * factor};
    std::vector<double> y(out.numel());
    const auto xv = x.data();
    for (std::size_t m = 0; m < s.n * s.c; ++m)
        for (std::size_t r = 0; r < out.h; ++r)
            for (std::size_t c = 0; c < out.w; ++c)
                y[m * out.plane() + r * out.w + c] = xv[m * s.plane() + (r / factor) * s.w + c / factor];
    return detail::make_result("upsample_nearest", out, std::move(y), {&x}, [s, out, factor](detail::Node& self) {
        auto& gx = *detail::input_grad(self, 0);
        for (std::size_t m = 0; m < s.n * s.c; ++m)
            for (std::size_t r = 0; r < out.h; ++r)
                for (std::size_t c = 0; c < out.w; ++c)
                    gx[m * s.plane() + (r / factor) * s.w + c / factor] += self.grad[m * out.plane() + r * out.w + c];
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    return detail::make_result("sum_all", Shape{}, {acc}, {&x}, [](detail::Node& self) {
        auto& gx = *detail::input_grad(self, 0);
        for (double& g : gx) g += self.grad[0];
    });
}

inline Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.numel())); }

/// (N,C,H,W) -> (N,1,1,1)
inline Tensor sum_per_sample(const Tensor& x) {
    const Shape s = x.shape();
    const std::size_t S = s.sample();
    std::vector<double> y(s.n, 0.0);
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t k = 0; k < S; ++k) y[n] += x.data()[n * S + k];
    return detail::make_result("sum_per_sample", {s.n, 1, 1, 1}, std::move(y), {&x}, [S](detail::Node& self) {
        auto& gx = *detail::input_grad(self, 0);
        for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += self.grad[k / S];
    });
}

inline Tensor mean_per_sample(const Tensor& x) {
    return scale(sum_per_sample(x), 1.0 / static_cast<double>(x.shape().sample()));
}

}  // namespace rdnet
