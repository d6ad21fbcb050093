#pragma once

// Single-level orthonormal 2-D Haar transform. For each 2×2 block
//   [a b]
//   [c d]
// ll = (a+b+c+d)/2, lh = (a+b-c-d)/2, hl = (a-b+c-d)/2, hh = (a-b-c+d)/2.
// The transform matrix is symmetric and orthogonal, so it is its own inverse
// and its own adjoint; both directions share one kernel.

#include <array>
#include <string>

#include "rdnet/tensor.hpp"

namespace rdnet {

struct WaveletQuad {
    Tensor ll, lh, hl, hh;

    const Tensor& operator[](std::size_t i) const {
        switch (i) {
            case 0: return ll;
            case 1: return lh;
            case 2: return hl;
            default: return hh;
        }
    }
    Tensor& operator[](std::size_t i) { return const_cast<Tensor&>(static_cast<const WaveletQuad&>(*this)[i]); }
};

namespace detail {

// Sign of sample j (0=a,1=b,2=c,3=d) in component k (0=ll,1=lh,2=hl,3=hh).
inline constexpr std::array<std::array<double, 4>, 4> kHaarSign{{
    {1, 1, 1, 1},
    {1, 1, -1, -1},
    {1, -1, 1, -1},
    {1, -1, -1, 1},
}};

inline std::size_t block_offset(std::size_t j, std::size_t width) { return (j / 2) * width + (j % 2); }

// One component of the forward transform.
inline Tensor haar_component(const Tensor& x, std::size_t k, const char* op) {
    const Shape s = x.shape();
    const Shape out{s.n, s.c, s.h / 2, s.w / 2};
    std::vector<double> y(out.numel());
    const auto xv = x.data();
    for (std::size_t m = 0; m < s.n * s.c; ++m)
        for (std::size_t r = 0; r < out.h; ++r)
            for (std::size_t c = 0; c < out.w; ++c) {
                const std::size_t base = m * s.plane() + 2 * r * s.w + 2 * c;
                double acc = 0.0;
                for (std::size_t j = 0; j < 4; ++j) acc += kHaarSign[k][j] * xv[base + block_offset(j, s.w)];
                y[m * out.plane() + r * out.w + c] = 0.5 * acc;
            }
    return make_result(op, out, std::move(y), {&x}, [s, out, k](Node& self) {
        auto& gx = *input_grad(self, 0);
        for (std::size_t m = 0; m < s.n * s.c; ++m)
            for (std::size_t r = 0; r < out.h; ++r)
                for (std::size_t c = 0; c < out.w; ++c) {
                    const double g = 0.5 * self.grad[m * out.plane() + r * out.w + c];
                    const std::size_t base = m * s.plane() + 2 * r * s.w + 2 * c;
                    for (std::size_t j = 0; j < 4; ++j) gx[base + block_offset(j, s.w)] += kHaarSign[k][j] * g;
                }
    });
}

}  // namespace detail

/// Forward transform of each (n, c) plane. H and W must be even.
inline WaveletQuad dwt2(const Tensor& x) {
    const Shape s = x.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) throw ArgumentError("dwt2: spatial size must be even, got " + s.str());
    return {detail::haar_component(x, 0, "dwt2.ll"), detail::haar_component(x, 1, "dwt2.lh"),
            detail::haar_component(x, 2, "dwt2.hl"), detail::haar_component(x, 3, "dwt2.hh")};
}

/// Exact inverse of dwt2.
inline Tensor idwt2(const WaveletQuad& q) {
    const Shape s = q.ll.shape();
    for (std::size_t k = 1; k < 4; ++k)
        if (q[k].shape() != s)
            throw ShapeError("idwt2: component shapes differ: " + s.str() + " vs " + q[k].shape().str());
    const Shape out{s.n, s.c, s.h * 2, s.w * 2};
    std::vector<double> y(out.numel(), 0.0);
    for (std::size_t k = 0; k < 4; ++k) {
        const auto qv = q[k].data();
        for (std::size_t m = 0; m < s.n * s.c; ++m)
            for (std::size_t r = 0; r < s.h; ++r)
                for (std::size_t c = 0; c < s.w; ++c) {
                    const double v = 0.5 * qv[m * s.plane() + r * s.w + c];
                    const std::size_t base = m * out.plane() + 2 * r * out.w + 2 * c;
                    for (std::size_t j = 0; j < 4; ++j) y[base + detail::block_offset(j, out.w)] += detail::kHaarSign[k][j] * v;
                }
    }
    return detail::make_result("idwt2", out, std::move(y), {&q.ll, &q.lh, &q.hl, &q.hh}, [s, out](detail::Node& self) {
        for (std::size_t k = 0; k < 4; ++k) {
            auto* g = detail::input_grad(self, k);
            if (!g) continue;
            for (std::size_t m = 0; m < s.n * s.c; ++m)
                for (std::size_t r = 0; r < s.h; ++r)
                    for (std::size_t c = 0; c < s.w; ++c) {
                        const std::size_t base = m * out.plane() + 2 * r * out.w + 2 * c;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < 4; ++j)
                            acc += detail::kHaarSign[k][j] * self.grad[base + detail::block_offset(j, out.w)];
                        (*g)[m * s.plane() + r * s.w + c] += 0.5 * acc;
                    }
        }
    });
}

}  // namespace rdnet
