#pragma once

// Frequency-matching context enhancement. Two adjacent levels are aligned to
// a common width and resolution, decomposed with the Haar transform, and each
// frequency component of one level attends to the same component of the
// other. The attention runs on (H/2·W/2) tokens instead of H·W.

#include <array>
#include <string>

#include "rdnet/layers.hpp"
#include "rdnet/rpl.hpp"
#include "rdnet/wavelet.hpp"

namespace rdnet {

namespace detail {
// (N,C,h,w) -> (N,1,C,hw)
inline Tensor tokens(const Tensor& x) {
    const Shape s = x.shape();
    return reshape(x, {s.n, 1, s.c, s.plane()});
}
}  // namespace detail

/// M = softmax((RE a)^T (RE b)), shape (N,1,hw,hw), rows normalized.
inline Tensor interaction_attention(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("wavelet_interaction: " + a.shape().str() + " vs " + b.shape().str());
    return softmax(matmul(transpose(detail::tokens(a)), detail::tokens(b)));
}

/// RE((M (RE a)^T)^T) ⊕ a
inline Tensor apply_interaction(const Tensor& a, const Tensor& attention) {
    const Shape s = a.shape();
    if (attention.shape() != Shape{s.n, 1, s.plane(), s.plane()})
        throw ShapeError("wavelet_interaction: attention " + attention.shape().str() + " does not fit " + s.str());
    const Tensor mixed = matmul(attention, transpose(detail::tokens(a)));  // (N,1,hw,C)
    return add(reshape(transpose(mixed), s), a);
}

/// Component `a` attends to component `b` of the other level.
inline Tensor wavelet_interaction(const Tensor& a, const Tensor& b) {
    return apply_interaction(a, interaction_attention(a, b));
}

struct QuadInteraction {
    WaveletQuad level2;  // level-2 components after attending to level 3
    WaveletQuad level3;  // and symmetrically
    std::array<Tensor, 4> attention2;
    std::array<Tensor, 4> attention3;
};

/// Per-frequency interaction in both directions; frequency paths never mix.
inline QuadInteraction interact_quads(const WaveletQuad& q2, const WaveletQuad& q3) {
    QuadInteraction out;
    for (std::size_t k = 0; k < 4; ++k) {
        out.attention2[k] = interaction_attention(q2[k], q3[k]);
        out.attention3[k] = interaction_attention(q3[k], q2[k]);
        out.level2[k] = apply_interaction(q2[k], out.attention2[k]);
        out.level3[k] = apply_interaction(q3[k], out.attention3[k]);
    }
    return out;
}

struct FceConfig {
    std::size_t level2_channels = 16;
    std::size_t level3_channels = 16;
    std::size_t common_channels = 16;
    std::size_t reduction_ratio = 4;
};

struct FceTrace {
    Tensor aligned2, aligned3;
    QuadInteraction interaction;
    Tensor interacted2, interacted3;  // F^I after the inverse transform
    Tensor output;                    // F^W
};

struct Fce {
    Conv2d align2;  // 1×1, C2 -> C
    Conv2d align3;  // 1×1, C3 -> C, applied before ×2 upsampling
    ChannelAttention at2;
    ChannelAttention at3;
    Conv2d fuse;  // 3×3, 4C -> C

    /// Channel gating then spatial gating, without residual.
    static Tensor enhance(const Tensor& x, const ChannelAttention& ca) {
        const Tensor gated = mul(x, ca(x));
        return mul(gated, spatial_attention(gated));
    }

    FceTrace trace(const Tensor& f2, const Tensor& f3) const {
        const Shape s2 = f2.shape();
        const Shape s3 = f3.shape();
        if (s2.n != s3.n) throw ShapeError("fce: batch mismatch " + s2.str() + " vs " + s3.str());
        if (s2.h != 2 * s3.h || s2.w != 2 * s3.w)
            throw ArgumentError("fce: f2 " + s2.str() + " and f3 " + s3.str() + " must be in a 2:1 resolution ratio");
        if (s2.h % 2 != 0 || s2.w % 2 != 0) throw ArgumentError("fce: f2 spatial size must be even, got " + s2.str());

        FceTrace t;
        t.aligned2 = align2(f2);
        t.aligned3 = upsample_nearest(align3(f3), 2);
        t.interaction = interact_quads(dwt2(t.aligned2), dwt2(t.aligned3));
        t.interacted2 = idwt2(t.interaction.level2);
        t.interacted3 = idwt2(t.interaction.level3);
        const Tensor en2 = enhance(concat_channels({t.interacted2, t.aligned2}), at2);
        const Tensor en3 = enhance(concat_channels({t.interacted3, t.aligned3}), at3);
        t.output = fuse(concat_channels({en2, en3}));
        return t;
    }

    /// f2: (N,C2,H,W), f3: (N,C3,H/2,W/2) -> F^W: (N,C,H,W).
    Tensor operator()(const Tensor& f2, const Tensor& f3) const { return trace(f2, f3).output; }
};

inline Fce make_fce(ParamStore& store, const std::string& name, const FceConfig& cfg, Rng& rng) {
    const std::size_t C = cfg.common_channels;
    if (C == 0) throw ConfigError("fce.common_channels must be positive");
    Fce fce;
    fce.align2 = make_conv(store, name + ".align2", cfg.level2_channels, C, 1, rng);
    fce.align3 = make_conv(store, name + ".align3", cfg.level3_channels, C, 1, rng);
    fce.at2 = make_channel_attention(store, name + ".at2", 2 * C, cfg.reduction_ratio, rng);
    fce.at3 = make_channel_attention(store, name + ".at3", 2 * C, cfg.reduction_ratio, rng);
    fce.fuse = make_conv(store, name + ".fuse", 4 * C, C, 3, rng);
    return fce;
}

}  // namespace rdnet
