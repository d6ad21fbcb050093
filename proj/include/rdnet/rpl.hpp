#pragma once

// Region proportion-aware localization: residual channel then spatial
// attention on the two deepest features, fused by a 3×3 convolution, plus the
// proportion-guidance head that regresses the salient-area fraction.

#include <string>
#include <vector>

#include "rdnet/layers.hpp"
#include "rdnet/ops.hpp"

namespace rdnet {

/// Pool -> 1×1 conv (C -> C/r) -> 1×1 conv (C/r -> C) -> sigmoid; output (N,C,1,1).
struct ChannelAttention {
    Conv2d reduce;
    Conv2d expand;

    Tensor operator()(const Tensor& x) const { return sigmoid(expand(reduce(global_avg_pool(x)))); }
};

inline ChannelAttention make_channel_attention(ParamStore& store, const std::string& name, std::size_t channels,
                                               std::size_t reduction_ratio, Rng& rng) {
    if (reduction_ratio == 0 || channels % reduction_ratio != 0)
        throw ConfigError("channel attention '" + name + "': " + std::to_string(channels) +
                          " channels not divisible by reduction ratio " + std::to_string(reduction_ratio));
    const std::size_t hidden = channels / reduction_ratio;
    return {make_conv(store, name + ".reduce", channels, hidden, 1, rng),
            make_conv(store, name + ".expand", hidden, channels, 1, rng)};
}

/// Parameter-free: sigmoid of the per-pixel channel maximum; output (N,1,H,W).
inline Tensor spatial_attention(const Tensor& x) { return sigmoid(channel_max_pool(x)); }

enum class ProportionBin { Small, Mid, Large };

inline const char* to_string(ProportionBin bin) {
    switch (bin) {
        case ProportionBin::Small: return "small";
        case ProportionBin::Mid: return "mid";
        default: return "large";
    }
}

struct BinThresholds {
    double lo = 0.25;
    double hi = 0.50;

    void validate() const {
        if (!(lo >= 0.0 && lo < hi && hi <= 1.0))
            throw ConfigError("bins: need 0 <= bins.lo < bins.hi <= 1, got lo=" + std::to_string(lo) +
                              " hi=" + std::to_string(hi));
    }
};

/// Small below lo, Large above hi, Mid on the closed interval [lo, hi].
inline ProportionBin bin_proportion(double p, const BinThresholds& t = {}) {
    t.validate();
    if (p < t.lo) return ProportionBin::Small;
    if (p > t.hi) return ProportionBin::Large;
    return ProportionBin::Mid;
}

inline std::vector<ProportionBin> bin_proportions(const Tensor& proportions, const BinThresholds& t = {}) {
    std::vector<ProportionBin> bins;
    for (double p : proportions.data()) bins.push_back(bin_proportion(p, t));
    return bins;
}

/// Foreground fraction of each mask: (N,1,H,W) -> (N,1,1,1).
inline Tensor region_proportion_target(const Tensor& gt_mask) { return mean_per_sample(gt_mask); }

struct RplConfig {
    std::size_t channels = 16;
    std::size_t reduction_ratio = 4;
    bool cross_gating = false;
    std::size_t pg_hidden = 16;
};

struct Rpl {
    ChannelAttention ca4;
    ChannelAttention ca5;
    Conv2d fuse;  // 3×3, 2C -> C
    bool cross_gating = false;

    /// f4: (N,C,H,W), f5: (N,C,H/2,W/2) -> F^A: (N,C,H,W).
    Tensor operator()(const Tensor& f4, const Tensor& f5) const {
        const Shape s4 = f4.shape();
        const Shape s5 = f5.shape();
        if (s4.n != s5.n || s4.c != s5.c)
            throw ShapeError("rpl: f4 " + s4.str() + " and f5 " + s5.str() + " must share batch and channels");
        if (s5.h * 2 != s4.h || s5.w * 2 != s4.w)
            throw ShapeError("rpl: f5 " + s5.str() + " must be half the resolution of f4 " + s4.str());

        // Channel stage: F_ca = F ⊗ V ⊕ F.
        const Tensor v4 = ca4(f4);
        const Tensor v5 = ca5(f5);
        const Tensor& g4 = cross_gating ? v5 : v4;
        const Tensor& g5 = cross_gating ? v4 : v5;
        const Tensor f4_ca = add(mul(f4, g4), f4);
        const Tensor f5_ca = add(mul(f5, g5), f5);

        // Spatial stage: F_sa = F_ca ⊗ W ⊕ F_ca. Cross gating resamples the
        // partner's map to the receiving resolution.
        Tensor w4 = spatial_attention(f4_ca);
        Tensor w5 = spatial_attention(f5_ca);
        if (cross_gating) {
            Tensor to_f4 = upsample_nearest(w5, 2);
            w5 = avg_pool2(w4);
            w4 = std::move(to_f4);
        }
        const Tensor f4_sa = add(mul(f4_ca, w4), f4_ca);
        const Tensor f5_sa = add(mul(f5_ca, w5), f5_ca);

        return fuse(concat_channels({f4_sa, upsample_nearest(f5_sa, 2)}));
    }
};

inline Rpl make_rpl(ParamStore& store, const std::string& name, const RplConfig& cfg, Rng& rng) {
    Rpl rpl;
    rpl.ca4 = make_channel_attention(store, name + ".ca4", cfg.channels, cfg.reduction_ratio, rng);
    rpl.ca5 = make_channel_attention(store, name + ".ca5", cfg.channels, cfg.reduction_ratio, rng);
    rpl.fuse = make_conv(store, name + ".fuse", 2 * cfg.channels, cfg.channels, 3, rng);
    rpl.cross_gating = cfg.cross_gating;
    return rpl;
}

/// Proportion guidance: pool -> FC -> ReLU -> FC -> sigmoid; F^G: (N,1,1,1).
struct ProportionGuidance {
    Linear fc1;
    Linear fc2;

    Tensor operator()(const Tensor& f5) const { return sigmoid(fc2(relu(fc1(global_avg_pool(f5))))); }
};

inline ProportionGuidance make_proportion_guidance(ParamStore& store, const std::string& name, std::size_t channels,
                                                   std::size_t hidden, Rng& rng) {
    if (hidden == 0) throw ConfigError("pg.hidden must be positive");
    return {make_linear(store, name + ".fc1", channels, hidden, rng), make_linear(store, name + ".fc2", hidden, 1, rng)};
}

}  // namespace rdnet
