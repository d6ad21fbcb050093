#pragma once

// Dynamic adaptive detail-aware module. Each sample's proportion bin picks a
// prefix of the kernel sizes {1,3,5,7,9}; the lower branch sums the selected
// C->C convolutions of F1, the upper branch sums the selected 1->1
// convolutions of the channel-max map and gates through 1×1 conv + sigmoid.
//   F^P = F1^D ⊗ W ⊕ F1^D

#include <array>
#include <span>
#include <string>
#include <vector>

#include "rdnet/layers.hpp"
#include "rdnet/rpl.hpp"

namespace rdnet {

inline constexpr std::array<std::size_t, 5> kKernelSizes{1, 3, 5, 7, 9};

using KernelSet = std::vector<std::size_t>;

inline KernelSet select_kernels(ProportionBin bin) {
    switch (bin) {
        case ProportionBin::Small: return {1, 3, 5};
        case ProportionBin::Mid: return {1, 3, 5, 7};
        default: return {1, 3, 5, 7, 9};
    }
}

inline constexpr std::size_t kernel_slot(std::size_t size) { return (size - 1) / 2; }

/// All five sizes are always allocated; the selector only masks usage.
struct KernelBank {
    std::array<Conv2d, 5> extractor;  // C -> C, j×j
    std::array<Conv2d, 5> optimizer;  // 1 -> 1, j×j
    Conv2d head;                      // 1 -> 1, 1×1
};

inline KernelBank make_kernel_bank(ParamStore& store, const std::string& name, std::size_t channels, Rng& rng) {
    KernelBank bank;
    for (std::size_t i = 0; i < kKernelSizes.size(); ++i) {
        const std::size_t k = kKernelSizes[i];
        bank.extractor[i] = make_conv(store, name + ".extract" + std::to_string(k), channels, channels, k, rng);
        bank.optimizer[i] = make_conv(store, name + ".optimize" + std::to_string(k), 1, 1, k, rng);
    }
    bank.head = make_conv(store, name + ".head", 1, 1, 1, rng);
    return bank;
}

/// One sample (1,C,H,W) through the kernel set.
inline Tensor dad_sample(const Tensor& f1, const KernelSet& kernels, const KernelBank& bank) {
    const Tensor pooled = channel_max_pool(f1);
    Tensor detail;
    Tensor weight;
    for (std::size_t k : kernels) {
        const std::size_t slot = kernel_slot(k);
        Tensor d = bank.extractor[slot](f1);
        Tensor w = bank.optimizer[slot](pooled);
        detail = detail.defined() ? add(detail, d) : d;
        weight = weight.defined() ? add(weight, w) : w;
    }
    const Tensor gate = sigmoid(bank.head(weight));
    return add(mul(detail, gate), detail);
}

/// f1: (N,C,H,W) with one bin per sample -> F^P: (N,C,H,W).
inline Tensor dad_forward(const Tensor& f1, std::span<const ProportionBin> bins, const KernelBank& bank) {
    const std::size_t N = f1.shape().n;
    if (bins.size() != N)
        throw ArgumentError("dad: got " + std::to_string(bins.size()) + " proportion bins for batch of " +
                            std::to_string(N));
    if (N == 1) return dad_sample(f1, select_kernels(bins[0]), bank);
    std::vector<Tensor> parts;
    parts.reserve(N);
    for (std::size_t n = 0; n < N; ++n) parts.push_back(dad_sample(slice_batch(f1, n), select_kernels(bins[n]), bank));
    return concat_batch(parts);
}

}  // namespace rdnet
