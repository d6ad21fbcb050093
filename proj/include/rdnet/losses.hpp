#pragma once

// Saliency supervision (BCE + IoU + F-measure) and the proportion regression
// term, summed with equal weights. Each term is already averaged over the batch.

#include <string>

#include "rdnet/ops.hpp"

namespace rdnet {

struct LossOptions {
    double beta2 = 0.3;
    double eps = 1e-7;  // BCE clamp
};

inline constexpr double kLossDenominatorGuard = 1e-8;

namespace detail {
inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": prediction " + a.shape().str() + " vs target " + b.shape().str());
}
}  // namespace detail

/// Mean over pixels and batch of -[g log s + (1-g) log(1-s)], s clamped to [eps, 1-eps].
inline Tensor bce_loss(const Tensor& s, const Tensor& g, double eps = 1e-7) {
    detail::require_same_shape(s, g, "bce_loss");
    const Tensor sc = clamp(s, eps, 1.0 - eps);
    const Tensor pos = mul(g, log(sc));
    const Tensor neg = mul(rsub_scalar(1.0, g), log(rsub_scalar(1.0, sc)));
    return scale(mean_all(add(pos, neg)), -1.0);
}

/// 1 - Σsg / Σ(s+g-sg) per sample, averaged over the batch.
inline Tensor iou_loss(const Tensor& s, const Tensor& g) {
    detail::require_same_shape(s, g, "iou_loss");
    const Tensor sg = mul(s, g);
    const Tensor inter = sum_per_sample(sg);
    const Tensor uni = add_scalar(sum_per_sample(sub(add(s, g), sg)), kLossDenominatorGuard);
    return mean_all(rsub_scalar(1.0, div(inter, uni)));
}

/// Soft F-measure loss: TP=Σsg, FP=Σs(1-g), FN=Σ(1-s)g;
/// 1 - (1+β²)TP / (β²(TP+FN) + TP+FP), per sample then averaged.
inline Tensor fm_loss(const Tensor& s, const Tensor& g, double beta2 = 0.3) {
    detail::require_same_shape(s, g, "fm_loss");
    if (!(beta2 > 0.0)) throw ConfigError("loss.beta2 must be positive");
    const Tensor tp = sum_per_sample(mul(s, g));
    const Tensor predicted = sum_per_sample(s);  // TP + FP
    const Tensor actual = sum_per_sample(g);     // TP + FN
    const Tensor denom = add_scalar(add(scale(actual, beta2), predicted), kLossDenominatorGuard);
    return mean_all(rsub_scalar(1.0, div(scale(tp, 1.0 + beta2), denom)));
}

/// Mean squared error over the batch.
inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    detail::require_same_shape(pred, target, "mse_loss");
    return mean_all(square(sub(pred, target)));
}

struct LossReport {
    double bce = 0.0;
    double iou = 0.0;
    double fm = 0.0;
    double mse = 0.0;
    double total = 0.0;
};

struct LossTerms {
    Tensor bce, iou, fm, mse, total;

    LossReport report() const { return {bce.item(), iou.item(), fm.item(), mse.item(), total.item()}; }
};

/// bce + iou + fm + mse, unweighted.
inline LossTerms total_loss(const Tensor& s, const Tensor& g, const Tensor& pg_pred, const Tensor& pg_target,
                            const LossOptions& opt = {}) {
    LossTerms t;
    t.bce = bce_loss(s, g, opt.eps);
    t.iou = iou_loss(s, g);
    t.fm = fm_loss(s, g, opt.beta2);
    t.mse = mse_loss(pg_pred, pg_target);
    t.total = add(add(add(t.bce, t.iou), t.fm), t.mse);
    return t;
}

}  // namespace rdnet
