#pragma once

// Saliency evaluation: MAE, F-measure over a 256-level threshold grid with
// max and adaptive variants, enhanced-alignment measure, structure measure.
// Maps are row-major values in [0,1]; ground truths are binarized at 0.5.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rdnet/errors.hpp"

namespace rdnet {

struct Map {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;

    std::size_t size() const { return pixels.size(); }
    double operator()(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
};

inline constexpr std::size_t kThresholdLevels = 256;

struct FMeasureResult {
    std::array<double, kThresholdLevels> curve{};
    double max = 0.0;
    double adaptive = 0.0;
    bool empty_ground_truth = false;
};

struct MetricReport {
    double mae = 0.0;
    std::array<double, kThresholdLevels> fbeta_curve{};
    double fbeta_max = 0.0;
    double fbeta_adaptive = 0.0;
    double emeasure = 0.0;
    double smeasure = 0.0;
    bool empty_ground_truth = false;
};

namespace metrics_detail {

inline constexpr double kEps = 2.220446049250313e-16;

inline void require_same_dims(const Map& s, const Map& g, const char* what) {
    if (s.height != g.height || s.width != g.width || s.size() != g.size() || s.size() != s.height * s.width)
        throw ShapeError(std::string(what) + ": prediction " + std::to_string(s.height) + "x" +
                         std::to_string(s.width) + " vs ground truth " + std::to_string(g.height) + "x" +
                         std::to_string(g.width));
    if (s.size() == 0) throw ShapeError(std::string(what) + ": empty map");
}

inline bool foreground(double g) { return g > 0.5; }

inline double mean(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

inline double fbeta(double tp, double predicted, double actual, double beta2) {
    if (predicted <= 0.0 || actual <= 0.0) return 0.0;
    const double precision = tp / predicted;
    const double recall = tp / actual;
    const double denom = beta2 * precision + recall;
    if (denom <= 0.0) return 0.0;
    return (1.0 + beta2) * precision * recall / denom;
}

inline double adaptive_threshold(const Map& s) { return std::min(2.0 * mean(s.pixels), 1.0); }

}  // namespace metrics_detail

/// Mean absolute difference.
inline double mae(const Map& s, const Map& g) {
    metrics_detail::require_same_dims(s, g, "mae");
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) acc += std::abs(s.pixels[i] - g.pixels[i]);
    return acc / static_cast<double>(s.size());
}

/// Number of grid thresholds a value passes: pixel s is positive at
/// threshold t iff s·255 >= t.
inline std::size_t threshold_level_count(double value) {
    // Estimate, then settle against the exact comparison used by the grid.
    const double scaled = value * 255.0;
    long count = static_cast<long>(std::floor(std::clamp(scaled, -1.0, 512.0))) + 1;
    count = std::clamp(count, 0L, static_cast<long>(kThresholdLevels));
    while (count < static_cast<long>(kThresholdLevels) && scaled >= static_cast<double>(count)) ++count;
    while (count > 0 && scaled < static_cast<double>(count - 1)) --count;
    return static_cast<std::size_t>(count);  // positive for t in [0, count)
}

/// F-measure at the 256 thresholds t = 0..255. The adaptive variant thresholds at
/// min(2·mean(s), 1), rounded up to the grid, which is exact for 8-bit maps.
inline FMeasureResult f_measure(const Map& s, const Map& g, double beta2 = 0.3) {
    metrics_detail::require_same_dims(s, g, "f_measure");
    FMeasureResult r;
    // Histogram of the highest level each pixel passes, split by ground truth.
    std::array<double, kThresholdLevels + 1> fg_hist{};
    std::array<double, kThresholdLevels + 1> bg_hist{};
    double actual = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const std::size_t levels = threshold_level_count(s.pixels[i]);
        if (metrics_detail::foreground(g.pixels[i])) {
            fg_hist[levels] += 1.0;
            actual += 1.0;
        } else {
            bg_hist[levels] += 1.0;
        }
    }
    if (actual == 0.0) {
        r.empty_ground_truth = true;
        return r;
    }
    // Pixels positive at threshold t are those with levels > t.
    double tp = 0.0;
    double fp = 0.0;
    for (std::size_t t = kThresholdLevels; t-- > 0;) {
        tp += fg_hist[t + 1];
        fp += bg_hist[t + 1];
        r.curve[t] = metrics_detail::fbeta(tp, tp + fp, actual, beta2);
    }
    r.max = *std::max_element(r.curve.begin(), r.curve.end());
    const double thr = metrics_detail::adaptive_threshold(s);
    const auto level = static_cast<std::size_t>(std::ceil(thr * 255.0 - 1e-9));
    r.adaptive = r.curve[std::min(level, kThresholdLevels - 1)];
    return r;
}

/// Enhanced-alignment measure of the adaptively binarized prediction.
inline double e_measure(const Map& s, const Map& g) {
    metrics_detail::require_same_dims(s, g, "e_measure");
    const double thr = metrics_detail::adaptive_threshold(s);
    const std::size_t count = s.size();
    std::vector<double> binary(count);
    std::vector<double> gt(count);
    for (std::size_t i = 0; i < count; ++i) {
        binary[i] = s.pixels[i] >= thr ? 1.0 : 0.0;
        gt[i] = metrics_detail::foreground(g.pixels[i]) ? 1.0 : 0.0;
    }
    const double gt_mean = metrics_detail::mean(gt);
    double acc = 0.0;
    if (gt_mean == 0.0) {
        for (double b : binary) acc += 1.0 - b;
    } else if (gt_mean == 1.0) {
        for (double b : binary) acc += b;
    } else {
        const double s_mean = metrics_detail::mean(binary);
        for (std::size_t i = 0; i < count; ++i) {
            const double as = binary[i] - s_mean;
            const double ag = gt[i] - gt_mean;
            const double align = 2.0 * as * ag / (as * as + ag * ag + metrics_detail::kEps);
            acc += (align + 1.0) * (align + 1.0) / 4.0;
        }
    }
    return acc / static_cast<double>(count);
}

namespace metrics_detail {

// Structural similarity of one region (values as given, not binarized).
inline double region_ssim(const std::vector<double>& pred, const std::vector<double>& gt) {
    const double N = static_cast<double>(pred.size());
    const double x = mean(pred);
    const double y = mean(gt);
    double sx = 0.0, sy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        sx += (pred[i] - x) * (pred[i] - x);
        sy += (gt[i] - y) * (gt[i] - y);
        sxy += (pred[i] - x) * (gt[i] - y);
    }
    const double denom = N > 1.0 ? N - 1.0 : 1.0;
    sx /= denom;
    sy /= denom;
    sxy /= denom;
    const double alpha = 4.0 * x * y * sxy;
    const double beta = (x * x + y * y) * (sx + sy);
    if (alpha != 0.0) return alpha / (beta + kEps);
    if (beta == 0.0) return 1.0;
    return 0.0;
}

// 2·mean / (mean² + 1 + std) over the pixels where mask holds.
inline double object_similarity(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    const double m = mean(values);
    double var = 0.0;
    for (double v : values) var += (v - m) * (v - m);
    const double sd = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
    return 2.0 * m / (m * m + 1.0 + sd + kEps);
}

// Round half to even, matching the reference centroid rounding.
inline long round_even(double v) { return static_cast<long>(std::nearbyint(v)); }

}  // namespace metrics_detail

/// Structure measure: alpha·object-aware + (1-alpha)·region-aware similarity.
inline double s_measure(const Map& s, const Map& g, double alpha = 0.5) {
    using namespace metrics_detail;
    require_same_dims(s, g, "s_measure");
    const std::size_t H = s.height, W = s.width, count = s.size();
    std::vector<double> gt(count);
    for (std::size_t i = 0; i < count; ++i) gt[i] = foreground(g.pixels[i]) ? 1.0 : 0.0;
    const double fg_ratio = mean(gt);
    if (fg_ratio == 0.0) return std::clamp(1.0 - mean(s.pixels), 0.0, 1.0);
    if (fg_ratio == 1.0) return std::clamp(mean(s.pixels), 0.0, 1.0);

    // Object-aware term.
    std::vector<double> fg_values;
    std::vector<double> bg_values;
    for (std::size_t i = 0; i < count; ++i) {
        if (gt[i] == 1.0) fg_values.push_back(s.pixels[i]);
        else bg_values.push_back(1.0 - s.pixels[i]);
    }
    const double object =
        fg_ratio * object_similarity(fg_values) + (1.0 - fg_ratio) * object_similarity(bg_values);

    // Region-aware term: split at the (1-based) ground-truth centroid.
    double sum_r = 0.0, sum_c = 0.0, n_fg = 0.0;
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c)
            if (gt[r * W + c] == 1.0) {
                sum_r += static_cast<double>(r);
                sum_c += static_cast<double>(c);
                n_fg += 1.0;
            }
    const std::size_t cy = static_cast<std::size_t>(round_even(sum_r / n_fg)) + 1;
    const std::size_t cx = static_cast<std::size_t>(round_even(sum_c / n_fg)) + 1;
    const double area = static_cast<double>(count);
    const std::array<std::size_t, 3> rows{0, cy, H};
    const std::array<std::size_t, 3> cols{0, cx, W};
    double region = 0.0;
    for (std::size_t qr = 0; qr < 2; ++qr)
        for (std::size_t qc = 0; qc < 2; ++qc) {
            const std::size_t r0 = rows[qr], r1 = std::min(rows[qr + 1], H);
            const std::size_t c0 = cols[qc], c1 = std::min(cols[qc + 1], W);
            if (r1 <= r0 || c1 <= c0) continue;  // zero-weight quadrant
            std::vector<double> pred_q, gt_q;
            for (std::size_t r = r0; r < r1; ++r)
                for (std::size_t c = c0; c < c1; ++c) {
                    pred_q.push_back(s.pixels[r * W + c]);
                    gt_q.push_back(gt[r * W + c]);
                }
            const double weight = static_cast<double>((r1 - r0) * (c1 - c0)) / area;
            region += weight * region_ssim(pred_q, gt_q);
        }

    return std::clamp(alpha * object + (1.0 - alpha) * region, 0.0, 1.0);
}

inline MetricReport evaluate(const Map& s, const Map& g, double beta2 = 0.3) {
    MetricReport r;
    r.mae = mae(s, g);
    const FMeasureResult f = f_measure(s, g, beta2);
    r.fbeta_curve = f.curve;
    r.fbeta_max = f.max;
    r.fbeta_adaptive = f.adaptive;
    r.empty_ground_truth = f.empty_ground_truth;
    r.emeasure = e_measure(s, g);
    r.smeasure = s_measure(s, g);
    return r;
}

}  // namespace rdnet
