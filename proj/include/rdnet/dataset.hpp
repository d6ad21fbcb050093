#pragma once

// Synthetic salient-object scenes, dataset loading, and training-time
// augmentation (flip, 90° rotation, crop-and-resize).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "rdnet/io/png.hpp"
#include "rdnet/random.hpp"
#include "rdnet/rpl.hpp"
#include "rdnet/tensor.hpp"

namespace rdnet {

/// One image/mask pair in memory. image: 3×size×size planar in [0,1];
/// mask: size×size in {0,1}.
struct Sample {
    std::string name;
    std::size_t size = 0;
    std::vector<double> image;
    std::vector<double> mask;
    double proportion = 0.0;
};

enum class SceneKind { Rectangle, Ellipse, Bars, Blobs };

inline const char* to_string(SceneKind k) {
    switch (k) {
        case SceneKind::Rectangle: return "rectangle";
        case SceneKind::Ellipse: return "ellipse";
        case SceneKind::Bars: return "bars";
        default: return "blobs";
    }
}

namespace dataset_detail {

inline void fill_rect(std::vector<double>& mask, std::size_t S, double r0, double c0, double h, double w) {
    for (std::size_t r = 0; r < S; ++r)
        for (std::size_t c = 0; c < S; ++c) {
            const double y = r + 0.5, x = c + 0.5;
            if (y >= r0 && y < r0 + h && x >= c0 && x < c0 + w) mask[r * S + c] = 1.0;
        }
}

inline void fill_ellipse(std::vector<double>& mask, std::size_t S, double cy, double cx, double ry, double rx) {
    for (std::size_t r = 0; r < S; ++r)
        for (std::size_t c = 0; c < S; ++c) {
            const double dy = (r + 0.5 - cy) / ry, dx = (c + 0.5 - cx) / rx;
            if (dy * dy + dx * dx <= 1.0) mask[r * S + c] = 1.0;
        }
}

// Mask covering roughly `target` of the image with the given scene kind.
inline std::vector<double> render_mask(SceneKind kind, double target, std::size_t S, Rng& rng) {
    std::vector<double> mask(S * S, 0.0);
    const double side = static_cast<double>(S);
    const double area = target * side * side;
    switch (kind) {
        case SceneKind::Rectangle: {
            const double aspect = rng.uniform(0.6, 1.6);
            const double w = std::min(side, std::sqrt(area * aspect));
            const double h = std::min(side, area / w);
            fill_rect(mask, S, rng.uniform(0.0, side - h), rng.uniform(0.0, side - w), h, w);
            break;
        }
        case SceneKind::Ellipse: {
            const double aspect = rng.uniform(0.6, 1.6);
            const double rx = std::min(side * 0.62, std::sqrt(area * aspect / std::numbers::pi));
            const double ry = std::min(side * 0.62, area / (std::numbers::pi * rx));
            const double cx = rng.uniform(std::min(rx, side / 2), std::max(side - rx, side / 2));
            const double cy = rng.uniform(std::min(ry, side / 2), std::max(side - ry, side / 2));
            fill_ellipse(mask, S, cy, cx, ry, rx);
            break;
        }
        case SceneKind::Bars: {
            const std::size_t count = 1 + rng.index(3);
            const bool vertical = rng.coin();
            const double length = side * rng.uniform(0.75, 1.0);
            const double thickness = std::max(1.0, area / (static_cast<double>(count) * length));
            const double slot = side / static_cast<double>(count);
            for (std::size_t k = 0; k < count; ++k) {
                const double t = std::min(thickness, slot);
                const double across = k * slot + rng.uniform(0.0, slot - t);
                const double along = rng.uniform(0.0, side - length);
                if (vertical) fill_rect(mask, S, along, across, length, t);
                else fill_rect(mask, S, across, along, t, length);
            }
            break;
        }
        case SceneKind::Blobs: {
            const std::size_t count = 2 + rng.index(4);
            const double each = area / static_cast<double>(count);
            for (std::size_t k = 0; k < count; ++k) {
                const double r = std::sqrt(each / std::numbers::pi) * rng.uniform(0.9, 1.25);
                fill_ellipse(mask, S, rng.uniform(r * 0.5, side - r * 0.5), rng.uniform(r * 0.5, side - r * 0.5), r, r);
            }
            break;
        }
    }
    return mask;
}

inline double mask_fraction(const std::vector<double>& mask) {
    double count = 0.0;
    for (double v : mask) count += v > 0.5 ? 1.0 : 0.0;
    return count / static_cast<double>(mask.size());
}

}  // namespace dataset_detail

/// Deterministic scene for index `i`. Proportion bins cycle Small/Mid/Large
/// and scene kinds cycle rectangle/ellipse/bars/blobs, so every bin and the
/// big/small/narrow/multiple cases all appear.
inline Sample synth_sample(std::size_t i, std::size_t size, std::uint64_t seed) {
    Rng rng(mix_seed(seed, i));
    const std::size_t S = size;
    double target = 0.0;
    switch (i % 3) {
        case 0: target = rng.uniform(0.04, 0.20); break;
        case 1: target = rng.uniform(0.28, 0.47); break;
        default: target = rng.uniform(0.55, 0.80); break;
    }
    const auto kind = static_cast<SceneKind>((i / 3) % 4);

    Sample s;
    char name[32];
    std::snprintf(name, sizeof name, "%04zu", i);
    s.name = name;
    s.size = S;
    s.mask = dataset_detail::render_mask(kind, target, S, rng);
    s.proportion = dataset_detail::mask_fraction(s.mask);

    // Textured background and a brighter, differently textured object.
    double bg[3], fg[3];
    for (double& v : bg) v = rng.uniform(0.10, 0.40);
    for (double& v : fg) v = rng.uniform(0.55, 0.95);
    const double freq = rng.uniform(0.2, 0.6);
    const double phase = rng.uniform(0.0, 6.28);
    s.image.assign(3 * S * S, 0.0);
    for (std::size_t r = 0; r < S; ++r)
        for (std::size_t c = 0; c < S; ++c) {
            const bool in = s.mask[r * S + c] > 0.5;
            const double stripes = 0.06 * std::sin(freq * (r + 0.7 * c) + phase);
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double noise = rng.uniform(-0.08, 0.08);
                const double base = in ? fg[ch] + 0.5 * noise : bg[ch] + stripes + noise;
                s.image[(ch * S + r) * S + c] = std::clamp(base, 0.0, 1.0);
            }
        }
    return s;
}

inline std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

/// Writes image_####.png, mask_####.png and index.csv (name,proportion,kind).
inline void gen_data(const std::filesystem::path& out_dir, std::size_t count, std::size_t size, std::uint64_t seed) {
    if (size == 0 || size % 32 != 0) throw ArgumentError("gen-data: size must be a positive multiple of 32");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory '" + out_dir.string() + "': " + ec.message());
    std::ostringstream index;
    index << "name,proportion,kind\n";
    for (std::size_t i = 0; i < count; ++i) {
        const Sample s = synth_sample(i, size, seed);
        io::Image8 img{size, size, 3, std::vector<std::uint8_t>(3 * size * size)};
        io::Image8 mask{size, size, 1, std::vector<std::uint8_t>(size * size)};
        for (std::size_t p = 0; p < size * size; ++p) {
            for (std::size_t ch = 0; ch < 3; ++ch) img.pixels[3 * p + ch] = to_byte(s.image[ch * size * size + p]);
            mask.pixels[p] = s.mask[p] > 0.5 ? 255 : 0;
        }
        io::write_png(out_dir / ("image_" + s.name + ".png"), img);
        io::write_png(out_dir / ("mask_" + s.name + ".png"), mask);
        char line[96];
        std::snprintf(line, sizeof line, "%s,%.10f,%s\n", s.name.c_str(), s.proportion,
                      to_string(static_cast<SceneKind>((i / 3) % 4)));
        index << line;
    }
    const auto index_path = out_dir / "index.csv";
    std::ofstream f(index_path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + index_path.string() + "'");
    f << index.str();
    if (!f) throw IoError("failed writing '" + index_path.string() + "'");
}

/// Loads every pair listed in index.csv. Masks are binarized at 127.
inline std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
    const auto index_path = dir / "index.csv";
    std::ifstream f(index_path);
    if (!f) throw IoError("cannot open dataset index '" + index_path.string() + "'");
    std::string line;
    std::getline(f, line);
    std::vector<Sample> samples;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const std::string name = line.substr(0, line.find(','));
        const io::Image8 img = io::read_rgb(dir / ("image_" + name + ".png"));
        const io::Image8 mask = io::read_gray(dir / ("mask_" + name + ".png"));
        if (img.width != img.height || mask.width != img.width || mask.height != img.height)
            throw ValidationError("dataset '" + dir.string() + "': image/mask '" + name +
                                  "' must be square and equally sized");
        Sample s;
        s.name = name;
        s.size = img.width;
        const std::size_t P = img.width * img.height;
        s.image.resize(3 * P);
        s.mask.resize(P);
        for (std::size_t p = 0; p < P; ++p) {
            for (std::size_t ch = 0; ch < 3; ++ch) s.image[ch * P + p] = img.pixels[3 * p + ch] / 255.0;
            s.mask[p] = mask.pixels[p] > 127 ? 1.0 : 0.0;
        }
        s.proportion = dataset_detail::mask_fraction(s.mask);
        samples.push_back(std::move(s));
    }
    if (samples.empty()) throw ValidationError("dataset '" + dir.string() + "' lists no samples");
    return samples;
}

/// Random horizontal/vertical flip, 90° rotation and crop (70-100% side)
/// resized back with nearest sampling; image and mask move together.
inline Sample augment(const Sample& in, Rng& rng) {
    const std::size_t S = in.size;
    const bool flip_h = rng.coin();
    const bool flip_v = rng.coin();
    const std::size_t quarter_turns = rng.index(4);
    const double crop = rng.uniform(0.7, 1.0);
    const double crop_side = crop * S;
    const double top = rng.uniform(0.0, S - crop_side);
    const double left = rng.uniform(0.0, S - crop_side);

    auto source = [&](std::size_t r, std::size_t c) {
        double y = top + (r + 0.5) * crop;
        double x = left + (c + 0.5) * crop;
        auto ry = std::min(S - 1, static_cast<std::size_t>(y));
        auto rx = std::min(S - 1, static_cast<std::size_t>(x));
        for (std::size_t q = 0; q < quarter_turns; ++q) {
            const std::size_t ny = rx, nx = S - 1 - ry;
            ry = ny;
            rx = nx;
        }
        if (flip_h) rx = S - 1 - rx;
        if (flip_v) ry = S - 1 - ry;
        return ry * S + rx;
    };

    Sample out;
    out.name = in.name;
    out.size = S;
    out.image.resize(in.image.size());
    out.mask.resize(in.mask.size());
    for (std::size_t r = 0; r < S; ++r)
        for (std::size_t c = 0; c < S; ++c) {
            const std::size_t src = source(r, c);
            out.mask[r * S + c] = in.mask[src];
            for (std::size_t ch = 0; ch < 3; ++ch) out.image[ch * S * S + r * S + c] = in.image[ch * S * S + src];
        }
    out.proportion = dataset_detail::mask_fraction(out.mask);
    return out;
}

/// Stacks samples into (N,3,S,S) images and (N,1,S,S) masks.
inline std::pair<Tensor, Tensor> make_batch(const std::vector<Sample>& samples) {
    if (samples.empty()) throw ArgumentError("make_batch: empty batch");
    const std::size_t S = samples.front().size;
    std::vector<double> images, masks;
    images.reserve(samples.size() * 3 * S * S);
    masks.reserve(samples.size() * S * S);
    for (const Sample& s : samples) {
        if (s.size != S) throw ShapeError("make_batch: mixed sample sizes");
        images.insert(images.end(), s.image.begin(), s.image.end());
        masks.insert(masks.end(), s.mask.begin(), s.mask.end());
    }
    const std::size_t N = samples.size();
    return {Tensor::from({N, 3, S, S}, std::move(images)), Tensor::from({N, 1, S, S}, std::move(masks))};
}

}  // namespace rdnet
