#pragma once

// CLI command bodies. Each returns the process exit code: 0 success,
// 1 validation failure, 2 I/O error.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rdnet/gradcheck.hpp"
#include "rdnet/io/png.hpp"
#include "rdnet/metrics.hpp"
#include "rdnet/training.hpp"
#include "rdnet/wavelet.hpp"

namespace rdnet {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitIo = 2 };

/// Maps exceptions to exit codes with a one-line diagnostic.
template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }
}

inline int cmd_gen_data(const std::filesystem::path& out, std::size_t count, std::size_t size, std::uint64_t seed,
                        std::ostream& out_stream, std::ostream& err) {
    return guarded(err, [&] {
        gen_data(out, count, size, seed);
        out_stream << "wrote " << count << " pairs to " << out.string() << "\n";
        return kExitOk;
    });
}

/// `out` overrides the config's out_dir when non-empty.
inline int cmd_train_toy(const std::filesystem::path& config, const std::filesystem::path& out,
                         std::ostream& out_stream, std::ostream& err) {
    return guarded(err, [&] {
        RunConfig cfg = load_run_config(config);
        if (!out.empty()) cfg.out_dir = out;
        run_toy_training(cfg, out_stream);
        return kExitOk;
    });
}

enum class ThresholdMode { Max, Adaptive };

struct EvalRow {
    std::string name;
    MetricReport report;
};

namespace eval_detail {

inline Map load_map(const std::filesystem::path& path, bool binarize) {
    const io::Image8 img = io::read_gray(path);
    Map m{img.height, img.width, std::vector<double>(img.pixels.size())};
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        m.pixels[i] = binarize ? (img.pixels[i] > 127 ? 1.0 : 0.0) : img.pixels[i] / 255.0;
    return m;
}

inline Map resize_nearest(const Map& m, std::size_t height, std::size_t width) {
    Map out{height, width, std::vector<double>(height * width)};
    for (std::size_t r = 0; r < height; ++r)
        for (std::size_t c = 0; c < width; ++c) out.pixels[r * width + c] = m(r * m.height / height, c * m.width / width);
    return out;
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10f", v);
    return buf;
}

// Runs f(i) for i in [0, n) over a small worker pool.
template <class F>
void parallel_for(std::size_t n, F&& f) {
    const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i; (i = next.fetch_add(1)) < n;) f(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace eval_detail

/// Evaluates every GT png that has a same-named prediction. Missing
/// predictions are reported and skipped; they make the exit code 2.
inline int cmd_eval(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                    const std::filesystem::path& out_csv, ThresholdMode mode, const std::filesystem::path& curve_csv,
                    std::ostream& out_stream, std::ostream& err) {
    return guarded(err, [&]() -> int {
        namespace fs = std::filesystem;
        for (const fs::path& d : {pred_dir, gt_dir})
            if (!fs::is_directory(d)) throw IoError("not a directory: '" + d.string() + "'");

        std::vector<std::string> names;
        for (const auto& entry : fs::directory_iterator(gt_dir))
            if (entry.is_regular_file() && entry.path().extension() == ".png")
                names.push_back(entry.path().filename().string());
        std::sort(names.begin(), names.end());

        std::vector<std::string> present, missing;
        for (const auto& n : names) (fs::exists(pred_dir / n) ? present : missing).push_back(n);
        for (const auto& n : missing) err << "missing prediction: " << (pred_dir / n).string() << "\n";

        std::vector<EvalRow> rows(present.size());
        std::vector<std::string> warnings(present.size());
        eval_detail::parallel_for(present.size(), [&](std::size_t i) {
            const Map gt = eval_detail::load_map(gt_dir / present[i], true);
            Map pred = eval_detail::load_map(pred_dir / present[i], false);
            if (pred.height != gt.height || pred.width != gt.width) {
                warnings[i] = "warning: resized " + (pred_dir / present[i]).string() + " from " +
                              std::to_string(pred.width) + "x" + std::to_string(pred.height) + " to " +
                              std::to_string(gt.width) + "x" + std::to_string(gt.height) + "\n";
                pred = eval_detail::resize_nearest(pred, gt.height, gt.width);
            }
            rows[i] = {present[i], evaluate(pred, gt)};
        });
        for (std::size_t i = 0; i < rows.size(); ++i) {
            err << warnings[i];
            if (rows[i].report.empty_ground_truth)
                err << "note: " << rows[i].name << " has an empty ground truth; its F-measure is 0\n";
        }

        std::ostringstream csv;
        csv << "name,mae,fbeta_max,fbeta_adaptive,emeasure,smeasure\n";
        MetricReport mean;
        for (const auto& r : rows) {
            const auto& m = r.report;
            csv << r.name << "," << eval_detail::fmt(m.mae) << "," << eval_detail::fmt(m.fbeta_max) << ","
                << eval_detail::fmt(m.fbeta_adaptive) << "," << eval_detail::fmt(m.emeasure) << ","
                << eval_detail::fmt(m.smeasure) << "\n";
            mean.mae += m.mae;
            mean.fbeta_max += m.fbeta_max;
            mean.fbeta_adaptive += m.fbeta_adaptive;
            mean.emeasure += m.emeasure;
            mean.smeasure += m.smeasure;
            for (std::size_t t = 0; t < kThresholdLevels; ++t) mean.fbeta_curve[t] += m.fbeta_curve[t];
        }
        if (!rows.empty()) {
            const double n = static_cast<double>(rows.size());
            mean.mae /= n;
            mean.fbeta_max /= n;
            mean.fbeta_adaptive /= n;
            mean.emeasure /= n;
            mean.smeasure /= n;
            for (double& v : mean.fbeta_curve) v /= n;
            csv << "mean," << eval_detail::fmt(mean.mae) << "," << eval_detail::fmt(mean.fbeta_max) << ","
                << eval_detail::fmt(mean.fbeta_adaptive) << "," << eval_detail::fmt(mean.emeasure) << ","
                << eval_detail::fmt(mean.smeasure) << "\n";
        }
        auto write = [](const fs::path& path, const std::string& text) {
            std::ofstream f(path, std::ios::binary);
            if (!f) throw IoError("cannot write '" + path.string() + "'");
            f << text;
            if (!f) throw IoError("failed writing '" + path.string() + "'");
        };
        write(out_csv, csv.str());
        if (!curve_csv.empty()) {
            std::ostringstream curve;
            curve << "threshold,fbeta\n";
            for (std::size_t t = 0; t < kThresholdLevels; ++t)
                curve << t << "," << eval_detail::fmt(mean.fbeta_curve[t]) << "\n";
            write(curve_csv, curve.str());
        }

        const double fbeta = mode == ThresholdMode::Max ? mean.fbeta_max : mean.fbeta_adaptive;
        out_stream << "images " << rows.size() << "  MAE " << eval_detail::fmt(mean.mae) << "  Fbeta("
                   << (mode == ThresholdMode::Max ? "max" : "adaptive") << ") " << eval_detail::fmt(fbeta) << "  Emeasure "
                   << eval_detail::fmt(mean.emeasure) << "  Smeasure " << eval_detail::fmt(mean.smeasure) << "\n";
        if (!missing.empty()) {
            err << "skipped " << missing.size() << " of " << names.size() << " images\n";
            return kExitIo;
        }
        if (rows.empty()) {
            err << "error: no ground-truth png files in '" << gt_dir.string() << "'\n";
            return kExitIo;
        }
        return kExitOk;
    });
}

inline int cmd_gradcheck(std::uint64_t seed, const std::string& corrupt, std::ostream& out_stream, std::ostream& err) {
    return guarded(err, [&] {
        const GradCheckReport report = run_gradcheck_suite(seed, corrupt);
        std::size_t failures = 0;
        for (const auto& r : report.results) {
            char line[160];
            std::snprintf(line, sizeof line, "%-28s max_rel_err %.3e  tol %.0e  coords %4zu  %s\n", r.name.c_str(),
                          r.error, r.tolerance, r.coords, r.pass() ? "ok" : "FAIL");
            out_stream << line;
            if (!r.pass()) ++failures;
        }
        out_stream << report.results.size() << " checks, " << failures << " failed\n";
        char timing[64];
        std::snprintf(timing, sizeof timing, "gradcheck took %.2f s\n", report.seconds);
        err << timing;
        return failures == 0 ? kExitOk : kExitValidation;
    });
}

struct RoundtripReport {
    double max_abs_error = 0.0;
    double energy_residual = 0.0;  // relative
};

inline RoundtripReport dwt_roundtrip(const Tensor& x) {
    NoGradGuard no_grad;
    const WaveletQuad q = dwt2(x);
    const Tensor back = idwt2(q);
    RoundtripReport r;
    for (std::size_t i = 0; i < x.numel(); ++i)
        r.max_abs_error = std::max(r.max_abs_error, std::abs(back.data()[i] - x.data()[i]));
    double e_in = 0.0, e_out = 0.0;
    for (double v : x.data()) e_in += v * v;
    for (std::size_t k = 0; k < 4; ++k)
        for (double v : q[k].data()) e_out += v * v;
    r.energy_residual = e_in > 0.0 ? std::abs(e_out - e_in) / e_in : std::abs(e_out);
    return r;
}

inline int cmd_dwt_roundtrip(const std::filesystem::path& image, std::ostream& out_stream, std::ostream& err) {
    return guarded(err, [&] {
        const io::Image8 img = io::read_gray(image);
        if (img.width % 2 != 0 || img.height % 2 != 0)
            throw ArgumentError("dwt-roundtrip: '" + image.string() + "' is " + std::to_string(img.width) + "x" +
                                std::to_string(img.height) + "; both dimensions must be even");
        std::vector<double> v(img.pixels.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.pixels[i] / 255.0;
        const RoundtripReport r = dwt_roundtrip(Tensor::from({1, 1, img.height, img.width}, std::move(v)));
        char buf[160];
        std::snprintf(buf, sizeof buf, "max_abs_reconstruction_error %.3e\nenergy_residual_relative %.3e\n",
                      r.max_abs_error, r.energy_residual);
        out_stream << buf;
        return r.max_abs_error <= 1e-9 && r.energy_residual <= 1e-9 ? kExitOk : kExitValidation;
    });
}

}  // namespace rdnet
