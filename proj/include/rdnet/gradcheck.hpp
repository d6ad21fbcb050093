#pragma once

// Central finite-difference gradient checks for every op and module.
//
// Each case builds a scalar from leaf tensors; the scalar is a fixed random
// projection of the op's output so every output element contributes. The
// error is normwise: ||analytic - numeric|| / max(||analytic||, ||numeric||, floor).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "rdnet/checkpoint.hpp"
#include "rdnet/losses.hpp"
#include "rdnet/model.hpp"

namespace rdnet {

inline constexpr double kGradStep = 1e-5;
inline constexpr double kGradFloor = 1e-6;
inline constexpr double kOpTolerance = 1e-4;
inline constexpr double kModelTolerance = 1e-3;

struct GradCheckCase {
    std::string name;
    std::vector<Tensor> inputs;      // leaves checked against
    std::function<Tensor()> scalar;  // rebuilt on every evaluation
    double tolerance = kOpTolerance;
    std::size_t max_coords = 0;  // per input; 0 = every coordinate
};

struct GradCheckResult {
    std::string name;
    double error = 0.0;
    double tolerance = 0.0;
    std::size_t coords = 0;
    bool pass() const { return error <= tolerance; }
};

/// `corrupt` scales the analytic gradient, for negative-control runs.
inline GradCheckResult run_gradcheck(const GradCheckCase& c, std::uint64_t seed, double corrupt = 1.0) {
    GradCheckResult r{c.name, 0.0, c.tolerance, 0};
    for (Tensor t : c.inputs) t.zero_grad();
    c.scalar().backward();

    Rng rng(mix_seed(seed, fingerprint(c.name)));
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (Tensor leaf : c.inputs) {
        const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
        const std::size_t n = leaf.numel();
        std::vector<std::size_t> coords(n);
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (c.max_coords > 0 && n > c.max_coords) {
            for (std::size_t i = 0; i < c.max_coords; ++i) std::swap(coords[i], coords[i + rng.index(n - i)]);
            coords.resize(c.max_coords);
        }
        auto values = leaf.mutable_data();
        for (std::size_t i : coords) {
            const double saved = values[i];
            values[i] = saved + kGradStep;
            const double up = c.scalar().item();
            values[i] = saved - kGradStep;
            const double down = c.scalar().item();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * kGradStep);
            const double a = (analytic.empty() ? 0.0 : analytic[i]) * corrupt;
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        r.coords += coords.size();
    }
    r.error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), kGradFloor});
    return r;
}

namespace gradcheck_detail {

inline Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(s.numel());
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::from(s, std::move(v), true);
}

// Values bounded away from zero, so ReLU/max kinks stay out of reach of h.
inline Tensor kink_free(Shape s, Rng& rng) {
    std::vector<double> v(s.numel());
    for (double& x : v) x = (rng.coin() ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
    return Tensor::from(s, std::move(v), true);
}

// Distinct values so channel maxima are unambiguous.
inline Tensor distinct(Shape s, Rng& rng) {
    std::vector<double> v(s.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.05 * static_cast<double>(i) - 1.0;
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
    return Tensor::from(s, std::move(v), true);
}

// sum(f(x) ⊙ R) for a fixed random R.
inline std::function<Tensor()> project(std::function<Tensor()> f, Rng& rng) {
    const Tensor probe = f();
    std::vector<double> w(probe.numel());
    for (double& x : w) x = rng.uniform(-1.0, 1.0);
    const Tensor weights = Tensor::from(probe.shape(), std::move(w));
    return [f = std::move(f), weights] { return sum_all(mul(f(), weights)); };
}

}  // namespace gradcheck_detail

/// Small reduced-width configuration used for the whole-model check.
inline ModelConfig gradcheck_model_config() {
    ModelConfig cfg;
    cfg.input_size = 32;
    cfg.batch = 1;
    cfg.channels = {4, 4, 4, 4, 4};
    cfg.common_channels = 4;
    cfg.reduction_ratio = 2;
    cfg.pg_hidden = 4;
    return cfg;
}

/// The full suite. `holder` keeps modules' parameters alive for the cases.
inline std::vector<GradCheckCase> gradcheck_cases(std::uint64_t seed, std::vector<std::shared_ptr<void>>& holder) {
    using namespace gradcheck_detail;
    Rng rng(mix_seed(seed, 0x67c));
    std::vector<GradCheckCase> cases;
    auto add_case = [&](std::string name, std::vector<Tensor> inputs, std::function<Tensor()> f,
                        double tol = kOpTolerance, std::size_t max_coords = 0) {
        cases.push_back({std::move(name), std::move(inputs), project(std::move(f), rng), tol, max_coords});
    };
    // Already-scalar cases (losses) are checked directly.
    auto add_scalar_case = [&](std::string name, std::vector<Tensor> inputs, std::function<Tensor()> f) {
        cases.push_back({std::move(name), std::move(inputs), std::move(f), kOpTolerance, 0});
    };

    // Elementwise, including broadcasting.
    {
        Tensor a = random_tensor({2, 3, 4, 4}, rng), b = random_tensor({2, 3, 4, 4}, rng);
        Tensor col = random_tensor({2, 3, 1, 1}, rng), pos = random_tensor({2, 3, 4, 4}, rng, 0.5, 2.0);
        add_case("add", {a, col}, [=] { return add(a, col); });
        add_case("sub", {a, b}, [=] { return sub(a, b); });
        add_case("mul", {a, col}, [=] { return mul(a, col); });
        add_case("div", {a, pos}, [=] { return div(a, pos); });
        add_case("scale", {a}, [=] { return scale(a, -1.7); });
        add_case("add_scalar", {a}, [=] { return add_scalar(a, 0.3); });
        add_case("rsub_scalar", {a}, [=] { return rsub_scalar(1.0, a); });
        add_case("sigmoid", {a}, [=] { return sigmoid(scale(a, 3.0)); });
        Tensor k = kink_free({2, 3, 4, 4}, rng);
        add_case("relu", {k}, [=] { return relu(k); });
        add_case("log", {pos}, [=] { return log(pos); });
        add_case("square", {a}, [=] { return square(a); });
        add_case("clamp", {k}, [=] { return clamp(k, -0.05, 0.05); });
    }
    // Convolution and pooling.
    for (std::size_t ksize : {1, 3, 5}) {
        Tensor x = random_tensor({2, 3, 6, 6}, rng);
        Tensor w = random_tensor({4, 3, ksize, ksize}, rng);
        Tensor bias = random_tensor({1, 4, 1, 1}, rng);
        add_case("conv2d_k" + std::to_string(ksize), {x, w, bias}, [=] { return conv2d(x, w, bias); });
    }
    {
        Tensor x = random_tensor({2, 3, 4, 6}, rng);
        add_case("global_avg_pool", {x}, [=] { return global_avg_pool(x); });
        add_case("avg_pool2", {x}, [=] { return avg_pool2(x); });
        Tensor d = distinct({2, 3, 4, 4}, rng);
        add_case("channel_max_pool", {d}, [=] { return channel_max_pool(d); });
        Tensor v = random_tensor({2, 5, 1, 1}, rng), w = random_tensor({1, 1, 3, 5}, rng), b = random_tensor({1, 3, 1, 1}, rng);
        add_case("fully_connected", {v, w, b}, [=] { return fully_connected(v, w, b); });
    }
    // Matrix ops.
    {
        Tensor a = random_tensor({2, 1, 3, 4}, rng), b = random_tensor({2, 1, 4, 5}, rng);
        add_case("matmul", {a, b}, [=] { return matmul(a, b); });
        Tensor s = random_tensor({2, 2, 3, 5}, rng, -2.0, 2.0);
        add_case("softmax", {s}, [=] { return softmax(s); });
        add_case("transpose", {s}, [=] { return transpose(s); });
        add_case("reshape", {s}, [=] { return reshape(s, {2, 1, 6, 5}); });
    }
    // Structural.
    {
        Tensor a = random_tensor({2, 2, 3, 3}, rng), b = random_tensor({2, 3, 3, 3}, rng);
        add_case("concat_channels", {a, b}, [=] { return concat_channels({a, b}); });
        add_case("slice_batch", {a}, [=] { return slice_batch(a, 1); });
        Tensor c = random_tensor({1, 2, 3, 3}, rng);
        add_case("concat_batch", {a, c}, [=] { return concat_batch({a, c}); });
        add_case("upsample_nearest", {a}, [=] { return upsample_nearest(a, 2); });
        add_case("sum_all", {a}, [=] { return sum_all(a); });
        add_case("mean_all", {a}, [=] { return mean_all(a); });
        add_case("sum_per_sample", {a}, [=] { return sum_per_sample(a); });
        add_case("mean_per_sample", {a}, [=] { return mean_per_sample(a); });
    }
    // Wavelet.
    {
        Tensor x = random_tensor({2, 2, 4, 6}, rng);
        for (std::size_t k = 0; k < 4; ++k) {
            static const char* names[] = {"dwt2_ll", "dwt2_lh", "dwt2_hl", "dwt2_hh"};
            add_case(names[k], {x}, [=] { return dwt2(x)[k]; });
        }
        Tensor ll = random_tensor({1, 2, 3, 3}, rng), lh = random_tensor({1, 2, 3, 3}, rng);
        Tensor hl = random_tensor({1, 2, 3, 3}, rng), hh = random_tensor({1, 2, 3, 3}, rng);
        add_case("idwt2", {ll, lh, hl, hh}, [=] { return idwt2({ll, lh, hl, hh}); });
    }

    // Modules: parameters join the checked leaves.
    auto store = std::make_shared<ParamStore>();
    holder.push_back(store);
    auto params_of = [&](const std::string& prefix) {
        std::vector<Tensor> out;
        for (const auto& e : store->entries())
            if (e.name.rfind(prefix, 0) == 0) out.push_back(e.value);
        return out;
    };
    auto with = [](std::vector<Tensor> a, const std::vector<Tensor>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };
    // Biases start at zero; give them values so their paths are exercised.
    auto randomize = [&](const std::string& prefix) {
        for (auto& e : store->entries())
            if (e.name.rfind(prefix, 0) == 0)
                for (double& v : e.value.mutable_data()) v = rng.uniform(-0.5, 0.5);
    };
    {
        auto ca = make_channel_attention(*store, "ca", 4, 2, rng);
        randomize("ca");
        Tensor x = random_tensor({2, 4, 4, 4}, rng);
        add_case("channel_attention", with({x}, params_of("ca")), [=] { return ca(x); });
        Tensor d = distinct({2, 4, 4, 4}, rng);
        add_case("spatial_attention", {d}, [=] { return spatial_attention(d); });
    }
    for (bool cross : {false, true}) {
        const std::string name = cross ? "rpl_cross" : "rpl";
        Rpl rpl = make_rpl(*store, name, {4, 2, cross, 4}, rng);
        randomize(name + ".");
        Tensor f4 = distinct({2, 4, 4, 4}, rng), f5 = distinct({2, 4, 2, 2}, rng);
        add_case(name, with({f4, f5}, params_of(name + ".")), [=] { return rpl(f4, f5); });
    }
    {
        ProportionGuidance pg = make_proportion_guidance(*store, "pg", 4, 3, rng);
        randomize("pg");
        Tensor f5 = random_tensor({3, 4, 2, 2}, rng);
        add_case("proportion_guidance", with({f5}, params_of("pg")), [=] { return pg(f5); });
    }
    {
        KernelBank bank = make_kernel_bank(*store, "dad", 3, rng);
        randomize("dad");
        Tensor f1 = distinct({3, 3, 5, 5}, rng);
        const std::vector<ProportionBin> bins{ProportionBin::Small, ProportionBin::Mid, ProportionBin::Large};
        add_case("dad", with({f1}, params_of("dad")), [=] { return dad_forward(f1, bins, bank); }, kOpTolerance, 40);
    }
    {
        Tensor a = random_tensor({2, 3, 2, 3}, rng), b = random_tensor({2, 3, 2, 3}, rng);
        add_case("wavelet_interaction", {a, b}, [=] { return wavelet_interaction(a, b); });
        Fce fce = make_fce(*store, "fce", {3, 5, 4, 2}, rng);
        randomize("fce");
        Tensor f2 = random_tensor({1, 3, 4, 4}, rng), f3 = random_tensor({1, 5, 2, 2}, rng);
        add_case("fce", with({f2, f3}, params_of("fce")), [=] { return fce(f2, f3); }, kOpTolerance, 40);
    }
    // Losses, on interior predictions and binary masks.
    {
        Tensor s = random_tensor({2, 1, 4, 4}, rng, 0.05, 0.95);
        std::vector<double> gv(32);
        for (double& v : gv) v = rng.coin() ? 1.0 : 0.0;
        const Tensor g = Tensor::from({2, 1, 4, 4}, gv);
        Tensor p = random_tensor({2, 1, 1, 1}, rng, 0.0, 1.0);
        const Tensor t = Tensor::from({2, 1, 1, 1}, {0.3, 0.6});
        add_scalar_case("bce_loss", {s}, [=] { return bce_loss(s, g); });
        add_scalar_case("iou_loss", {s}, [=] { return iou_loss(s, g); });
        add_scalar_case("fm_loss", {s}, [=] { return fm_loss(s, g); });
        add_scalar_case("mse_loss", {p}, [=] { return mse_loss(p, t); });
        add_scalar_case("total_loss", {s, p}, [=] { return total_loss(s, g, p, t).total; });
    }
    // Whole model, gating fixed so the function is smooth in the parameters.
    {
        auto model = std::make_shared<Rdnet>(gradcheck_model_config());
        holder.push_back(model);
        for (auto& e : model->params().entries())
            if (e.name.ends_with(".bias"))
                for (double& v : e.value.mutable_data()) v = rng.uniform(-0.1, 0.1);
        Tensor image = random_tensor({1, 3, 32, 32}, rng, 0.0, 1.0);
        std::vector<double> gv(32 * 32);
        for (std::size_t r = 0; r < 32; ++r)
            for (std::size_t c = 0; c < 32; ++c) gv[r * 32 + c] = (r >= 8 && r < 20 && c >= 10 && c < 26) ? 1.0 : 0.0;
        const Tensor gt = Tensor::from({1, 1, 32, 32}, gv);
        const Tensor target = region_proportion_target(gt);
        const std::vector<ProportionBin> bins{ProportionBin::Large};
        // One case per parameter group so each is judged on its own.
        std::vector<std::pair<std::string, std::vector<Tensor>>> groups;
        for (const auto& e : model->params().entries()) {
            const std::string group = e.name.substr(0, e.name.rfind('.'));
            if (groups.empty() || groups.back().first != group) groups.push_back({group, {}});
            groups.back().second.push_back(e.value);
        }
        groups.push_back({"image", {image}});
        const Rdnet* m = model.get();
        auto loss = [=] {
            const SaliencyOutput out = m->forward(image, bins);
            return total_loss(out.s, gt, out.f_g, target).total;
        };
        for (auto& [group, leaves] : groups)
            cases.push_back({"model:" + group, leaves, loss, kModelTolerance, 6});
    }
    return cases;
}

struct GradCheckReport {
    std::vector<GradCheckResult> results;
    double seconds = 0.0;
    bool pass() const {
        return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.pass(); });
    }
};

/// Runs the suite; a case whose name equals `corrupt` gets a perturbed
/// analytic gradient.
inline GradCheckReport run_gradcheck_suite(std::uint64_t seed, const std::string& corrupt = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::shared_ptr<void>> holder;
    const auto cases = gradcheck_cases(seed, holder);
    if (!corrupt.empty() &&
        std::none_of(cases.begin(), cases.end(), [&](const auto& c) { return c.name == corrupt; }))
        throw ArgumentError("gradcheck: no case named '" + corrupt + "'");
    GradCheckReport report;
    for (const auto& c : cases) report.results.push_back(run_gradcheck(c, seed, c.name == corrupt ? 1.05 : 1.0));
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace rdnet
