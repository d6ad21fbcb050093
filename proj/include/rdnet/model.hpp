#pragma once

// End-to-end network: a five-stage convolutional encoder stands in for the
// pretrained backbone; RPL, FCE and DAD refine levels {4,5}, {2,3} and {1};
// the decoder fuses their outputs from deep to shallow.

#include <array>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rdnet/dad.hpp"
#include "rdnet/fce.hpp"
#include "rdnet/losses.hpp"
#include "rdnet/rpl.hpp"

namespace rdnet {

enum class TrainGate { GroundTruth, Predicted };

struct ModelConfig {
    std::size_t input_size = 64;
    std::size_t batch = 4;
    std::array<std::size_t, 5> channels{8, 16, 16, 16, 16};
    std::size_t common_channels = 16;  // FCE width and decoder width
    std::size_t reduction_ratio = 4;
    bool cross_gating = false;
    std::size_t pg_hidden = 16;
    BinThresholds bins{};
    TrainGate train_gate = TrainGate::GroundTruth;
    std::uint64_t seed = 7;

    void validate() const {
        if (input_size == 0 || input_size % 32 != 0)
            throw ConfigError("input_size must be a positive multiple of 32, got " + std::to_string(input_size));
        if (batch == 0) throw ConfigError("batch must be positive");
        for (std::size_t c : channels)
            if (c == 0) throw ConfigError("model.channels entries must be positive");
        if (channels[3] != channels[4])
            throw ConfigError("model.channels: levels 4 and 5 must have equal width for RPL, got " +
                              std::to_string(channels[3]) + " and " + std::to_string(channels[4]));
        if (reduction_ratio == 0 || channels[3] % reduction_ratio != 0)
            throw ConfigError("rpl.reduction_ratio " + std::to_string(reduction_ratio) + " must divide level-4 width " +
                              std::to_string(channels[3]));
        if (common_channels == 0 || (2 * common_channels) % reduction_ratio != 0)
            throw ConfigError("fce.common_channels " + std::to_string(common_channels) +
                              " incompatible with reduction ratio " + std::to_string(reduction_ratio));
        if (pg_hidden == 0) throw ConfigError("pg.hidden must be positive");
        bins.validate();
    }

    /// Canonical description of everything that determines parameter shapes.
    std::string architecture() const {
        std::ostringstream os;
        os << "channels=" << channels[0];
        for (std::size_t i = 1; i < channels.size(); ++i) os << ',' << channels[i];
        os << ";common=" << common_channels << ";ratio=" << reduction_ratio << ";pg_hidden=" << pg_hidden;
        return os.str();
    }
};

struct FeaturePyramid {
    std::array<Tensor, 5> levels;  // strides 2, 4, 8, 16, 32

    const Tensor& operator[](std::size_t i) const { return levels[i]; }
};

struct Backbone {
    std::array<Conv2d, 5> stages;

    /// Each stage: 3×3 conv -> ReLU -> 2×2 average downsample.
    FeaturePyramid operator()(const Tensor& image) const {
        const Shape s = image.shape();
        if (s.h % 32 != 0 || s.w % 32 != 0)
            throw ConfigError("backbone: input size " + s.str() + " is not divisible by 32");
        FeaturePyramid p;
        Tensor x = image;
        for (std::size_t i = 0; i < stages.size(); ++i) {
            x = avg_pool2(relu(stages[i](x)));
            p.levels[i] = x;
        }
        return p;
    }
};

struct SaliencyOutput {
    Tensor s;    // (N,1,H,W), sigmoid range
    Tensor f_g;  // (N,1,1,1)
};

class Rdnet {
public:
    // Fixed input standardization applied before the backbone; images arrive
    // in [0,1].
    static constexpr double kInputMean = 0.45;
    static constexpr double kInputStd = 0.2;

    explicit Rdnet(const ModelConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(mix_seed(cfg_.seed, 0x5eed));
        const auto& ch = cfg_.channels;
        const std::size_t C = cfg_.common_channels;
        std::size_t in = 3;
        for (std::size_t i = 0; i < 5; ++i) {
            backbone_.stages[i] = make_conv(params_, "backbone.stage" + std::to_string(i + 1), in, ch[i], 3, rng);
            in = ch[i];
        }
        rpl_ = make_rpl(params_, "rpl", {ch[3], cfg_.reduction_ratio, cfg_.cross_gating, cfg_.pg_hidden}, rng);
        pg_ = make_proportion_guidance(params_, "pg", ch[4], cfg_.pg_hidden, rng);
        fce_ = make_fce(params_, "fce", {ch[1], ch[2], C, cfg_.reduction_ratio}, rng);
        dad_ = make_kernel_bank(params_, "dad", ch[0], rng);
        decode_context_ = make_conv(params_, "decoder.context", ch[3] + C, C, 3, rng);
        decode_detail_ = make_conv(params_, "decoder.detail", C + ch[0], C, 3, rng);
        head_ = make_conv(params_, "decoder.head", C, 1, 1, rng);
    }

    Rdnet(const Rdnet&) = delete;
    Rdnet& operator=(const Rdnet&) = delete;

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const Backbone& backbone() const { return backbone_; }

    /// Without gate_bins the DAD routing comes from the model's own proportion
    /// prediction.
    SaliencyOutput forward(const Tensor& image, std::optional<std::vector<ProportionBin>> gate_bins = {}) const {
        const Shape s = image.shape();
        if (s.c != 3) throw ShapeError("rdnet: image must have 3 channels, got " + s.str());
        const FeaturePyramid f = backbone_(scale(add_scalar(image, -kInputMean), 1.0 / kInputStd));
        SaliencyOutput out;
        out.f_g = pg_(f[4]);
        const std::vector<ProportionBin> bins = gate_bins ? *gate_bins : bin_proportions(out.f_g, cfg_.bins);
        const Tensor fa = rpl_(f[3], f[4]);
        const Tensor fw = fce_(f[1], f[2]);
        const Tensor fp = dad_forward(f[0], bins, dad_);

        const std::size_t up_a = fw.shape().h / fa.shape().h;
        const Tensor context = relu(decode_context_(concat_channels({upsample_nearest(fa, up_a), fw})));
        const Tensor detail = relu(decode_detail_(concat_channels({upsample_nearest(context, 2), fp})));
        out.s = upsample_nearest(sigmoid(head_(detail)), 2);
        return out;
    }

private:
    ModelConfig cfg_;
    ParamStore params_;
    Backbone backbone_;
    Rpl rpl_;
    ProportionGuidance pg_;
    Fce fce_;
    KernelBank dad_;
    Conv2d decode_context_;
    Conv2d decode_detail_;
    Conv2d head_;
};

/// Names the first non-finite value in the report, if any.
inline void require_finite(const LossReport& r) {
    const std::pair<const char*, double> terms[] = {
        {"bce", r.bce}, {"iou", r.iou}, {"fm", r.fm}, {"mse", r.mse}, {"total", r.total}};
    for (const auto& [name, v] : terms)
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss term '") + name + "'");
}

/// Forward with ground-truth (or predicted) gating, loss, backward, RMSprop.
inline LossReport train_step(Rdnet& model, const Tensor& images, const Tensor& gts, const RmspropConfig& optim,
                             const LossOptions& loss_opt = {}) {
    if (images.shape().n != gts.shape().n)
        throw ShapeError("train_step: " + images.shape().str() + " images vs " + gts.shape().str() + " masks");
    const Tensor target = region_proportion_target(gts);
    std::optional<std::vector<ProportionBin>> bins;
    if (model.config().train_gate == TrainGate::GroundTruth) bins = bin_proportions(target, model.config().bins);
    model.params().zero_grad();
    const SaliencyOutput out = model.forward(images, bins);
    const LossTerms loss = total_loss(out.s, gts, out.f_g, target, loss_opt);
    const LossReport report = loss.report();
    require_finite(report);
    loss.total.backward();
    rmsprop_step(model.params(), optim);
    model.params().zero_grad();
    return report;
}

}  // namespace rdnet
