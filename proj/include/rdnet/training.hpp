#pragma once

// Toy training loop. Batches draw from a per-epoch permutation and
// augmentations are seeded by (seed, step, slot), so the sample stream is a
// pure function of the step index and a resumed run continues exactly where
// the original would have been.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rdnet/checkpoint.hpp"
#include "rdnet/dataset.hpp"
#include "rdnet/model.hpp"
#include "rdnet/run_config.hpp"

namespace rdnet {

inline constexpr std::uint64_t kEpochStream = 0xe90c;
inline constexpr std::uint64_t kAugmentStream = 0xa06;

/// Dataset indices for one step.
inline std::vector<std::size_t> batch_indices(std::size_t dataset_size, std::size_t batch, std::uint64_t step,
                                              std::uint64_t seed) {
    if (dataset_size == 0) throw ArgumentError("batch_indices: empty dataset");
    std::vector<std::size_t> out;
    out.reserve(batch);
    std::vector<std::size_t> perm;
    std::uint64_t perm_epoch = ~0ULL;
    for (std::size_t k = 0; k < batch; ++k) {
        const std::uint64_t pos = step * batch + k;
        const std::uint64_t epoch = pos / dataset_size;
        if (epoch != perm_epoch) {
            perm.resize(dataset_size);
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            Rng rng(mix_seed(mix_seed(seed, kEpochStream), epoch));
            for (std::size_t i = dataset_size; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
            perm_epoch = epoch;
        }
        out.push_back(perm[pos % dataset_size]);
    }
    return out;
}

inline std::pair<Tensor, Tensor> training_batch(const std::vector<Sample>& data, std::size_t batch, std::uint64_t step,
                                                std::uint64_t seed, bool with_augment) {
    std::vector<Sample> picked;
    const auto idx = batch_indices(data.size(), batch, step, seed);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (with_augment) {
            Rng rng(mix_seed(mix_seed(mix_seed(seed, kAugmentStream), step), k));
            picked.push_back(augment(data[idx[k]], rng));
        } else {
            picked.push_back(data[idx[k]]);
        }
    }
    return make_batch(picked);
}

struct TrainOptions {
    std::size_t steps = 300;
    std::size_t batch = 4;
    std::uint64_t seed = 7;
    bool augment = true;
    RmspropConfig optim{};
    LossOptions loss{};
};

inline TrainOptions train_options(const RunConfig& cfg) {
    return {cfg.steps, cfg.model.batch, cfg.model.seed, cfg.augment, cfg.optim, cfg.loss};
}

/// Runs steps [start, opt.steps). `on_step(step, report)` sees 1-based steps.
inline std::vector<LossReport> train(Rdnet& model, const std::vector<Sample>& data, const TrainOptions& opt,
                                     std::uint64_t start = 0,
                                     const std::function<void(std::uint64_t, const LossReport&)>& on_step = {}) {
    std::vector<LossReport> log;
    for (std::uint64_t step = start; step < opt.steps; ++step) {
        const auto [images, gts] = training_batch(data, opt.batch, step, opt.seed, opt.augment);
        const LossReport r = train_step(model, images, gts, opt.optim, opt.loss);
        log.push_back(r);
        if (on_step) on_step(step + 1, r);
    }
    return log;
}

struct EvalSummary {
    double mae = 0.0;     // mean per-image MAE
    double pg_mse = 0.0;  // proportion head vs mask fraction
};

/// Inference-mode evaluation with the model's own gating.
inline EvalSummary evaluate_model(const Rdnet& model, const std::vector<Sample>& data) {
    if (data.empty()) throw ArgumentError("evaluate_model: empty dataset");
    NoGradGuard no_grad;
    EvalSummary out;
    for (const Sample& s : data) {
        const auto [image, gt] = make_batch({s});
        const SaliencyOutput pred = model.forward(image);
        double err = 0.0;
        for (std::size_t i = 0; i < gt.numel(); ++i) err += std::abs(pred.s.data()[i] - gt.data()[i]);
        out.mae += err / static_cast<double>(gt.numel());
        const double d = pred.f_g.item() - s.proportion;
        out.pg_mse += d * d;
    }
    out.mae /= static_cast<double>(data.size());
    out.pg_mse /= static_cast<double>(data.size());
    return out;
}

inline constexpr const char* kLossCsvHeader = "step,bce,iou,fm,mse,total";

inline std::string loss_csv_row(std::uint64_t step, const LossReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,%.17g,%.17g", static_cast<unsigned long long>(step), r.bce,
                  r.iou, r.fm, r.mse, r.total);
    return buf;
}

inline std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, std::uint64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "step_%06llu.ckpt", static_cast<unsigned long long>(step));
    return out_dir / buf;
}

namespace training_detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f << text;
    if (!f) throw IoError("failed writing '" + path.string() + "'");
}

// Loss rows already on disk for steps <= keep, when resuming into the same
// directory.
inline std::vector<std::string> kept_rows(const std::filesystem::path& csv, std::uint64_t keep) {
    std::vector<std::string> rows;
    std::ifstream f(csv);
    if (!f) return rows;
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto step = std::stoull(line.substr(0, line.find(',')));
        if (step <= keep) rows.push_back(line);
    }
    return rows;
}

}  // namespace training_detail

struct ToyRunResult {
    std::uint64_t start_step = 0;
    std::vector<LossReport> log;  // this invocation only
    EvalSummary eval;
};

/// Full toy run: config echo, loss CSV, periodic and final checkpoints,
/// final evaluation. Files in out_dir hold no timestamps except run_info.txt.
inline ToyRunResult run_toy_training(const RunConfig& cfg, std::ostream& log_out) {
    using training_detail::write_text;
    const std::vector<Sample> data = load_dataset(cfg.data_dir);
    for (const Sample& s : data)
        if (s.size != cfg.model.input_size)
            throw ConfigError("dataset '" + cfg.data_dir.string() + "' has " + std::to_string(s.size) + "px images but " +
                              "model.input_size is " + std::to_string(cfg.model.input_size));

    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create directory '" + cfg.out_dir.string() + "': " + ec.message());

    Rdnet model(cfg.model);
    ToyRunResult result;
    if (!cfg.resume.empty()) {
        result.start_step = load_checkpoint(cfg.resume, model);
        if (result.start_step > cfg.steps)
            throw ConfigError("train.resume: checkpoint is at step " + std::to_string(result.start_step) +
                              ", beyond steps = " + std::to_string(cfg.steps));
        log_out << "resumed from " << cfg.resume.string() << " at step " << result.start_step << "\n";
    }

    write_text(cfg.out_dir / "config.resolved", cfg.to_text());
    {
        std::ostringstream info;
        const auto now = std::chrono::system_clock::now();
        info << "started_unix_seconds = "
             << std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count() << "\n"
             << "dataset_samples = " << data.size() << "\n"
             << "parameters = " << model.params().scalar_count() << "\n"
             << "fingerprint = " << fingerprint(cfg.model) << "\n"
             << "start_step = " << result.start_step << "\n";
        write_text(cfg.out_dir / "run_info.txt", info.str());
    }

    const auto csv_path = cfg.out_dir / "losses.csv";
    const std::vector<std::string> kept =
        result.start_step > 0 ? training_detail::kept_rows(csv_path, result.start_step) : std::vector<std::string>{};
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw IoError("cannot write '" + csv_path.string() + "'");
    csv << kLossCsvHeader << "\n";
    for (const auto& row : kept) csv << row << "\n";

    const TrainOptions opt = train_options(cfg);
    result.log = train(model, data, opt, result.start_step, [&](std::uint64_t step, const LossReport& r) {
        csv << loss_csv_row(step, r) << "\n";
        if (!csv) throw IoError("failed writing '" + csv_path.string() + "'");
        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
            csv.flush();
            save_checkpoint(checkpoint_path(cfg.out_dir, step), model, step);
        }
        if (step == 1 || step % 25 == 0 || step == opt.steps)
            log_out << "step " << step << "/" << opt.steps << " total " << r.total << "\n";
    });
    csv.close();
    save_checkpoint(cfg.out_dir / "final.ckpt", model, opt.steps);

    result.eval = evaluate_model(model, data);
    char buf[128];
    std::snprintf(buf, sizeof buf, "train_mae = %.17g\npg_mse = %.17g\n", result.eval.mae, result.eval.pg_mse);
    write_text(cfg.out_dir / "final_metrics.txt", buf);
    log_out << "train MAE " << result.eval.mae << ", PG MSE " << result.eval.pg_mse << "\n";
    return result;
}

}  // namespace rdnet
