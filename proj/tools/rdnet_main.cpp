#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rdnet/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"rdnet: region-proportion saliency network toolkit"};
    app.require_subcommand(1);

    std::string out_dir;
    std::size_t count = 200, size = 64;
    std::uint64_t seed = 1;
    auto* gen = app.add_subcommand("gen-data", "render a synthetic image/mask dataset");
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--count", count, "number of pairs")->capture_default_str();
    gen->add_option("--size", size, "side length, a multiple of 32")->capture_default_str();
    gen->add_option("--seed", seed, "generator seed")->capture_default_str();

    std::string config, train_out;
    auto* train = app.add_subcommand("train-toy", "train on a generated dataset");
    train->add_option("--config", config, "key=value run configuration")->required();
    train->add_option("--out", train_out, "output directory (overrides out_dir)");

    std::string pred, gt, csv, curve, mode = "max";
    auto* eval = app.add_subcommand("eval", "score prediction maps against ground truth");
    eval->add_option("--pred", pred, "prediction directory")->required();
    eval->add_option("--gt", gt, "ground-truth directory")->required();
    eval->add_option("--out", csv, "per-image CSV report")->required();
    eval->add_option("--threshold-mode", mode, "headline F-measure")
        ->check(CLI::IsMember({"max", "adaptive"}))
        ->capture_default_str();
    eval->add_option("--curve", curve, "also write the mean F-measure curve");

    std::uint64_t gc_seed = 1;
    std::string corrupt;
    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    grad->add_option("--seed", gc_seed, "case seed")->capture_default_str();
    grad->add_option("--corrupt", corrupt, "perturb the analytic gradient of one case");

    std::string image;
    auto* dwt = app.add_subcommand("dwt-roundtrip", "Haar transform reconstruction check");
    dwt->add_option("--image", image, "even-sized grayscale png")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return rdnet::kExitValidation;
    }

    if (*gen) return rdnet::cmd_gen_data(out_dir, count, size, seed, std::cout, std::cerr);
    if (*train) return rdnet::cmd_train_toy(config, train_out, std::cout, std::cerr);
    if (*eval)
        return rdnet::cmd_eval(pred, gt, csv, mode == "max" ? rdnet::ThresholdMode::Max : rdnet::ThresholdMode::Adaptive,
                               curve, std::cout, std::cerr);
    if (*grad) return rdnet::cmd_gradcheck(gc_seed, corrupt, std::cout, std::cerr);
    return rdnet::cmd_dwt_roundtrip(image, std::cout, std::cerr);
}
