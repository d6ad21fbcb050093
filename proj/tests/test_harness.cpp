#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

#include "oracles.hpp"
#include "rdnet/commands.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace rdnet;

namespace {

const char* kTinyModel =
    "model.input_size = 32\n"
    "model.batch = 2\n"
    "model.channels = 4,4,4,4,4\n"
    "fce.common_channels = 4\n"
    "rpl.reduction_ratio = 2\n"
    "pg.hidden = 4\n"
    "optim.lr = 0.001\n";

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

void write_gray(const fs::path& p, std::size_t h, std::size_t w, const std::vector<std::uint8_t>& px) {
    io::write_png(p, io::Image8{w, h, 1, px});
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
    const RunConfig cfg = parse_run_config("");
    EXPECT_EQ(cfg.steps, 300u);
    EXPECT_EQ(cfg.model.input_size, 64u);
    EXPECT_DOUBLE_EQ(cfg.optim.lr, 1e-5);
    const RunConfig again = parse_run_config(cfg.to_text());
    EXPECT_EQ(again.to_text(), cfg.to_text());
}

TEST(Config, ParsesEveryKindOfValue) {
    const RunConfig cfg = parse_run_config(std::string(kTinyModel) +
                                           "# comment\nsteps = 12  # trailing\nrpl.cross_gating = true\n"
                                           "dad.train_gate = predicted\nbins.lo = 0.2\ntrain.augment = false\n");
    EXPECT_EQ(cfg.steps, 12u);
    EXPECT_EQ(cfg.model.channels, (std::array<std::size_t, 5>{4, 4, 4, 4, 4}));
    EXPECT_TRUE(cfg.model.cross_gating);
    EXPECT_EQ(cfg.model.train_gate, TrainGate::Predicted);
    EXPECT_DOUBLE_EQ(cfg.model.bins.lo, 0.2);
    EXPECT_FALSE(cfg.augment);
    EXPECT_EQ(parse_run_config(cfg.to_text()).to_text(), cfg.to_text());
}

TEST(Config, ErrorsNameTheLine) {
    auto message = [](const std::string& text) {
        try {
            parse_run_config(text, "x.cfg");
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_NE(message("steps = 3\nmodel.widht = 2\n").find("x.cfg:2"), std::string::npos);
    EXPECT_NE(message("steps = 3\nsteps = 4\n").find("duplicate"), std::string::npos);
    EXPECT_NE(message("steps = -3\n").find("steps"), std::string::npos);
    EXPECT_NE(message("steps\n").find("x.cfg:1"), std::string::npos);
    EXPECT_NE(message("model.channels = 1,2,3\n").find("model.channels"), std::string::npos);
    EXPECT_NE(message("dad.train_gate = maybe\n").find("dad.train_gate"), std::string::npos);
    EXPECT_NE(message("model.input_size = 40\n").find("input_size"), std::string::npos);
}

TEST(Checkpoint, RoundTripRestoresParametersAndOptimizer) {
    testutil::TempDir dir("ckpt");
    const RunConfig cfg = parse_run_config(kTinyModel);
    Rdnet a(cfg.model);
    const std::vector<Sample> data{synth_sample(0, 32, 1), synth_sample(1, 32, 1)};
    const auto [images, gts] = make_batch(data);
    train_step(a, images, gts, cfg.optim);
    save_checkpoint(dir / "a.ckpt", a, 1);

    ModelConfig other = cfg.model;
    other.seed = 99;
    Rdnet b(other);
    EXPECT_EQ(load_checkpoint(dir / "a.ckpt", b), 1u);
    const auto& ea = a.params().entries();
    const auto& eb = b.params().entries();
    ASSERT_EQ(ea.size(), eb.size());
    for (std::size_t i = 0; i < ea.size(); ++i) {
        EXPECT_TRUE(testutil::bitwise_equal(ea[i].value, eb[i].value)) << ea[i].name;
        EXPECT_EQ(ea[i].square_avg, eb[i].square_avg) << ea[i].name;
        EXPECT_EQ(ea[i].momentum, eb[i].momentum) << ea[i].name;
    }
    // identical state means identical next steps
    EXPECT_EQ(train_step(a, images, gts, cfg.optim).total, train_step(b, images, gts, cfg.optim).total);
}

TEST(Checkpoint, RefusesOtherArchitectures) {
    testutil::TempDir dir("ckpt_arch");
    const RunConfig cfg = parse_run_config(kTinyModel);
    Rdnet a(cfg.model);
    save_checkpoint(dir / "a.ckpt", a, 5);
    ModelConfig wider = cfg.model;
    wider.pg_hidden = 8;
    Rdnet b(wider);
    const Tensor before = b.params().get("pg.fc1.weight").detach();
    EXPECT_THROW(load_checkpoint(dir / "a.ckpt", b), ValidationError);
    EXPECT_TRUE(testutil::bitwise_equal(before, b.params().get("pg.fc1.weight")));
    EXPECT_NE(fingerprint(cfg.model), fingerprint(wider));
}

TEST(Checkpoint, RejectsCorruptFiles) {
    testutil::TempDir dir("ckpt_bad");
    Rdnet a(parse_run_config(kTinyModel).model);
    write_file(dir / "junk.ckpt", "not a checkpoint");
    EXPECT_ANY_THROW(load_checkpoint(dir / "junk.ckpt", a));
    save_checkpoint(dir / "a.ckpt", a, 2);
    const std::string bytes = testutil::slurp(dir / "a.ckpt");
    write_file(dir / "cut.ckpt", bytes.substr(0, bytes.size() / 2));
    EXPECT_ANY_THROW(load_checkpoint(dir / "cut.ckpt", a));
    EXPECT_THROW(load_checkpoint(dir / "absent.ckpt", a), IoError);
}

TEST(GenData, WritesConsistentIndex) {
    testutil::TempDir dir("gen");
    std::ostringstream out, err;
    ASSERT_EQ(cmd_gen_data(dir.path(), 9, 32, 4, out, err), kExitOk);
    const std::vector<Sample> data = load_dataset(dir.path());
    ASSERT_EQ(data.size(), 9u);
    const auto rows = lines(testutil::slurp(dir / "index.csv"));
    ASSERT_EQ(rows.size(), 10u);
    int bins[3] = {0, 0, 0};
    for (std::size_t i = 0; i < 9; ++i) {
        const double listed = std::stod(rows[i + 1].substr(rows[i + 1].find(',') + 1));
        EXPECT_NEAR(listed, data[i].proportion, 1.0 / (32.0 * 32.0));
        ++bins[static_cast<int>(bin_proportion(data[i].proportion))];
        EXPECT_EQ(data[i].size, 32u);
    }
    for (int b : bins) EXPECT_EQ(b, 3);
}

TEST(GenData, IsDeterministic) {
    testutil::TempDir a("gen_a"), b("gen_b");
    std::ostringstream out, err;
    cmd_gen_data(a.path(), 3, 32, 8, out, err);
    cmd_gen_data(b.path(), 3, 32, 8, out, err);
    for (const char* f : {"index.csv", "image_0002.png", "mask_0001.png"})
        EXPECT_EQ(testutil::slurp(a / f), testutil::slurp(b / f)) << f;
    EXPECT_EQ(cmd_gen_data(a / "odd", 3, 30, 8, out, err), kExitValidation);
}

TEST(Dataset, AugmentKeepsImageAndMaskAligned) {
    const Sample s = synth_sample(4, 32, 2);
    Rng rng(3);
    for (int i = 0; i < 10; ++i) {
        const Sample a = augment(s, rng);
        ASSERT_EQ(a.size, 32u);
        // the synthetic object is brighter than its background in every channel
        double in = 0, out = 0, n_in = 0, n_out = 0;
        for (std::size_t p = 0; p < 32 * 32; ++p) {
            EXPECT_TRUE(a.mask[p] == 0.0 || a.mask[p] == 1.0);
            (a.mask[p] > 0.5 ? in : out) += a.image[p];
            (a.mask[p] > 0.5 ? n_in : n_out) += 1;
        }
        if (n_in > 0 && n_out > 0) {
            EXPECT_GT(in / n_in, out / n_out);
        }
        EXPECT_EQ(a.proportion, dataset_detail::mask_fraction(a.mask));
    }
}

TEST(TrainToy, WritesArtifactsAndResumesExactly) {
    testutil::TempDir dir("train");
    std::ostringstream out, err;
    ASSERT_EQ(cmd_gen_data(dir / "data", 6, 32, 5, out, err), kExitOk);
    const std::string base = std::string(kTinyModel) + "steps = 6\ntrain.checkpoint_every = 3\ndata_dir = " +
                             (dir / "data").string() + "\n";
    write_file(dir / "run.cfg", base + "out_dir = " + (dir / "a").string() + "\n");
    ASSERT_EQ(cmd_train_toy(dir / "run.cfg", {}, out, err), kExitOk) << err.str();

    const auto csv = lines(testutil::slurp(dir / "a" / "losses.csv"));
    ASSERT_EQ(csv.size(), 7u);
    EXPECT_EQ(csv[0], kLossCsvHeader);
    for (const char* f : {"config.resolved", "run_info.txt", "final_metrics.txt", "final.ckpt", "step_000003.ckpt",
                          "step_000006.ckpt"})
        EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;

    // resume from step 3 in a copy of the run directory
    fs::copy(dir / "a", dir / "b");
    write_file(dir / "resume.cfg", base + "out_dir = " + (dir / "b").string() +
                                       "\ntrain.resume = " + (dir / "b" / "step_000003.ckpt").string() + "\n");
    ASSERT_EQ(cmd_train_toy(dir / "resume.cfg", {}, out, err), kExitOk) << err.str();
    EXPECT_EQ(testutil::slurp(dir / "a" / "losses.csv"), testutil::slurp(dir / "b" / "losses.csv"));
    EXPECT_EQ(testutil::slurp(dir / "a" / "final.ckpt"), testutil::slurp(dir / "b" / "final.ckpt"));
    EXPECT_EQ(testutil::slurp(dir / "a" / "final_metrics.txt"), testutil::slurp(dir / "b" / "final_metrics.txt"));

    // --out overrides the config
    ASSERT_EQ(cmd_train_toy(dir / "run.cfg", dir / "c", out, err), kExitOk);
    EXPECT_EQ(testutil::slurp(dir / "a" / "losses.csv"), testutil::slurp(dir / "c" / "losses.csv"));
}

TEST(TrainToy, ReportsBadInputs) {
    testutil::TempDir dir("train_bad");
    std::ostringstream out, err;
    write_file(dir / "bad.cfg", "steps = 1\nbogus = 2\n");
    EXPECT_EQ(cmd_train_toy(dir / "bad.cfg", {}, out, err), kExitValidation);
    EXPECT_NE(err.str().find("bad.cfg:2"), std::string::npos);
    EXPECT_EQ(cmd_train_toy(dir / "missing.cfg", {}, out, err), kExitIo);
    write_file(dir / "nodata.cfg", std::string(kTinyModel) + "data_dir = " + (dir / "nowhere").string() + "\n");
    err.str("");
    EXPECT_EQ(cmd_train_toy(dir / "nodata.cfg", dir / "o", out, err), kExitIo);
    EXPECT_NE(err.str().find("nowhere"), std::string::npos);

    cmd_gen_data(dir / "data64", 2, 64, 1, out, err);
    write_file(dir / "size.cfg", std::string(kTinyModel) + "data_dir = " + (dir / "data64").string() + "\n");
    EXPECT_EQ(cmd_train_toy(dir / "size.cfg", dir / "o", out, err), kExitValidation);
}

namespace {

// Five 8×8 ground truths with different blobs plus matching predictions.
void write_eval_set(const testutil::TempDir& dir) {
    fs::create_directories(dir / "gt");
    fs::create_directories(dir / "pred");
    Rng rng(9);
    for (int i = 0; i < 5; ++i) {
        std::vector<std::uint8_t> gt(64, 0), pred(64);
        for (int r = i % 3; r < 4 + i % 3; ++r)
            for (int c = 1; c < 3 + i; ++c) gt[r * 8 + c] = 255;
        for (auto& v : pred) v = static_cast<std::uint8_t>(rng.index(256));
        const std::string name = "img" + std::to_string(i) + ".png";
        write_gray(dir / "gt" / name, 8, 8, gt);
        write_gray(dir / "pred" / name, 8, 8, pred);
    }
}

}  // namespace

TEST(Eval, SelfEvaluationIsPerfect) {
    testutil::TempDir dir("eval_self");
    write_eval_set(dir);
    std::ostringstream out, err;
    ASSERT_EQ(cmd_eval(dir / "gt", dir / "gt", dir / "m.csv", ThresholdMode::Max, {}, out, err), kExitOk);
    const auto rows = lines(testutil::slurp(dir / "m.csv"));
    ASSERT_EQ(rows.size(), 7u);
    EXPECT_EQ(rows[0], "name,mae,fbeta_max,fbeta_adaptive,emeasure,smeasure");
    EXPECT_EQ(rows[6].substr(0, 5), "mean,");
    std::istringstream mean(rows[6].substr(5));
    double v[5];
    char comma;
    mean >> v[0] >> comma >> v[1] >> comma >> v[2] >> comma >> v[3] >> comma >> v[4];
    EXPECT_NEAR(v[0], 0.0, 1e-6);
    EXPECT_NEAR(v[1], 1.0, 1e-6);
    EXPECT_NEAR(v[3], 1.0, 1e-6);
    EXPECT_NEAR(v[4], 1.0, 1e-6);
}

TEST(Eval, MatchesOraclesPerImage) {
    testutil::TempDir dir("eval_oracle");
    write_eval_set(dir);
    std::ostringstream out, err;
    ASSERT_EQ(cmd_eval(dir / "pred", dir / "gt", dir / "m.csv", ThresholdMode::Adaptive, dir / "curve.csv", out, err),
              kExitOk);
    const auto rows = lines(testutil::slurp(dir / "m.csv"));
    for (int i = 0; i < 5; ++i) {
        const std::string name = "img" + std::to_string(i) + ".png";
        const io::Image8 g = io::read_gray(dir / "gt" / name), p = io::read_gray(dir / "pred" / name);
        std::vector<double> gv, pv;
        for (auto b : g.pixels) gv.push_back(b > 127 ? 1.0 : 0.0);
        for (auto b : p.pixels) pv.push_back(b / 255.0);
        const auto G = oracle::grid(8, 8, gv), P = oracle::grid(8, 8, pv);
        const auto curve = oracle::fbeta_curve(P, G);
        char expect[256];
        std::snprintf(expect, sizeof expect, "%s,%.10f,%.10f,", name.c_str(), oracle::mae(P, G),
                      *std::max_element(curve.begin(), curve.end()));
        EXPECT_EQ(rows[i + 1].substr(0, std::strlen(expect)), expect);
        std::snprintf(expect, sizeof expect, ",%.10f,%.10f", oracle::emeasure(P, G), oracle::smeasure(P, G));
        EXPECT_EQ(rows[i + 1].substr(rows[i + 1].size() - std::strlen(expect)), expect);
    }
    EXPECT_EQ(lines(testutil::slurp(dir / "curve.csv")).size(), 257u);
    EXPECT_NE(out.str().find("Fbeta(adaptive)"), std::string::npos);
}

TEST(Eval, InvertedPredictions) {
    testutil::TempDir dir("eval_inv");
    write_eval_set(dir);
    fs::create_directories(dir / "inv");
    double expected = 0;
    for (int i = 0; i < 5; ++i) {
        const std::string name = "img" + std::to_string(i) + ".png";
        io::Image8 g = io::read_gray(dir / "gt" / name);
        for (auto& b : g.pixels) b = static_cast<std::uint8_t>(255 - b);
        io::write_png(dir / "inv" / name, g);
        expected += 1.0 / 5.0;  // every pixel is wrong by exactly 1
    }
    std::ostringstream out, err;
    ASSERT_EQ(cmd_eval(dir / "inv", dir / "gt", dir / "m.csv", ThresholdMode::Max, {}, out, err), kExitOk);
    const auto rows = lines(testutil::slurp(dir / "m.csv"));
    EXPECT_NEAR(std::stod(rows[6].substr(5)), expected, 1e-9);
}

TEST(Eval, MissingPredictionIsSkippedAndReported) {
    testutil::TempDir dir("eval_missing");
    write_eval_set(dir);
    fs::remove(dir / "pred" / "img2.png");
    std::ostringstream out, err;
    EXPECT_EQ(cmd_eval(dir / "pred", dir / "gt", dir / "m.csv", ThresholdMode::Max, {}, out, err), kExitIo);
    EXPECT_NE(err.str().find("img2.png"), std::string::npos);
    EXPECT_EQ(lines(testutil::slurp(dir / "m.csv")).size(), 6u);  // header, 4 rows, mean
}

TEST(Eval, ResizesMismatchedPredictions) {
    testutil::TempDir dir("eval_resize");
    write_eval_set(dir);
    std::vector<std::uint8_t> big(16 * 16, 255);
    write_gray(dir / "pred" / "img0.png", 16, 16, big);
    std::ostringstream out, err;
    EXPECT_EQ(cmd_eval(dir / "pred", dir / "gt", dir / "m.csv", ThresholdMode::Max, {}, out, err), kExitOk);
    EXPECT_NE(err.str().find("resized"), std::string::npos);
}

TEST(Eval, NotesEmptyGroundTruth) {
    testutil::TempDir dir("eval_empty");
    write_eval_set(dir);
    write_gray(dir / "gt" / "img1.png", 8, 8, std::vector<std::uint8_t>(64, 0));
    std::ostringstream out, err;
    EXPECT_EQ(cmd_eval(dir / "pred", dir / "gt", dir / "m.csv", ThresholdMode::Max, {}, out, err), kExitOk);
    EXPECT_NE(err.str().find("img1.png has an empty ground truth"), std::string::npos);
    EXPECT_EQ(cmd_eval(dir / "nowhere", dir / "gt", dir / "m.csv", ThresholdMode::Max, {}, out, err), kExitIo);
}

TEST(Gradcheck, CorruptedGradientFails) {
    std::ostringstream out, err;
    EXPECT_EQ(cmd_gradcheck(3, "softmax", out, err), kExitValidation);
    EXPECT_NE(out.str().find("FAIL"), std::string::npos);
    EXPECT_EQ(cmd_gradcheck(3, "no_such_case", out, err), kExitValidation);
}

TEST(DwtRoundtrip, Command) {
    testutil::TempDir dir("dwt");
    std::vector<std::uint8_t> px(6 * 4);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(i * 10);
    write_gray(dir / "even.png", 6, 4, px);
    write_gray(dir / "odd.png", 4, 6 - 1, std::vector<std::uint8_t>(20, 7));
    std::ostringstream out, err;
    EXPECT_EQ(cmd_dwt_roundtrip(dir / "even.png", out, err), kExitOk);
    EXPECT_NE(out.str().find("max_abs_reconstruction_error"), std::string::npos);
    std::ostringstream out2;
    EXPECT_EQ(cmd_dwt_roundtrip(dir / "odd.png", out2, err), kExitValidation);
    EXPECT_TRUE(out2.str().empty());
    EXPECT_EQ(cmd_dwt_roundtrip(dir / "absent.png", out2, err), kExitIo);
}
