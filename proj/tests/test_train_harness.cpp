#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "panet/data/synthetic.hpp"
#include "panet/io/archive.hpp"
#include "panet/train/summarize.hpp"
#include "panet/train/trainer.hpp"
#include "test_helpers.hpp"

using namespace panet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("panet_harness_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// Small 2D config over in-memory synthetic cases.
TrainConfig tiny_config(const TempDir& dir, int64_t size = 32, int64_t epochs = 2) {
    TrainConfig cfg = default_config("covid-2d");
    cfg.epochs = epochs;
    cfg.batch_size = 2;
    cfg.seed = 5;
    cfg.checkpoint_dir = (dir.path / "ckpt").string();
    cfg.log_path = (dir.path / "train_log.jsonl").string();
    cfg.data.augment = AugmentPolicy::identity("covid-2d");
    cfg.data.augment.crop_2d = size;
    cfg.inference.patch = {size, size};
    return cfg;
}

}  // namespace

TEST_CASE("cosine schedule matches the closed form at every step") {
    const double lr0 = 1e-4;
    const int64_t total = 160;
    CHECK(cosine_lr(lr0, 0, total) == doctest::Approx(lr0).epsilon(1e-12));
    for (int64_t t = 0; t < total; ++t) {
        const double expect = lr0 * 0.5 * (1.0 + std::cos(M_PI * double(t) / double(total)));
        CHECK(std::abs(cosine_lr(lr0, t, total) - expect) < 1e-10);
    }
    CHECK(cosine_lr(lr0, total, total) == doctest::Approx(0.0).epsilon(1e-16));
}

TEST_CASE("adamw: frozen probe decays geometrically; wd=0 leaves it untouched") {
    for (const double wd : {0.0, 1e-2}) {
        auto probe = parameter(FTensor({1}, 2.0f));
        auto used = parameter(FTensor({1}, 1.0f));
        AdamConfig cfg;
        cfg.lr = 1e-3;
        cfg.weight_decay = wd;
        AdamW opt({{"probe", probe}, {"used", used}}, cfg);
        float expect = 2.0f;
        for (int step = 0; step < 5; ++step) {
            opt.zero_grad();
            // only `used` receives a gradient
            auto l = ops::sum_all(ops::mul(used, used));
            backward(l);
            const double lr = cosine_lr(cfg.lr, step, 5);
            opt.step(lr);
            expect = expect * (1.0f - static_cast<float>(lr * wd));
            CHECK(probe->value[0] == expect);  // exact, including wd = 0
        }
        if (wd == 0.0) CHECK(probe->value[0] == 2.0f);
    }
}

TEST_CASE("adam moments follow the textbook update") {
    auto p = parameter(FTensor({1}, 1.0f));
    AdamConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    AdamW opt({{"p", p}}, cfg);
    opt.zero_grad();
    ensure_grad(p)[0] = 0.5f;  // inject a gradient directly
    opt.step(cfg.lr);
    const double m = 0.1 * 0.5, v = 0.001 * 0.25;
    const double mhat = m / (1 - 0.9), vhat = v / (1 - 0.999);
    const double expect = 1.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(p->value[0] == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("loss scaler: growth and backoff") {
    auto p = parameter(FTensor({2}, 1.0f));
    AdamConfig cfg;
    AdamW opt({{"p", p}}, cfg);
    LossScaler scaler;
    scaler.enabled = true;
    scaler.scale = 1024.0;
    scaler.growth_interval = 2;

    ensure_grad(p)[0] = 2048.0f;  // simulates a scaled gradient
    CHECK(scaler.unscale_and_check(opt));
    CHECK(p->grad[0] == doctest::Approx(2.0f));
    CHECK(scaler.scale == 1024.0);

    opt.zero_grad();
    ensure_grad(p)[0] = std::numeric_limits<float>::infinity();
    CHECK_FALSE(scaler.unscale_and_check(opt));
    CHECK(scaler.scale == 512.0);
    CHECK(scaler.good_steps == 0);

    opt.zero_grad();
    ensure_grad(p)[0] = 1.0f;
    CHECK(scaler.unscale_and_check(opt));
    opt.zero_grad();
    ensure_grad(p)[0] = 1.0f;
    CHECK(scaler.unscale_and_check(opt));
    CHECK(scaler.scale == 1024.0);  // grew after 2 clean steps
}

TEST_CASE("training: loss curve, log format, alpha moves, checkpoint round trip") {
    TempDir dir("train");
    TrainConfig cfg = tiny_config(dir);
    const auto cases = make_synthetic_2d(4, 32, 3);
    const CaseSource train = memory_source(cases);
    const CaseSource val = memory_source({cases[0], cases[1]});

    const TrainResult result = run_training(cfg, train, val, "");
    CHECK(result.steps == 4);  // 4 cases, batch 2, 2 epochs
    CHECK(result.loss_curve.size() == 4);
    for (double v : result.loss_curve) CHECK(std::isfinite(v));
    CHECK(result.lr_curve[0] == doctest::Approx(cfg.optimizer.lr));
    CHECK(fs::exists(result.best_path));
    CHECK(fs::exists(result.last_path));

    // one JSONL record per step plus one per epoch, with lr and all terms
    std::ifstream log(cfg.log_path);
    std::string line;
    int step_records = 0, epoch_records = 0;
    while (std::getline(log, line)) {
        const auto j = nlohmann::json::parse(line);
        if (j.contains("step")) {
            ++step_records;
            CHECK(j.contains("lr"));
            CHECK(j.contains("total"));
            CHECK(j.at("terms").size() == 5);  // main + 3 aux + intermediate
        } else {
            ++epoch_records;
            CHECK(j.contains("val_dice"));
        }
    }
    CHECK(step_records == 4);
    CHECK(epoch_records == 2);

    // alpha values moved away from their init after optimization
    const Checkpoint ck = load_checkpoint(result.last_path);
    REQUIRE(ck.alpha.size() == 5);
    bool moved = false;
    for (const auto& [name, v] : ck.alpha) moved |= v != 1.0;
    CHECK(moved);
    CHECK(ck.seed == cfg.seed);
    CHECK(ck.epoch == cfg.epochs - 1);

    // checkpoint round trip: reload and re-evaluate bit-identically
    auto m1 = model_from_checkpoint(cfg, result.last_path);
    auto m2 = model_from_checkpoint(cfg, result.last_path);
    const auto p1 = make_model_predictor(m1, cfg);
    const auto p2 = make_model_predictor(m2, cfg);
    const auto r1 = evaluate_cases(p1, val, EvalSpec::Covid2d);
    const auto r2 = evaluate_cases(p2, val, EvalSpec::Covid2d);
    for (const auto& [id, rec] : r1.per_case)
        for (const auto& [cls, m] : rec.per_class) {
            CHECK(m.dice == r2.per_case.at(id).per_class.at(cls).dice);
            CHECK(m.hd95 == r2.per_case.at(id).per_class.at(cls).hd95);
        }

    // save -> load -> save produces identical model bytes
    const Checkpoint again = load_checkpoint(result.last_path);
    for (const auto& [name, t] : ck.model_state) {
        const FTensor& o = again.model_state.at(name);
        for (int64_t i = 0; i < t.numel(); ++i) CHECK(t[i] == o[i]);
    }
}

TEST_CASE("training aborts with a diagnostic on non-finite loss") {
    TempDir dir("nan");
    TrainConfig cfg = tiny_config(dir);
    auto cases = make_synthetic_2d(2, 32, 4);
    cases[1].image[5] = std::numeric_limits<float>::quiet_NaN();
    cases[1].id = "poisoned";
    const CaseSource train = memory_source(cases);
    CHECK_THROWS_WITH_AS(run_training(cfg, train, CaseSource{{}, nullptr}, ""), doctest::Contains("poisoned"),
                         NumericError);
}

TEST_CASE("resume restores optimizer state and epoch counter") {
    TempDir dir("resume");
    TrainConfig cfg = tiny_config(dir, 32, 1);
    const auto cases = make_synthetic_2d(4, 32, 5);
    const CaseSource train = memory_source(cases);
    const CaseSource val = memory_source({cases[0]});
    const TrainResult first = run_training(cfg, train, val, "");
    TrainConfig cfg2 = cfg;
    cfg2.epochs = 2;
    const TrainResult resumed = run_training(cfg2, train, val, first.last_path);
    CHECK(resumed.steps == 4);  // two epochs of two steps, continued from step 2
    CHECK(resumed.loss_curve.size() == 2);
}

TEST_CASE("summarize: parameter counts, MAC monotonicity, alphas") {
    NetworkConfig cfg;
    cfg.encoder.dimensionality = 2;
    cfg.encoder.in_channels = 1;
    cfg.num_classes = 3;
    auto model = build_model<float>(cfg);
    model->initialize(1);
    const auto sum = summarize_model(*model, {64, 64});
    CHECK(sum.params == model->parameter_count());
    CHECK(sum.macs > 0);
    CHECK(sum.flops == doctest::Approx(2.0 * sum.macs));
    CHECK(sum.alphas == std::vector<double>{1, 1, 1, 1, 1});

    // doubling decoder widths strictly increases parameters and MACs
    NetworkConfig wide = cfg;
    wide.decoder_channels = {576, 288, 192, 96};
    auto model2 = build_model<float>(wide);
    model2->initialize(1);
    const auto sum2 = summarize_model(*model2, {64, 64});
    CHECK(sum2.params > sum.params);
    CHECK(sum2.macs > sum.macs);

    // MACs scale with input size
    const auto sum_big = summarize_model(*model, {128, 128});
    CHECK(sum_big.macs > 3.9 * sum.macs);
    CHECK(sum_big.macs < 4.1 * sum.macs);
    CHECK_FALSE(format_summary(sum, "panet").empty());
}

TEST_CASE("mixed precision: quantized conv path stays close to full precision") {
    NetworkConfig cfg;
    cfg.encoder.dimensionality = 2;
    cfg.encoder.in_channels = 1;
    cfg.num_classes = 3;
    auto model = build_model<float>(cfg);
    initialize_model(*model, 8);
    model->set_training(false);
    Rng rng(9);
    const auto x = panet::testing::random_tensor<float>({1, 1, 32, 32}, rng, 0.0, 1.0);
    NoGradGuard ng;
    const auto full = model->forward(constant(x.clone()));
    FTensor half_out;
    {
        HalfSimGuard guard(true);
        const auto half = model->forward(constant(x.clone()));
        half_out = half.main_logits->value;
    }
    double max_diff = 0, scale = 0;
    for (int64_t i = 0; i < half_out.numel(); ++i) {
        max_diff = std::max(max_diff, std::abs(double(half_out[i]) - full.main_logits->value[i]));
        scale = std::max(scale, std::abs(double(full.main_logits->value[i])));
    }
    CHECK(max_diff > 0.0);          // the flag genuinely changes the numerics
    CHECK(max_diff < 0.05 * scale + 0.05);  // but only at half-precision magnitude
}

TEST_CASE("ablation helpers: row flags and config application") {
    const auto rows = parse_ablation_rows("no1,no2,no3,no4");
    REQUIRE(rows.size() == 4);
    CHECK_FALSE(rows[0].deep_supervision);
    CHECK_FALSE(rows[0].agd);
    CHECK(rows[1].deep_supervision);
    CHECK_FALSE(rows[1].agd);
    CHECK(rows[2].agd);
    CHECK_FALSE(rows[2].intermediate_supervision);
    CHECK(rows[3].intermediate_supervision);
    CHECK(rows[3].name == "no4_full_panet");
    CHECK_THROWS_AS(ablation_row("no5"), ConfigError);

    NetworkConfig base;
    base.encoder.dimensionality = 2;
    const NetworkConfig no1 = apply_ablation(base, rows[0]);
    CHECK_FALSE(no1.agd);
    CHECK_FALSE(no1.deep_supervision);
    CHECK_FALSE(no1.intermediate_supervision);
}

TEST_CASE("train config: json round trip, defaults and validation") {
    TrainConfig cfg = default_config("brats-3d");
    CHECK(cfg.loss.multiclass_loss == MulticlassLossKind::DiceCE);
    CHECK(cfg.network.output_mode == OutputMode::SigmoidRegions);
    CHECK(cfg.network.encoder.blocks_per_stage == 3);
    CHECK(cfg.batch_size == 1);

    cfg.optimizer.lr = 3e-4;
    cfg.network.decoder_channels = {96, 48, 24, 12};
    const nlohmann::json j = train_config_to_json(cfg);
    const TrainConfig back = train_config_from_json(j);
    CHECK(back.optimizer.lr == 3e-4);
    CHECK(back.network.decoder_channels == std::vector<int64_t>{96, 48, 24, 12});
    CHECK(back.task == "brats-3d");

    nlohmann::json bad = j;
    bad["optimizer"]["lr"] = -1.0;
    CHECK_THROWS_AS(train_config_from_json(bad), ConfigError);
    nlohmann::json bad2 = j;
    bad2["network"]["intermediate_supervision"] = true;
    bad2["network"]["agd"] = false;
    CHECK_THROWS_AS(train_config_from_json(bad2), ConfigError);
}

TEST_CASE("predictor writes masks, overlays and a timing log") {
    TempDir dir("predict");
    const auto cases = make_synthetic_2d(2, 32, 11);
    CasePredictor oracle = [](const SegCase& c) { return c.labels.clone(); };
    const int written = predict_and_write(oracle, memory_source(cases), "covid-2d", (dir.path / "out").string());
    CHECK(written == 2);
    CHECK(fs::exists(dir.path / "out" / "synth2d_0_pred.pgm"));
    CHECK(fs::exists(dir.path / "out" / "synth2d_0_overlay.ppm"));
    CHECK(fs::exists(dir.path / "out" / "timing.log"));

    // oracle predictor gives all-1.0 Dice through the evaluate path
    const MetricReport report = evaluate_cases(oracle, memory_source(cases), EvalSpec::Covid2d);
    for (const auto& [id, rec] : report.per_case)
        for (const auto& [cls, m] : rec.per_class) CHECK(m.dice == 1.0);
    CHECK(mean_foreground_dice(report) == 1.0);

    // 3D output path incl. nifti mask + per-modality overlays
    const auto cases3 = make_synthetic_3d(1, {16, 16, 16}, 12);
    const int written3 = predict_and_write(oracle, memory_source(cases3), "brats-3d", (dir.path / "out3").string());
    CHECK(written3 == 1);
    CHECK(fs::exists(dir.path / "out3" / "synth3d_0_pred.nii.gz"));
    CHECK(fs::exists(dir.path / "out3" / "synth3d_0_mod0_overlay.ppm"));
    const NiftiVolume wrote = read_nifti((dir.path / "out3" / "synth3d_0_pred.nii.gz").string());
    for (int64_t i = 0; i < wrote.data.numel(); ++i)
        CHECK(static_cast<uint8_t>(wrote.data[i]) == cases3[0].labels[i]);
}
