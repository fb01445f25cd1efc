#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>

#include "doctest.h"
#include "panet/io/archive.hpp"
#include "panet/model/models.hpp"
#include "test_helpers.hpp"

using namespace panet;
using panet::testing::random_tensor;

namespace {

NetworkConfig cfg2d() {
    NetworkConfig cfg;
    cfg.encoder.dimensionality = 2;
    cfg.encoder.in_channels = 1;
    cfg.num_classes = 3;
    return cfg;
}

NetworkConfig cfg3d() {
    NetworkConfig cfg;
    cfg.encoder.dimensionality = 3;
    cfg.encoder.in_channels = 4;
    cfg.encoder.base_channels = 8;
    cfg.encoder.blocks_per_stage = 1;  // small for unit tests; budgets are checked in acceptance
    cfg.num_classes = 3;
    cfg.output_mode = OutputMode::SigmoidRegions;
    return cfg;
}

int64_t count_with_prefix(Module<float>& m, const std::string& prefix) {
    std::vector<std::pair<std::string, FVar>> ps;
    m.named_parameters(ps);
    int64_t total = 0;
    for (auto& [name, v] : ps)
        if (name.rfind(prefix, 0) == 0) total += v->value.numel();
    return total;
}

}  // namespace

TEST_CASE("2D encoder: pyramid strides and channels (ResNeXt-50 layout)") {
    auto enc = build_encoder<float>(cfg2d().encoder);
    enc->initialize(1);
    enc->set_training(false);
    NoGradGuard ng;
    auto pyr = enc->forward_pyramid(constant(FTensor({1, 1, 64, 64}, 0.1f)));
    REQUIRE(pyr.size() == 5);
    const std::vector<int64_t> channels{64, 256, 512, 1024, 2048};
    const std::vector<int64_t> strides{2, 4, 8, 16, 32};
    for (int i = 0; i < 5; ++i) {
        CHECK(pyr[i]->value.shape()[1] == channels[i]);
        CHECK(pyr[i]->value.shape()[2] == 64 / strides[i]);
        CHECK(pyr[i]->value.shape()[3] == 64 / strides[i]);
    }
    // channels never decrease with depth
    for (int i = 1; i < 5; ++i) CHECK(enc->channels()[i] >= enc->channels()[i - 1]);
}

TEST_CASE("3D encoder: doubling channels from base, strides {1,2,4,8,16}") {
    EncoderSpec spec;
    spec.dimensionality = 3;
    spec.in_channels = 4;
    spec.base_channels = 16;
    spec.blocks_per_stage = 1;
    auto enc = build_encoder<float>(spec);
    enc->initialize(2);
    enc->set_training(false);
    CHECK(enc->channels() == std::vector<int64_t>{16, 32, 64, 128, 256});
    NoGradGuard ng;
    auto pyr = enc->forward_pyramid(constant(FTensor({1, 4, 16, 16, 16}, 0.1f)));
    const std::vector<int64_t> strides{1, 2, 4, 8, 16};
    for (int i = 0; i < 5; ++i) {
        CHECK(pyr[i]->value.shape()[1] == (16LL << i));
        CHECK(pyr[i]->value.shape()[2] == 16 / strides[i]);
    }
}

TEST_CASE("encoder spec validation") {
    EncoderSpec bad;
    bad.dimensionality = 3;
    bad.pretrained_weights_path = "weights.panet";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    EncoderSpec bad2;
    bad2.dimensionality = 4;
    CHECK_THROWS_AS(bad2.validate(), ConfigError);
}

TEST_CASE("grayscale stem adaptation reproduces the RGB response on replicated images") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "panet_test_encoder.weights").string();
    // RGB encoder with random weights, exported
    EncoderSpec rgb_spec;
    rgb_spec.in_channels = 3;
    auto rgb = build_encoder<float>(rgb_spec);
    rgb->initialize(77);
    rgb->set_training(false);
    save_encoder_weights(*rgb, path);
    // grayscale encoder, adapted load
    EncoderSpec gray_spec;
    gray_spec.in_channels = 1;
    auto gray = build_encoder<float>(gray_spec);
    gray->initialize(5);
    gray->set_training(false);
    load_pretrained_encoder(*gray, path, 1);

    Rng rng(6);
    auto img = random_tensor<float>({1, 1, 32, 32}, rng);
    FTensor rep({1, 3, 32, 32});
    for (int64_t c = 0; c < 3; ++c) std::copy(img.data(), img.data() + 1024, rep.data() + c * 1024);
    NoGradGuard ng;
    auto out_gray = gray->forward_pyramid(constant(img));
    auto out_rgb = rgb->forward_pyramid(constant(rep));
    for (int64_t i = 0; i < out_gray[4]->value.numel(); ++i)
        CHECK(out_gray[4]->value[i] == doctest::Approx(out_rgb[4]->value[i]).epsilon(2e-4));
    fs::remove(path);

    // layout mismatch is a descriptive checkpoint error
    EncoderSpec small3d;
    small3d.dimensionality = 3;
    small3d.in_channels = 4;
    small3d.base_channels = 8;
    small3d.blocks_per_stage = 1;
    auto other = build_encoder<float>(small3d);
    other->initialize(1);
    const std::string path2 = (fs::temp_directory_path() / "panet_test_encoder2.weights").string();
    save_encoder_weights(*other, path2);
    auto gray2 = build_encoder<float>(gray_spec);
    gray2->initialize(1);
    CHECK_THROWS_AS(load_pretrained_encoder(*gray2, path2, 1), CheckpointError);
    fs::remove(path2);
}

TEST_CASE("network config validation") {
    NetworkConfig cfg = cfg2d();
    cfg.agd = false;
    cfg.intermediate_supervision = true;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    NetworkConfig cfg2 = cfg2d();
    cfg2.output_mode = OutputMode::SigmoidRegions;
    cfg2.num_classes = 4;
    CHECK_THROWS_AS(cfg2.validate(), ConfigError);
}

TEST_CASE("PANet forward: shapes, attention resolution, divisibility errors") {
    NetworkConfig cfg = cfg2d();
    auto model = build_model<float>(cfg);
    initialize_model(*model, 3);
    model->set_training(false);
    NoGradGuard ng;
    auto out = model->forward(constant(FTensor({2, 1, 64, 96}, 0.2f)));
    CHECK(out.main_logits->value.shape() == Shape{2, 3, 64, 96});
    REQUIRE(out.aux_logits.size() == 3);
    for (const auto& aux : out.aux_logits) CHECK(aux->value.shape() == Shape{2, 3, 64, 96});
    CHECK(out.attention->value.shape() == Shape{2, 1, 8, 12});
    for (int64_t i = 0; i < out.attention->value.numel(); ++i) {
        CHECK(out.attention->value[i] > 0.0f);
        CHECK(out.attention->value[i] < 1.0f);
    }
    CHECK_THROWS_WITH_AS(model->forward(constant(FTensor({1, 1, 65, 64}))), doctest::Contains("height"),
                         ShapeError);
    CHECK_THROWS_WITH_AS(model->forward(constant(FTensor({1, 1, 64, 48}))), doctest::Contains("width"), ShapeError);
    CHECK_THROWS_AS(model->forward(constant(FTensor({1, 2, 64, 64}))), ShapeError);

    // deep supervision off: no aux outputs
    NetworkConfig no_ds = cfg2d();
    no_ds.deep_supervision = false;
    auto model2 = build_model<float>(no_ds);
    initialize_model(*model2, 3);
    model2->set_training(false);
    CHECK(model2->forward(constant(FTensor({1, 1, 64, 64}, 0.1f))).aux_logits.empty());
}

TEST_CASE("PANet 3D forward: region logits at input size") {
    auto model = build_model<float>(cfg3d());
    initialize_model(*model, 4);
    model->set_training(false);
    NoGradGuard ng;
    auto out = model->forward(constant(FTensor({1, 4, 16, 16, 16}, 0.1f)));
    CHECK(out.main_logits->value.shape() == Shape{1, 3, 16, 16, 16});
    CHECK(out.attention->value.shape() == Shape{1, 1, 4, 4, 4});  // third level: stride 4 of 16
    CHECK_THROWS_WITH_AS(model->forward(constant(FTensor({1, 4, 24, 16, 16}))), doctest::Contains("depth"),
                         ShapeError);
}

TEST_CASE("deep supervision toggle: identical main path before training") {
    NetworkConfig with_ds = cfg2d();
    NetworkConfig no_ds = cfg2d();
    no_ds.deep_supervision = false;
    auto a = build_model<float>(with_ds);
    auto b = build_model<float>(no_ds);
    initialize_model(*a, 11);
    initialize_model(*b, 11);
    a->set_training(false);
    b->set_training(false);
    NoGradGuard ng;
    Rng rng(12);
    const auto x = random_tensor<float>({1, 1, 64, 64}, rng);
    auto oa = a->forward(constant(x.clone()));
    auto ob = b->forward(constant(x.clone()));
    for (int64_t i = 0; i < oa.main_logits->value.numel(); ++i)
        CHECK(oa.main_logits->value[i] == ob.main_logits->value[i]);  // bit-identical

    // parameter difference is exactly the aux heads
    const int64_t diff = a->parameter_count() - b->parameter_count();
    CHECK(diff == count_with_prefix(*a, "decoder.aux_head"));
    CHECK(diff > 0);
}

TEST_CASE("ablation rows: parameter accounting") {
    // No.3 (DS+AGD w/o IS) and No.4 (full) have identical parameter counts
    NetworkConfig no3 = cfg2d();
    no3.intermediate_supervision = false;
    NetworkConfig no4 = cfg2d();
    auto m3 = build_model<float>(no3);
    auto m4 = build_model<float>(no4);
    CHECK(m3->parameter_count() == m4->parameter_count());

    // No.2 vs No.1 differ exactly by the aux heads
    NetworkConfig no1 = cfg2d();
    no1.deep_supervision = false;
    no1.agd = false;
    no1.intermediate_supervision = false;
    NetworkConfig no2 = no1;
    no2.deep_supervision = true;
    auto m1 = build_model<float>(no1);
    auto m2 = build_model<float>(no2);
    CHECK(m2->parameter_count() - m1->parameter_count() == count_with_prefix(*m2, "decoder.aux_head"));

    // enhanced U-Net ablation row matches the U-Net baseline topology
    auto unet = build_baseline<float>(BaselineKind::UNet, cfg2d());
    CHECK(m1->parameter_count() == unet->parameter_count());
}

TEST_CASE("baselines: shape contract and parameter ordering") {
    NetworkConfig cfg = cfg3d();
    NoGradGuard ng;
    auto unet = build_baseline<float>(BaselineKind::UNet, cfg);
    auto attn = build_baseline<float>(BaselineKind::AttentionUNet, cfg);
    auto casc = build_baseline<float>(BaselineKind::CascadedUNet, cfg);
    auto panet = build_model<float>(cfg);
    for (auto& m : {unet, attn, casc}) {
        initialize_model(*m, 9);
        m->set_training(false);
        auto out = m->forward(constant(FTensor({1, 4, 16, 16, 16}, 0.1f)));
        CHECK(out.main_logits->value.shape() == Shape{1, 3, 16, 16, 16});
    }
    // cascaded exposes the stage-1 binary prior
    initialize_model(*casc, 10);
    auto out = casc->forward(constant(FTensor({1, 4, 16, 16, 16}, 0.1f)));
    REQUIRE(out.coarse_logits);
    CHECK(out.coarse_logits->value.shape() == Shape{1, 1, 16, 16, 16});

    const int64_t pu = unet->parameter_count(), pa = attn->parameter_count(), pc = casc->parameter_count(),
                  pp = panet->parameter_count();
    CHECK(pu < pa);
    CHECK(pa < pp);
    CHECK(pp < pc);
    // cascaded is two stacked U-Nets (stage-2 stem sees one extra channel)
    CHECK(pc == doctest::Approx(2.0 * pu).epsilon(0.05));
    CHECK_THROWS_AS(baseline_kind_from_string("resnet"), ConfigError);
}

TEST_CASE("zero-initialized head gives a uniform softmax") {
    auto model = build_model<float>(cfg2d());
    initialize_model(*model, 13);
    model->set_training(false);
    auto sd = model->state_dict();
    sd.at("decoder.head.weight").fill(0.0f);
    sd.at("decoder.head.bias").fill(0.0f);
    model->load_state_dict(sd, true);
    NoGradGuard ng;
    auto out = model->forward(constant(FTensor({1, 1, 32, 32}, 0.3f)));
    auto probs = ops::softmax_channel(out.main_logits);
    for (int64_t i = 0; i < probs->value.numel(); ++i)
        CHECK(probs->value[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("all ablation variants and baselines: forward+backward with finite gradients (2D and 3D)") {
    struct Flags {
        bool ds, agd, is;
    };
    const std::vector<Flags> rows{{false, false, false}, {true, false, false}, {true, true, false}, {true, true, true}};
    Rng rng(20);

    auto run_check = [&](std::shared_ptr<SegModel<float>> model, const FTensor& x, OutputMode mode) {
        initialize_model(*model, 21);
        model->set_training(true);
        auto out = model->forward(constant(x.clone()));
        Shape lab_shape{x.shape()[0]};
        for (size_t i = 2; i < x.shape().size(); ++i) lab_shape.push_back(x.shape()[i]);
        U8Tensor labels(lab_shape);
        for (int64_t i = 0; i < labels.numel(); ++i)
            labels[i] = static_cast<uint8_t>(mode == OutputMode::SoftmaxLabels ? rng.uniform_int(0, 2)
                                                                               : std::vector<int>{0, 1, 2, 4}[static_cast<size_t>(rng.uniform_int(0, 3))]);
        const auto targets = make_targets<float>(labels, mode, 3);
        LossConfig lcfg;
        lcfg.multiclass_loss = mode == OutputMode::SoftmaxLabels ? MulticlassLossKind::FocalTversky
                                                                 : MulticlassLossKind::DiceCE;
        FVar att_up;
        if (model->config().intermediate_supervision && out.attention) {
            std::vector<int64_t> sp(x.shape().begin() + 2, x.shape().end());
            att_up = resize_attention(out.attention, sp);
        }
        auto [loss, bd] = total_loss(out.main_logits, out.aux_logits, att_up, targets, lcfg, mode,
                                     model->config().deep_supervision, model->config().intermediate_supervision);
        CHECK(std::isfinite(bd.total));
        backward(loss);
        std::vector<std::pair<std::string, FVar>> ps;
        model->named_parameters(ps);
        int64_t with_grad = 0;
        for (auto& [name, p] : ps) {
            if (!p->grad.defined()) continue;
            ++with_grad;
            INFO("parameter ", name);
            CHECK(p->grad.all_finite());
        }
        CHECK(with_grad > 0);
    };

    const FTensor x2 = panet::testing::random_tensor<float>({2, 1, 64, 64}, rng, 0.0, 1.0);
    const FTensor x3 = panet::testing::random_tensor<float>({1, 4, 16, 16, 16}, rng, 0.0, 1.0);
    for (const auto& f : rows) {
        NetworkConfig c2 = cfg2d();
        c2.deep_supervision = f.ds;
        c2.agd = f.agd;
        c2.intermediate_supervision = f.is;
        run_check(build_model<float>(c2), x2, OutputMode::SoftmaxLabels);
        NetworkConfig c3 = cfg3d();
        c3.deep_supervision = f.ds;
        c3.agd = f.agd;
        c3.intermediate_supervision = f.is;
        run_check(build_model<float>(c3), x3, OutputMode::SigmoidRegions);
    }
    for (const BaselineKind kind : {BaselineKind::UNet, BaselineKind::AttentionUNet, BaselineKind::CascadedUNet}) {
        run_check(build_baseline<float>(kind, cfg2d()), x2, OutputMode::SoftmaxLabels);
        run_check(build_baseline<float>(kind, cfg3d()), x3, OutputMode::SigmoidRegions);
    }
}

TEST_CASE("per-name initialization is independent of sibling modules") {
    // the same tensor name yields the same values regardless of model flags
    NetworkConfig a = cfg2d(), b = cfg2d();
    b.deep_supervision = false;
    auto ma = build_model<float>(a);
    auto mb = build_model<float>(b);
    ma->initialize(99);
    mb->initialize(99);
    auto sda = ma->state_dict();
    auto sdb = mb->state_dict();
    for (const auto& [name, t] : sdb) {
        REQUIRE(sda.count(name));
        const FTensor& ta = sda.at(name);
        for (int64_t i = 0; i < t.numel(); ++i) CHECK(ta[i] == t[i]);
    }
}
