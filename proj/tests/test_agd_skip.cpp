#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "panet/model/skip_fusion.hpp"
#include "test_helpers.hpp"

using namespace panet;
using panet::testing::fd_max_rel_err;
using panet::testing::random_tensor;

namespace {

template <typename T>
std::shared_ptr<AttentionGuidingDecoder<T>> small_agd(uint64_t seed, bool norm_act = true) {
    auto agd = std::make_shared<AttentionGuidingDecoder<T>>(2, 3, 4, 5, 3, norm_act, NormKind::Batch, ActKind::ReLU);
    agd->initialize(seed);
    return agd;
}

}  // namespace

TEST_CASE("fuse_pair: shapes and zero cases") {
    Rng rng(31);
    // deep 1x2048x16x16 with shallow 1x1024x32x32 -> 1x1024x32x32 (channel contract at full width)
    {
        Conv<float> compress(2, 2048, 1024, 1);
        ConvBlock<float> fuse(2, 2048, 1024, 3, NormKind::None, ActKind::None);
        compress.initialize(1);
        fuse.initialize(2);
        auto deep = constant(FTensor({1, 2048, 16, 16}, 0.01f));
        auto shallow = constant(FTensor({1, 1024, 32, 32}, 0.02f));
        auto fused = fuse_pair(deep, shallow, compress, fuse);
        CHECK(fused->value.shape() == Shape{1, 1024, 32, 32});
    }
    // 3D variant
    {
        Conv<float> compress(3, 256, 128, 1);
        ConvBlock<float> fuse(3, 256, 128, 3, NormKind::None, ActKind::None);
        compress.initialize(3);
        fuse.initialize(4);
        auto deep = constant(FTensor({1, 256, 8, 8, 8}, 0.01f));
        auto shallow = constant(FTensor({1, 128, 16, 16, 16}, 0.0f));
        auto fused = fuse_pair(deep, shallow, compress, fuse);
        CHECK(fused->value.shape() == Shape{1, 128, 16, 16, 16});
    }
    // zero fuser weights: output is exactly zero regardless of inputs
    {
        Conv<double> compress(2, 5, 4, 1);
        ConvBlock<double> fuse(2, 8, 4, 3, NormKind::None, ActKind::None);
        compress.initialize(5);
        fuse.initialize(6);
        std::vector<std::pair<std::string, Var<double>>> ps;
        fuse.named_parameters(ps);
        for (auto& [name, p] : ps) p->value.fill(0.0);
        auto deep = constant(random_tensor<double>({1, 5, 4, 4}, rng));
        auto shallow = constant(random_tensor<double>({1, 4, 8, 8}, rng));
        auto fused = fuse_pair(deep, shallow, compress, fuse);
        for (int64_t i = 0; i < fused->value.numel(); ++i) CHECK(fused->value[i] == 0.0);
    }
    // spatial-ratio mismatch is a shape error
    {
        Conv<float> compress(2, 5, 4, 1);
        ConvBlock<float> fuse(2, 8, 4, 3, NormKind::None, ActKind::None);
        compress.initialize(7);
        fuse.initialize(8);
        auto deep = constant(FTensor({1, 5, 4, 4}));
        auto shallow = constant(FTensor({1, 4, 9, 8}));
        CHECK_THROWS_AS(fuse_pair(deep, shallow, compress, fuse), ShapeError);
    }
}

TEST_CASE("attention map: zero weights give exactly 0.5, bounds hold under extreme inputs") {
    auto agd = small_agd<float>(41);
    std::vector<std::pair<std::string, FVar>> ps;
    agd->named_parameters(ps);
    for (auto& [name, p] : ps) p->value.fill(0.0f);
    auto x3 = constant(FTensor({2, 3, 8, 8}, 0.7f));
    auto x4 = constant(FTensor({2, 4, 4, 4}, -0.3f));
    auto x5 = constant(FTensor({2, 5, 2, 2}, 1.1f));
    auto y = agd->forward(x3, x4, x5);
    CHECK(y->value.shape() == Shape{2, 1, 8, 8});
    for (int64_t i = 0; i < y->value.numel(); ++i) CHECK(y->value[i] == 0.5f);

    // adversarially large inputs stay strictly inside (0,1)
    auto agd2 = small_agd<float>(42);
    agd2->set_training(true);
    Rng rng(43);
    auto big3 = random_tensor<float>({1, 3, 8, 8}, rng, -1e4, 1e4);
    auto big4 = random_tensor<float>({1, 4, 4, 4}, rng, -1e4, 1e4);
    auto big5 = random_tensor<float>({1, 5, 2, 2}, rng, -1e4, 1e4);
    auto y2 = agd2->forward(constant(big3), constant(big4), constant(big5));
    for (int64_t i = 0; i < y2->value.numel(); ++i) {
        CHECK(y2->value[i] > 0.0f);
        CHECK(y2->value[i] < 1.0f);
    }
}

TEST_CASE("attention map: stride-8 output size") {
    auto agd = small_agd<float>(44);
    agd->set_training(false);
    auto x3 = constant(FTensor({1, 3, 64, 64}, 0.1f));  // input 512 -> X3 at stride 8
    auto x4 = constant(FTensor({1, 4, 32, 32}, 0.1f));
    auto x5 = constant(FTensor({1, 5, 16, 16}, 0.1f));
    CHECK(agd->forward(x3, x4, x5)->value.shape() == Shape{1, 1, 64, 64});
}

TEST_CASE("attention gradients match finite differences for every AgdWeights tensor") {
    // double precision, moderate magnitudes: the sigmoid clamp stays inactive
    auto make = [&](uint64_t seed) {
        auto agd = std::make_shared<AttentionGuidingDecoder<double>>(2, 3, 4, 5, 3, true, NormKind::Batch,
                                                                     ActKind::ReLU);
        agd->initialize(seed);
        agd->set_training(true);
        return agd;
    };
    Rng rng(45);
    const auto x3t = random_tensor<double>({1, 3, 8, 8}, rng);
    const auto x4t = random_tensor<double>({1, 4, 4, 4}, rng);
    const auto x5t = random_tensor<double>({1, 5, 2, 2}, rng);
    auto agd_probe = make(46);
    std::vector<std::pair<std::string, Var<double>>> params;
    agd_probe->named_parameters(params);
    for (auto& [name, pvar] : params) {
        Tensor<double> pt = pvar->value.clone();
        auto fwd = [&] {
            NoGradGuard ng;
            auto agd = make(46);
            std::vector<std::pair<std::string, Var<double>>> ps;
            agd->named_parameters(ps);
            for (auto& [n2, p2] : ps)
                if (n2 == name) std::copy(pt.data(), pt.data() + pt.numel(), p2->value.data());
            auto y = agd->forward(constant(x3t.clone()), constant(x4t.clone()), constant(x5t.clone()));
            double s = 0;
            for (int64_t i = 0; i < y->value.numel(); ++i) s += y->value[i];
            return s;
        };
        auto analytic = [&] {
            auto agd = make(46);
            std::vector<std::pair<std::string, Var<double>>> ps;
            agd->named_parameters(ps);
            Var<double> target;
            for (auto& [n2, p2] : ps) {
                if (n2 == name) {
                    std::copy(pt.data(), pt.data() + pt.numel(), p2->value.data());
                    target = p2;
                }
            }
            auto y = agd->forward(constant(x3t.clone()), constant(x4t.clone()), constant(x5t.clone()));
            backward(ops::sum_all(y));
            return target->grad.defined() ? target->grad.clone() : Tensor<double>::zeros(pt.shape());
        };
        const double err = fd_max_rel_err(pt, fwd, analytic, 1e-6);
        INFO("parameter ", name);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("attention is batch-permutation equivariant and translation equivariant") {
    auto agd = small_agd<float>(47);
    agd->set_training(false);
    Rng rng(48);
    auto x3 = random_tensor<float>({2, 3, 8, 8}, rng);
    auto x4 = random_tensor<float>({2, 4, 4, 4}, rng);
    auto x5 = random_tensor<float>({2, 5, 2, 2}, rng);
    auto y = agd->forward(constant(x3.clone()), constant(x4.clone()), constant(x5.clone()));
    auto swap_batch = [](const FTensor& t) {
        FTensor out = t.clone();
        const int64_t half = t.numel() / 2;
        for (int64_t i = 0; i < half; ++i) std::swap(out[i], out[half + i]);
        return out;
    };
    auto y_swapped = agd->forward(constant(swap_batch(x3)), constant(swap_batch(x4)), constant(swap_batch(x5)));
    const FTensor expect = swap_batch(y->value);
    for (int64_t i = 0; i < expect.numel(); ++i) CHECK(y_swapped->value[i] == doctest::Approx(expect[i]).epsilon(1e-6));

    // stride-aligned translation: shift all three inputs by one X5 cell
    // (1 cell at stride 32 = 2 at stride 16 = 4 at stride 8) and compare the
    // interior of the translated output, away from border effects
    auto content_shift = [](const FTensor& t, int64_t shift_last) {
        FTensor out(t.shape());  // zero-fill
        const int64_t w = t.shape().back();
        const int64_t rows = t.numel() / w;
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c + shift_last < w; ++c) out[r * w + c + shift_last] = t[r * w + c];
        return out;
    };
    Rng rng_big(148);
    agd->set_training(false);  // eval-mode statistics are translation independent
    auto b3 = random_tensor<float>({1, 3, 48, 48}, rng_big);
    auto b4 = random_tensor<float>({1, 4, 24, 24}, rng_big);
    auto b5 = random_tensor<float>({1, 5, 12, 12}, rng_big);
    auto base = agd->forward(constant(b3.clone()), constant(b4.clone()), constant(b5.clone()));
    auto shifted = agd->forward(constant(content_shift(b3, 4)), constant(content_shift(b4, 2)),
                                constant(content_shift(b5, 1)));
    const FTensor expect_shift = content_shift(base->value, 4);
    int64_t checked = 0;
    for (int64_t r = 16; r < 32; ++r)
        for (int64_t c = 18; c < 34; ++c) {  // interior, clear of the receptive-field halo
            const int64_t i = r * 48 + c;
            CHECK(shifted->value[i] == doctest::Approx(expect_shift[i]).epsilon(1e-4));
            ++checked;
        }
    CHECK(checked > 0);
}

TEST_CASE("resize_attention: convex bounds, constants, mean preservation on aligned reduction") {
    Rng rng(49);
    auto y64 = random_tensor<float>({1, 1, 64, 64}, rng, 0.0, 1.0);
    auto up = resize_attention(constant(y64.clone()), {512, 512});
    CHECK(up->value.shape() == Shape{1, 1, 512, 512});
    float lo = 2.0f, hi = -1.0f;
    for (int64_t i = 0; i < y64.numel(); ++i) {
        lo = std::min(lo, y64[i]);
        hi = std::max(hi, y64[i]);
    }
    for (int64_t i = 0; i < up->value.numel(); ++i) {
        CHECK(up->value[i] >= lo - 1e-6f);
        CHECK(up->value[i] <= hi + 1e-6f);
    }

    auto c = constant(FTensor({1, 1, 10, 10}, 0.7f));
    for (const std::vector<int64_t> target : {std::vector<int64_t>{27, 5}, {64, 64}, {3, 17}}) {
        auto r = resize_attention(c, target);
        for (int64_t i = 0; i < r->value.numel(); ++i) CHECK(r->value[i] == doctest::Approx(0.7f).epsilon(1e-6));
    }

    // aligned factor-4 reduction of a checkerboard preserves the block mean
    FTensor cb({1, 1, 64, 64});
    for (int64_t yy = 0; yy < 64; ++yy)
        for (int64_t xx = 0; xx < 64; ++xx) cb[yy * 64 + xx] = static_cast<float>((yy + xx) % 2 == 0 ? 0.2 : 0.8);
    auto down = resize_attention(constant(cb), {16, 16});
    // average-pooling oracle over aligned 4x4 blocks
    for (int64_t by = 0; by < 16; ++by)
        for (int64_t bx = 0; bx < 16; ++bx) {
            double mean = 0;
            for (int64_t dy = 0; dy < 4; ++dy)
                for (int64_t dx = 0; dx < 4; ++dx) mean += cb[(4 * by + dy) * 64 + 4 * bx + dx];
            mean /= 16.0;
            CHECK(down->value[by * 16 + bx] == doctest::Approx(mean).epsilon(1e-6));
        }

    // identity when the target matches
    auto same = resize_attention(constant(y64.clone()), {64, 64});
    for (int64_t i = 0; i < y64.numel(); ++i) CHECK(same->value[i] == y64[i]);
}

TEST_CASE("skip refinement (Eq. 6): identities, linearity, alpha gradient") {
    SkipFusion<double> sf;
    sf.initialize(0);
    CHECK(sf.alpha_values() == std::vector<double>{1, 1, 1, 1, 1});

    Rng rng(50);
    auto f = random_tensor<double>({1, 3, 6, 6}, rng);
    auto y = random_tensor<double>({1, 1, 6, 6}, rng, 0.0, 1.0);

    // f=[[2]], y=[[0.5]], alpha=1 -> 3
    {
        Tensor<double> f1({1, 1, 1, 1}, 2.0), y1({1, 1, 1, 1}, 0.5);
        auto out = sf.refine(constant(f1), constant(y1), 0);
        CHECK(out->value[0] == doctest::Approx(3.0));
    }
    // alpha=0, y=1 -> f ; alpha=1, y=0 -> f ; alpha=0.5, y=0.5 -> f
    {
        SkipFusion<double> sf2;
        sf2.initialize(0);
        auto set_alpha = [&](int level, double v) { sf2.alphas()[level]->value[0] = v; };
        set_alpha(0, 0.0);
        auto ones = Tensor<double>({1, 1, 6, 6}, 1.0);
        auto out1 = sf2.refine(constant(f.clone()), constant(ones), 0);
        for (int64_t i = 0; i < f.numel(); ++i) CHECK(out1->value[i] == doctest::Approx(f[i]).epsilon(1e-12));
        set_alpha(1, 1.0);
        auto zeros = Tensor<double>({1, 1, 6, 6}, 0.0);
        auto out2 = sf2.refine(constant(f.clone()), constant(zeros), 1);
        for (int64_t i = 0; i < f.numel(); ++i) CHECK(out2->value[i] == doctest::Approx(f[i]).epsilon(1e-12));
        set_alpha(2, 0.5);
        auto halves = Tensor<double>({1, 1, 6, 6}, 0.5);
        auto out3 = sf2.refine(constant(f.clone()), constant(halves), 2);
        for (int64_t i = 0; i < f.numel(); ++i) CHECK(out3->value[i] == doctest::Approx(f[i]).epsilon(1e-12));
    }
    // linearity in f at fixed (y, alpha), exact at double precision
    {
        auto f2 = random_tensor<double>({1, 3, 6, 6}, rng);
        const double a = 1.7, b = -0.4;
        Tensor<double> combo(f.shape());
        for (int64_t i = 0; i < combo.numel(); ++i) combo[i] = a * f[i] + b * f2[i];
        auto lhs = sf.refine(constant(combo), constant(y.clone()), 3);
        auto r1 = sf.refine(constant(f.clone()), constant(y.clone()), 3);
        auto r2 = sf.refine(constant(f2.clone()), constant(y.clone()), 3);
        for (int64_t i = 0; i < combo.numel(); ++i)
            CHECK(lhs->value[i] == doctest::Approx(a * r1->value[i] + b * r2->value[i]).epsilon(1e-12));
    }
    // d(refine)/d(alpha) = f elementwise, against finite differences
    {
        SkipFusion<double> sf3;
        sf3.initialize(0);
        auto weights = random_tensor<double>({1, 3, 6, 6}, rng);
        Tensor<double> alpha_t({1}, 1.0);
        auto fwd = [&] {
            NoGradGuard ng;
            SkipFusion<double> sfl;
            sfl.initialize(0);
            sfl.alphas()[2]->value[0] = alpha_t[0];
            auto out = sfl.refine(constant(f.clone()), constant(y.clone()), 2);
            double s = 0;
            for (int64_t i = 0; i < out->value.numel(); ++i) s += out->value[i] * weights[i];
            return s;
        };
        auto analytic = [&] {
            SkipFusion<double> sfl;
            sfl.initialize(0);
            sfl.alphas()[2]->value[0] = alpha_t[0];
            auto out = sfl.refine(constant(f.clone()), constant(y.clone()), 2);
            backward(ops::sum_all(ops::mul(out, constant(weights.clone()))));
            return sfl.alphas()[2]->grad.clone();
        };
        CHECK(fd_max_rel_err(alpha_t, fwd, analytic, 1e-7) < 1e-6);
        // and the analytic gradient equals sum(f * weights)
        double expect = 0;
        for (int64_t i = 0; i < f.numel(); ++i) expect += f[i] * weights[i];
        CHECK(analytic()[0] == doctest::Approx(expect).epsilon(1e-12));
    }
    // spatial mismatch rejected
    {
        auto bad_y = Tensor<double>({1, 1, 3, 3}, 0.5);
        CHECK_THROWS_AS(sf.refine(constant(f.clone()), constant(bad_y), 0), ShapeError);
    }
    // detached attention carries no gradient into y
    {
        auto yv = parameter(y.clone());
        auto out = sf.refine(constant(f.clone()), yv, 0, true);
        backward(ops::sum_all(out));
        CHECK_FALSE(yv->grad.defined());
    }
    CHECK_THROWS_AS(SkipFusion<double>(4), ConfigError);
}
