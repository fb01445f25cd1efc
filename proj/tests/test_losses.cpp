#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "panet/losses.hpp"
#include "test_helpers.hpp"

using namespace panet;
using panet::testing::fd_max_rel_err;
using panet::testing::random_binary;
using panet::testing::random_tensor;

namespace {

// Probabilities kept away from the clamp boundaries so the finite-difference
// probe stays inside the differentiable region.
Tensor<double> random_probs(Shape shape, Rng& rng) { return random_tensor<double>(std::move(shape), rng, 0.05, 0.95); }

template <typename MakeLoss>
double loss_fd_err(Tensor<double>& p, MakeLoss make, double h = 1e-7) {
    auto fwd = [&] {
        NoGradGuard ng;
        return make(constant(p.clone()))->value[0];
    };
    auto analytic = [&] {
        auto v = parameter(p.clone());
        backward(make(v));
        return v->grad.clone();
    };
    return fd_max_rel_err(p, fwd, analytic, h);
}

}  // namespace

TEST_CASE("dice loss: analytic values") {
    // perfect overlap -> loss below the smooth-induced epsilon
    Rng rng(11);
    auto g = random_binary<double>({1, 1, 8, 8}, rng);
    auto perfect = loss::dice(constant(g.clone()), g, 1e-5);
    CHECK(perfect->value[0] < 1e-6);

    // p = 0.5 everywhere, g = 1 everywhere: 1 - 2(0.5 N)/(0.25 N + N) -> 0.2
    const int64_t n = 10000;
    Tensor<double> half({1, 1, 1, n}, 0.5), ones({1, 1, 1, n}, 1.0);
    auto l = loss::dice(constant(half), ones, 1e-5);
    CHECK(l->value[0] == doctest::Approx(0.2).epsilon(1e-4));
}

TEST_CASE("dice loss: shape mismatch rejected") {
    Tensor<double> p({1, 1, 2, 2}, 0.5), g({1, 1, 2, 3}, 1.0);
    CHECK_THROWS_AS(loss::dice(constant(p), g, 1e-5), ShapeError);
}

TEST_CASE("focal loss reduces to BCE at gamma=0, alpha=1") {
    Rng rng(12);
    auto p = random_probs({2, 1, 4, 4}, rng);
    auto g = random_binary<double>({2, 1, 4, 4}, rng);
    auto focal = loss::focal(constant(p.clone()), g, 0.0, 1.0);
    auto bce = loss::bce_probs(constant(p.clone()), g);
    CHECK(focal->value[0] == doctest::Approx(bce->value[0]).epsilon(1e-12));

    // confident-correct limit
    Tensor<double> sure({1, 1, 2, 2}, 1.0 - 1e-7), pos({1, 1, 2, 2}, 1.0);
    CHECK(loss::focal(constant(sure), pos, 2.0, 0.25)->value[0] < 1e-5);
}

TEST_CASE("focal tversky reduces to non-squared dice at alpha=beta=0.5, exponent=1") {
    Rng rng(13);
    auto p = random_probs({1, 2, 6, 6}, rng);
    auto g = random_binary<double>({1, 2, 6, 6}, rng);
    const double s = 1e-5;
    auto ftl = loss::focal_tversky(constant(p.clone()), g, 0.5, 0.5, 1.0, s);
    // direct non-squared dice with matching smooth (2s), per channel
    double expect = 0;
    for (int64_t c = 0; c < 2; ++c) {
        double inter = 0, sp = 0, sg = 0;
        for (int64_t i = 0; i < 36; ++i) {
            inter += p[c * 36 + i] * g[c * 36 + i];
            sp += p[c * 36 + i];
            sg += g[c * 36 + i];
        }
        expect += 1.0 - (2 * inter + 2 * s) / (sp + sg + 2 * s);
    }
    expect /= 2;
    CHECK(ftl->value[0] == doctest::Approx(expect).epsilon(1e-12));

    auto perfect = loss::focal_tversky(constant(g.clone()), g, 0.7, 0.3, 0.75);
    CHECK(perfect->value[0] < 1e-6);
}

TEST_CASE("cross entropy: uniform logits give ln(C); confident margin vanishes") {
    Tensor<double> z({1, 3, 2, 2}, 0.0);
    U8Tensor lab({1, 2, 2});
    lab[0] = 0; lab[1] = 1; lab[2] = 2; lab[3] = 0;
    CHECK(loss::cross_entropy_labels(constant(z), lab)->value[0] == doctest::Approx(std::log(3.0)).epsilon(1e-12));

    Tensor<double> zbig({1, 3, 1, 1}, -50.0);
    zbig[1] = 50.0;  // class 1 huge margin
    U8Tensor lab1({1, 1, 1});
    lab1[0] = 1;
    CHECK(loss::cross_entropy_labels(constant(zbig), lab1)->value[0] < 1e-4);

    U8Tensor bad({1, 1, 1});
    bad[0] = 3;
    Tensor<double> z1({1, 3, 1, 1}, 0.0);
    CHECK_THROWS_AS(loss::cross_entropy_labels(constant(z1), bad), DataError);
}

TEST_CASE("binary target union (Eq. of the binary ground truth)") {
    Tensor<double> onehot({1, 2, 1, 3}, 0.0);
    onehot[0] = 1;  // class 1 at position 0
    onehot[4] = 1;  // class 2 at position 1
    auto gb = binary_target(onehot);
    CHECK(gb.shape() == Shape{1, 1, 1, 3});
    CHECK(gb[0] == 1.0);
    CHECK(gb[1] == 1.0);
    CHECK(gb[2] == 0.0);

    Tensor<double> empty({1, 3, 2, 2}, 0.0);
    auto gb2 = binary_target(empty);
    for (int64_t i = 0; i < gb2.numel(); ++i) CHECK(gb2[i] == 0.0);

    Tensor<double> nonbinary({1, 1, 1, 1}, 0.5);
    CHECK_THROWS_AS(binary_target(nonbinary), DataError);
}

TEST_CASE("regions_from_labels: BraTS nesting") {
    U8Tensor lab({4});
    lab[0] = 0; lab[1] = 2; lab[2] = 1; lab[3] = 4;
    auto r = regions_from_labels(lab);
    // ET
    CHECK(r[0] == 0); CHECK(r[1] == 0); CHECK(r[2] == 0); CHECK(r[3] == 1);
    // TC
    CHECK(r[4] == 0); CHECK(r[5] == 0); CHECK(r[6] == 1); CHECK(r[7] == 1);
    // WT
    CHECK(r[8] == 0); CHECK(r[9] == 1); CHECK(r[10] == 1); CHECK(r[11] == 1);
    U8Tensor bad({1});
    bad[0] = 3;
    CHECK_THROWS_WITH_AS(regions_from_labels(bad), doctest::Contains("3"), DataError);
}

TEST_CASE("gradient oracle: all losses, 2D and 3D instances, multiple seeds") {
    for (uint64_t seed = 0; seed < 3; ++seed) {
        for (const Shape shape : {Shape{1, 2, 8, 8}, Shape{1, 2, 4, 4, 4}}) {
            Rng rng(100 + seed);
            auto p = random_probs(shape, rng);
            auto g = random_binary<double>(shape, rng);
            CHECK(loss_fd_err(p, [&](Var<double> v) { return loss::dice(v, g, 1e-5); }) < 1e-4);
            CHECK(loss_fd_err(p, [&](Var<double> v) { return loss::focal(v, g, 2.0, 0.25); }) < 1e-4);
            CHECK(loss_fd_err(p, [&](Var<double> v) { return loss::focal_tversky(v, g, 0.7, 0.3, 0.75); }) < 1e-4);
            CHECK(loss_fd_err(p, [&](Var<double> v) { return loss::bce_probs(v, g); }) < 1e-4);
            auto z = random_tensor<double>(shape, rng, -2.0, 2.0);
            CHECK(loss_fd_err(z, [&](Var<double> v) { return loss::bce_with_logits(v, g); }) < 1e-4);
            Shape lab_shape{shape[0]};
            for (size_t i = 2; i < shape.size(); ++i) lab_shape.push_back(shape[i]);
            U8Tensor lab(lab_shape);
            for (int64_t i = 0; i < lab.numel(); ++i) lab[i] = static_cast<uint8_t>(rng.uniform_int(0, 1));
            CHECK(loss_fd_err(z, [&](Var<double> v) { return loss::cross_entropy_labels(v, lab); }) < 1e-4);
        }
    }
}

TEST_CASE("binary supervision loss: both modes") {
    Rng rng(14);
    auto g = random_binary<double>({1, 1, 6, 6}, rng);
    LossConfig cfg;
    SupervisionTargets<double> targets;
    targets.binary = g;
    // perfect attention map: near-zero loss in dice+ce mode
    Tensor<double> y = g.clone();
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = y[i] > 0.5 ? 1.0 - 1e-7 : 1e-7;
    cfg.binary_loss = BinaryLossKind::DiceCE;
    CHECK(binary_supervision_loss(constant(y.clone()), targets, cfg)->value[0] < 1e-5);
    cfg.binary_loss = BinaryLossKind::DiceFocal;
    CHECK(binary_supervision_loss(constant(y.clone()), targets, cfg)->value[0] < 1e-5);

    // y = 0.5 with half-ones target: strictly positive and finite
    Tensor<double> half({1, 1, 6, 6}, 0.5);
    Tensor<double> halfones({1, 1, 6, 6}, 0.0);
    for (int64_t i = 0; i < 18; ++i) halfones[i] = 1.0;
    targets.binary = halfones;
    for (const BinaryLossKind kind : {BinaryLossKind::DiceFocal, BinaryLossKind::DiceCE}) {
        cfg.binary_loss = kind;
        const double v = binary_supervision_loss(constant(half.clone()), targets, cfg)->value[0];
        CHECK(v > 0.0);
        CHECK(std::isfinite(v));
    }
    // resolution contract
    Tensor<double> tiny({1, 1, 3, 3}, 0.5);
    CHECK_THROWS_AS(binary_supervision_loss(constant(tiny), targets, cfg), ShapeError);
}

TEST_CASE("gradient check of the composed dice+focal and dice+ce combinations") {
    for (uint64_t seed = 0; seed < 3; ++seed) {
        Rng rng(200 + seed);
        auto p = random_probs({1, 1, 8, 8}, rng);
        auto g = random_binary<double>({1, 1, 8, 8}, rng);
        LossConfig cfg;
        SupervisionTargets<double> targets;
        targets.binary = g;
        cfg.binary_loss = BinaryLossKind::DiceFocal;
        CHECK(loss_fd_err(p, [&](Var<double> v) { return binary_supervision_loss(v, targets, cfg); }) < 1e-4);
        cfg.binary_loss = BinaryLossKind::DiceCE;
        CHECK(loss_fd_err(p, [&](Var<double> v) { return binary_supervision_loss(v, targets, cfg); }) < 1e-4);
    }
}

TEST_CASE("total loss: term counts follow the supervision flags (Eq. 7)") {
    Rng rng(15);
    const Shape logit_shape{2, 3, 8, 8};
    U8Tensor labels({2, 8, 8});
    for (int64_t i = 0; i < labels.numel(); ++i) labels[i] = static_cast<uint8_t>(rng.uniform_int(0, 2));
    const auto targets = make_targets<double>(labels, OutputMode::SoftmaxLabels, 3);
    LossConfig cfg;

    auto main = constant(random_tensor<double>(logit_shape, rng));
    std::vector<Var<double>> aux;
    for (int i = 0; i < 3; ++i) aux.push_back(constant(random_tensor<double>(logit_shape, rng)));
    auto y = constant(random_probs({2, 1, 8, 8}, rng));

    // aux disabled, IS disabled: main term only
    auto [l1, b1] = total_loss(main, {}, Var<double>{}, targets, cfg, OutputMode::SoftmaxLabels, false, false);
    CHECK(b1.terms.size() == 1);
    CHECK(l1->value[0] == doctest::Approx(b1.terms.at("main")));

    // full: 5 terms, unit weights
    auto [l2, b2] = total_loss(main, aux, y, targets, cfg, OutputMode::SoftmaxLabels, true, true);
    CHECK(b2.terms.size() == 5);
    double s = 0;
    for (const auto& [k, v] : b2.terms) s += v;
    CHECK(l2->value[0] == doctest::Approx(s).epsilon(1e-6));

    // all four multiclass predictions equal: multiclass part = 4x main
    auto [l3, b3] = total_loss(main, {main, main, main}, Var<double>{}, targets, cfg, OutputMode::SoftmaxLabels,
                               true, false);
    CHECK(l3->value[0] == doctest::Approx(4.0 * b3.terms.at("main")).epsilon(1e-9));

    // contract errors
    CHECK_THROWS_AS(total_loss(main, {}, Var<double>{}, targets, cfg, OutputMode::SoftmaxLabels, true, false),
                    ConfigError);
    CHECK_THROWS_AS(total_loss(main, aux, Var<double>{}, targets, cfg, OutputMode::SoftmaxLabels, true, true),
                    ConfigError);
}

TEST_CASE("losses are non-negative, finite, and zero only at a perfect match") {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        auto p = random_probs({1, 2, 5, 5}, rng);
        auto g = random_binary<double>({1, 2, 5, 5}, rng);
        for (double v : {loss::dice(constant(p.clone()), g, 1e-5)->value[0],
                         loss::focal(constant(p.clone()), g, 2.0, 0.25)->value[0],
                         loss::focal_tversky(constant(p.clone()), g, 0.7, 0.3, 0.75)->value[0],
                         loss::bce_probs(constant(p.clone()), g)->value[0]}) {
            CHECK(v >= 0.0);
            CHECK(std::isfinite(v));
            // imperfect predictions score strictly above the perfect-match epsilon
            bool differs = false;
            for (int64_t i = 0; i < p.numel() && !differs; ++i) differs = std::abs(p[i] - g[i]) > 0.02;
            if (differs) CHECK(v > 1e-5);
        }
        // perfect match scores (near) zero for every loss
        Tensor<double> sharp = g.clone();
        for (int64_t i = 0; i < sharp.numel(); ++i) sharp[i] = sharp[i] > 0.5 ? 1.0 - 1e-9 : 1e-9;
        CHECK(loss::dice(constant(sharp.clone()), g, 1e-5)->value[0] < 1e-5);
        CHECK(loss::focal(constant(sharp.clone()), g, 2.0, 0.25)->value[0] < 1e-5);
        CHECK(loss::focal_tversky(constant(sharp.clone()), g, 0.7, 0.3, 0.75)->value[0] < 1e-5);
    }
}

TEST_CASE("losses are permutation- and translation-invariant reductions") {
    Rng rng(16);
    auto p = random_probs({2, 2, 4, 4}, rng);
    auto g = random_binary<double>({2, 2, 4, 4}, rng);
    // swap the two batch entries
    Tensor<double> p2 = p.clone(), g2 = g.clone();
    const int64_t half = p.numel() / 2;
    for (int64_t i = 0; i < half; ++i) {
        std::swap(p2[i], p2[half + i]);
        std::swap(g2[i], g2[half + i]);
    }
    CHECK(loss::dice(constant(p.clone()), g, 1e-5)->value[0] ==
          doctest::Approx(loss::dice(constant(p2.clone()), g2, 1e-5)->value[0]).epsilon(1e-12));
    CHECK(loss::focal_tversky(constant(p.clone()), g, 0.7, 0.3, 0.75)->value[0] ==
          doctest::Approx(loss::focal_tversky(constant(p2.clone()), g2, 0.7, 0.3, 0.75)->value[0]).epsilon(1e-12));
    // circular spatial shift of both predictions and targets
    auto roll = [](const Tensor<double>& t) {
        Tensor<double> out(t.shape());
        const int64_t w = t.shape().back();
        for (int64_t i = 0; i < t.numel(); ++i) {
            const int64_t row = i / w, col = i % w;
            out[row * w + (col + 1) % w] = t[i];
        }
        return out;
    };
    CHECK(loss::focal(constant(p.clone()), g, 2.0, 0.25)->value[0] ==
          doctest::Approx(loss::focal(constant(roll(p)), roll(g), 2.0, 0.25)->value[0]).epsilon(1e-12));
}
