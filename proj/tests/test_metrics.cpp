#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "panet/metrics.hpp"
#include "test_helpers.hpp"

using namespace panet;
using panet::testing::random_mask;

namespace {

// O(n^2) pairwise surface-distance oracle, independent of the EDT path.
double brute_force_hd(const U8Tensor& pred, const U8Tensor& gt, const std::vector<double>& spacing, double q,
                      double penalty) {
    const Shape& s = pred.shape();
    const int nd = static_cast<int>(s.size());
    auto surface_points = [&](const U8Tensor& m) {
        std::vector<std::vector<int64_t>> pts;
        std::vector<int64_t> strides(nd, 1);
        for (int d = nd - 2; d >= 0; --d) strides[d] = strides[d + 1] * s[d + 1];
        std::vector<int64_t> idx(nd, 0);
        for (int64_t flat = 0; flat < m.numel(); ++flat) {
            if (m[flat]) {
                bool surf = false;
                for (int d = 0; d < nd && !surf; ++d) {
                    if (idx[d] == 0 || idx[d] == s[d] - 1)
                        surf = true;
                    else if (!m[flat - strides[d]] || !m[flat + strides[d]])
                        surf = true;
                }
                if (surf) pts.push_back(idx);
            }
            for (int d = nd - 1; d >= 0; --d) {
                if (++idx[d] < s[d]) break;
                idx[d] = 0;
            }
        }
        return pts;
    };
    const auto ps = surface_points(pred), gs = surface_points(gt);
    bool pa = false, ga = false;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        pa |= pred[i] != 0;
        ga |= gt[i] != 0;
    }
    if (!pa && !ga) return 0.0;
    if (!pa || !ga) return penalty;
    auto directed = [&](const std::vector<std::vector<int64_t>>& from, const std::vector<std::vector<int64_t>>& to) {
        std::vector<double> out;
        for (const auto& p : from) {
            double best = 1e300;
            for (const auto& g : to) {
                double d2 = 0;
                for (int d = 0; d < nd; ++d) {
                    const double diff = (p[d] - g[d]) * spacing[d];
                    d2 += diff * diff;
                }
                best = std::min(best, d2);
            }
            out.push_back(std::sqrt(best));
        }
        return out;
    };
    std::vector<double> pooled = directed(ps, gs);
    for (double v : directed(gs, ps)) pooled.push_back(v);
    return percentile_value(std::move(pooled), q);
}

}  // namespace

TEST_CASE("confusion counts by direct enumeration") {
    U8Tensor pred({4}), gt({4});
    pred[0] = 1; pred[1] = 1; pred[2] = 0; pred[3] = 0;
    gt[0] = 1; gt[1] = 0; gt[2] = 1; gt[3] = 0;
    const auto c = confusion_counts(pred, gt);
    CHECK(c.tp == 1);
    CHECK(c.fp == 1);
    CHECK(c.fn == 1);
    CHECK(c.tn == 1);
    CHECK(c.total() == 4);

    const auto eq = confusion_counts(gt, gt);
    CHECK(eq.fp == 0);
    CHECK(eq.fn == 0);

    U8Tensor inv({4});
    for (int i = 0; i < 4; ++i) inv[i] = 1 - gt[i];
    const auto ne = confusion_counts(inv, gt);
    CHECK(ne.tp == 0);
    CHECK(ne.tn == 0);
}

TEST_CASE("dice / precision / recall formulas and conventions") {
    ConfusionCounts c{1, 1, 0, 1};
    CHECK(dice_score(c) == doctest::Approx(0.5));
    CHECK(precision_score(c) == doctest::Approx(0.5));
    CHECK(recall_score(c) == doctest::Approx(0.5));

    ConfusionCounts perfect{10, 0, 5, 0};
    CHECK(dice_score(perfect) == 1.0);
    CHECK(precision_score(perfect) == 1.0);
    CHECK(recall_score(perfect) == 1.0);

    ConfusionCounts empty{0, 0, 7, 0};
    CHECK(dice_score(empty) == 1.0);
    CHECK(precision_score(empty) == 1.0);
    CHECK(recall_score(empty) == 1.0);
}

TEST_CASE("metric oracle: formulas match enumeration on random masks; F1 identity") {
    Rng rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const auto pred = random_mask({6, 7}, rng, rng.uniform(0.1, 0.9));
        const auto gt = random_mask({6, 7}, rng, rng.uniform(0.1, 0.9));
        const auto c = confusion_counts(pred, gt);
        int64_t tp = 0, fp = 0, tn = 0, fn = 0;
        for (int64_t i = 0; i < pred.numel(); ++i) {
            tp += pred[i] && gt[i];
            fp += pred[i] && !gt[i];
            fn += !pred[i] && gt[i];
            tn += !pred[i] && !gt[i];
        }
        CHECK(c.tp == tp);
        CHECK(c.fp == fp);
        CHECK(c.fn == fn);
        CHECK(c.tn == tn);
        const double d = dice_score(c), p = precision_score(c), r = recall_score(c);
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
        if (tp + fp > 0 && tp + fn > 0 && p + r > 0) CHECK(d == doctest::Approx(2 * p * r / (p + r)).epsilon(1e-12));
    }
}

TEST_CASE("hausdorff: exact cases") {
    U8Tensor a({8, 8}), b({8, 8});
    a.at({2, 2}) = 1;
    b.at({2, 5}) = 1;  // 3 apart on one axis
    CHECK(hausdorff_distance(a, b, {1.0, 1.0}) == doctest::Approx(3.0));
    CHECK(hausdorff_distance(a, b, {1.0, 1.0}, {100.0, 373.13}) == doctest::Approx(3.0));
    CHECK(hausdorff_distance(a, a, {1.0, 1.0}) == doctest::Approx(0.0));

    // anisotropic spacing scales the axis
    CHECK(hausdorff_distance(a, b, {1.0, 2.5}) == doctest::Approx(7.5));

    U8Tensor empty({8, 8});
    CHECK(hausdorff_distance(empty, empty, {1.0, 1.0}) == 0.0);
    CHECK(hausdorff_distance(a, empty, {1.0, 1.0}) == doctest::Approx(373.13));
    HdOptions opts;
    opts.empty_penalty = 55.0;
    CHECK(hausdorff_distance(empty, a, {1.0, 1.0}, opts) == doctest::Approx(55.0));
}

TEST_CASE("hausdorff oracle: EDT path equals brute force on random masks") {
    Rng rng(22);
    for (int trial = 0; trial < 20; ++trial) {
        const auto pred2 = random_mask({16, 16}, rng, 0.3);
        const auto gt2 = random_mask({16, 16}, rng, 0.3);
        const std::vector<double> sp2{rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)};
        for (double q : {95.0, 100.0}) {
            HdOptions opts;
            opts.percentile = q;
            CHECK(hausdorff_distance(pred2, gt2, sp2, opts) ==
                  doctest::Approx(brute_force_hd(pred2, gt2, sp2, q, opts.empty_penalty)).epsilon(1e-9));
        }
        const auto pred3 = random_mask({8, 8, 8}, rng, 0.25);
        const auto gt3 = random_mask({8, 8, 8}, rng, 0.25);
        const std::vector<double> sp3{1.0, rng.uniform(0.5, 2.0), 1.0};
        HdOptions opts;
        CHECK(hausdorff_distance(pred3, gt3, sp3, opts) ==
              doctest::Approx(brute_force_hd(pred3, gt3, sp3, 95.0, opts.empty_penalty)).epsilon(1e-9));
    }
}

TEST_CASE("hausdorff is symmetric and translation invariant") {
    Rng rng(23);
    const auto a = random_mask({12, 12}, rng, 0.3);
    const auto b = random_mask({12, 12}, rng, 0.3);
    CHECK(hausdorff_distance(a, b, {1.0, 1.0}) == doctest::Approx(hausdorff_distance(b, a, {1.0, 1.0})));

    // interior masks shifted by (3,2) keep their distance
    U8Tensor a0({20, 20}), b0({20, 20}), a1({20, 20}), b1({20, 20});
    Rng rng2(24);
    for (int64_t y = 4; y < 9; ++y)
        for (int64_t x = 4; x < 9; ++x) {
            const uint8_t va = rng2.bernoulli(0.5), vb = rng2.bernoulli(0.5);
            a0.at({y, x}) = va;
            b0.at({y, x}) = vb;
            a1.at({y + 3, x + 2}) = va;
            b1.at({y + 3, x + 2}) = vb;
        }
    CHECK(hausdorff_distance(a0, b0, {1.0, 1.0}) == doctest::Approx(hausdorff_distance(a1, b1, {1.0, 1.0})));
}

TEST_CASE("evaluate_case: covid classes and brats regions") {
    U8Tensor pred({6, 6}), gt({6, 6});
    for (int64_t i = 0; i < 6; ++i) {
        pred[i] = 1;
        gt[i] = 1;  // GGO row
        pred[6 + i] = 2;
        gt[6 + i] = 2;  // CON row
    }
    const auto rec = evaluate_case(pred, gt, EvalSpec::Covid2d, {1.0, 1.0});
    CHECK(rec.per_class.at("GGO").dice == 1.0);
    CHECK(rec.per_class.at("CON.").dice == 1.0);
    CHECK(rec.per_class.at("GGO").hd95 == 0.0);

    // nested-sphere phantom, perfect prediction
    U8Tensor vol({8, 8, 8});
    for (int64_t z = 0; z < 8; ++z)
        for (int64_t y = 0; y < 8; ++y)
            for (int64_t x = 0; x < 8; ++x) {
                const double d = std::sqrt((z - 4.0) * (z - 4.0) + (y - 4.0) * (y - 4.0) + (x - 4.0) * (x - 4.0));
                vol.at({z, y, x}) = d < 1.5 ? 4 : d < 2.5 ? 1 : d < 3.5 ? 2 : 0;
            }
    const auto rec3 = evaluate_case(vol, vol, EvalSpec::Brats3d, {1.0, 1.0, 1.0});
    for (const auto& cls : {"ET", "TC", "WT"}) {
        CHECK(rec3.per_class.at(cls).dice == 1.0);
        CHECK(rec3.per_class.at(cls).hd95 == 0.0);
    }

    // absent region on both sides: dice 1.0, hd 0.0 by convention
    U8Tensor no_et({4, 4, 4});
    no_et.at({1, 1, 1}) = 2;
    const auto rec4 = evaluate_case(no_et, no_et, EvalSpec::Brats3d, {1.0, 1.0, 1.0});
    CHECK(rec4.per_class.at("ET").dice == 1.0);
    CHECK(rec4.per_class.at("ET").hd95 == 0.0);
}

TEST_CASE("report merge: identity, commutativity, aggregate recomputation") {
    Rng rng(25);
    auto make_report = [&](const std::string& prefix, int n) {
        MetricReport r;
        for (int i = 0; i < n; ++i) {
            CaseRecord rec;
            for (const auto& cls : {"GGO", "CON."}) {
                ClassMetrics m;
                m.dice = rng.uniform();
                m.precision = rng.uniform();
                m.recall = rng.uniform();
                m.hd95 = rng.uniform(0, 20);
                rec.per_class[cls] = m;
            }
            r.per_case[prefix + std::to_string(i)] = rec;
        }
        return r;
    };
    const auto a = make_report("a", 4), b = make_report("b", 3);
    const MetricReport empty;
    CHECK(merge_reports(a, empty).per_case.size() == 4);
    const auto ab = merge_reports(a, b), ba = merge_reports(b, a);
    CHECK(ab.per_case.size() == 7);
    const auto agg_ab = ab.aggregate(), agg_ba = ba.aggregate();
    for (const auto& [cls, metrics] : agg_ab)
        for (const auto& [metric, v] : metrics) {
            CHECK(v.mean == doctest::Approx(agg_ba.at(cls).at(metric).mean).epsilon(1e-12));
            CHECK(v.stddev == doctest::Approx(agg_ba.at(cls).at(metric).stddev).epsilon(1e-12));
        }
    // aggregate mean equals mean over concatenated per-case values
    double mean_dice = 0;
    for (const auto& [id, rec] : ab.per_case) mean_dice += rec.per_class.at("GGO").dice;
    mean_dice /= static_cast<double>(ab.per_case.size());
    CHECK(agg_ab.at("GGO").at("dice").mean == doctest::Approx(mean_dice).epsilon(1e-12));

    CHECK_THROWS_AS(merge_reports(a, a), DataError);
    CHECK_FALSE(ab.format_table("test").empty());
    CHECK_FALSE(ab.to_json().empty());
}

TEST_CASE("percentile: linear interpolation, 100 recovers the maximum") {
    std::vector<double> v{3.0, 1.0, 2.0, 4.0};
    CHECK(percentile_value(v, 100.0) == 4.0);
    CHECK(percentile_value(v, 0.0) == 1.0);
    CHECK(percentile_value(v, 50.0) == doctest::Approx(2.5));
}
