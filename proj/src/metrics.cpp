#include "panet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "panet/losses.hpp"

namespace panet {

ConfusionCounts confusion_counts(const U8Tensor& pred, const U8Tensor& gt) {
    require(same_shape(pred.shape(), gt.shape()),
            "confusion_counts: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
    ConfusionCounts c;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const bool p = pred[i] != 0, g = gt[i] != 0;
        if (p && g)
            ++c.tp;
        else if (p && !g)
            ++c.fp;
        else if (!p && g)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

double dice_score(const ConfusionCounts& c) {
    const int64_t denom = 2 * c.tp + c.fp + c.fn;
    if (denom == 0) return 1.0;  // both masks empty
    return 2.0 * c.tp / denom;
}

double precision_score(const ConfusionCounts& c) {
    if (c.tp + c.fp == 0) return c.fn == 0 ? 1.0 : 0.0;
    return static_cast<double>(c.tp) / (c.tp + c.fp);
}

double recall_score(const ConfusionCounts& c) {
    if (c.tp + c.fn == 0) return c.fp == 0 ? 1.0 : 0.0;
    return static_cast<double>(c.tp) / (c.tp + c.fn);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-D lower envelope of parabolas on arbitrary sample positions
// (Felzenszwalb & Huttenlocher generalized to non-unit spacing).
void edt_1d(const std::vector<double>& pos, std::vector<double>& f, std::vector<double>& out,
            std::vector<int>& v, std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        while (k >= 0) {
            const int p = v[k];
            if (f[p] == kInf) {
                --k;
                continue;
            }
            const double s = (f[q] + pos[q] * pos[q] - f[p] - pos[p] * pos[p]) / (2 * pos[q] - 2 * pos[p]);
            if (s <= z[k])
                --k;
            else {
                ++k;
                v[k] = q;
                z[k] = s;
                z[k + 1] = kInf;
                break;
            }
        }
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
        }
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        if (f[v[0]] == kInf) {
            out[q] = kInf;
            continue;
        }
        while (z[j + 1] < pos[q]) ++j;
        const double d = pos[q] - pos[v[j]];
        out[q] = d * d + f[v[j]];
    }
}

// Face-adjacency surface: a foreground element with any background neighbour
// (the outside of the grid counts as background).
std::vector<uint8_t> surface_mask(const U8Tensor& mask) {
    const Shape& s = mask.shape();
    const int nd = static_cast<int>(s.size());
    std::vector<uint8_t> out(static_cast<size_t>(mask.numel()), 0);
    std::vector<int64_t> strides(nd, 1);
    for (int d = nd - 2; d >= 0; --d) strides[d] = strides[d + 1] * s[d + 1];
    std::vector<int64_t> idx(nd, 0);
    for (int64_t flat = 0; flat < mask.numel(); ++flat) {
        if (mask[flat]) {
            bool boundary = false;
            for (int d = 0; d < nd && !boundary; ++d) {
                if (idx[d] == 0 || idx[d] == s[d] - 1)
                    boundary = true;
                else if (!mask[flat - strides[d]] || !mask[flat + strides[d]])
                    boundary = true;
            }
            out[static_cast<size_t>(flat)] = boundary;
        }
        for (int d = nd - 1; d >= 0; --d) {
            if (++idx[d] < s[d]) break;
            idx[d] = 0;
        }
    }
    return out;
}

}  // namespace

std::vector<double> squared_edt(const std::vector<uint8_t>& features, const Shape& shape,
                                const std::vector<double>& spacing) {
    const int nd = static_cast<int>(shape.size());
    const int64_t total = numel_of(shape);
    std::vector<double> dist(static_cast<size_t>(total));
    for (int64_t i = 0; i < total; ++i) dist[static_cast<size_t>(i)] = features[static_cast<size_t>(i)] ? 0.0 : kInf;

    std::vector<int64_t> strides(nd, 1);
    for (int d = nd - 2; d >= 0; --d) strides[d] = strides[d + 1] * shape[d + 1];

    for (int axis = 0; axis < nd; ++axis) {
        const int64_t n = shape[axis];
        if (n == 1) continue;
        std::vector<double> pos(static_cast<size_t>(n)), f(static_cast<size_t>(n)), out(static_cast<size_t>(n)),
            z(static_cast<size_t>(n + 1));
        std::vector<int> v(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) pos[static_cast<size_t>(i)] = i * spacing[axis];
        const int64_t lines = total / n;
        const int64_t stride = strides[axis];
        for (int64_t line = 0; line < lines; ++line) {
            // base index of this scan line
            int64_t rem = line, base = 0;
            for (int d = nd - 1; d >= 0; --d) {
                if (d == axis) continue;
                const int64_t coord = rem % shape[d];
                rem /= shape[d];
                base += coord * strides[d];
            }
            bool any = false;
            for (int64_t i = 0; i < n; ++i) {
                f[static_cast<size_t>(i)] = dist[static_cast<size_t>(base + i * stride)];
                any |= f[static_cast<size_t>(i)] != kInf;
            }
            if (!any) continue;
            edt_1d(pos, f, out, v, z);
            for (int64_t i = 0; i < n; ++i) dist[static_cast<size_t>(base + i * stride)] = out[static_cast<size_t>(i)];
        }
    }
    return dist;
}

double percentile_value(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * q / 100.0;
    const size_t lo = static_cast<size_t>(h);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - lo) * (values[lo + 1] - values[lo]);
}

double hausdorff_distance(const U8Tensor& pred, const U8Tensor& gt, const std::vector<double>& spacing_mm,
                          const HdOptions& opts) {
    require(same_shape(pred.shape(), gt.shape()), "hausdorff: shape mismatch");
    require(spacing_mm.size() == pred.shape().size(), "hausdorff: spacing rank mismatch");
    for (double s : spacing_mm)
        if (s <= 0) throw DataError("hausdorff: spacing must be positive");
    bool pred_any = false, gt_any = false;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        pred_any |= pred[i] != 0;
        gt_any |= gt[i] != 0;
    }
    if (!pred_any && !gt_any) return 0.0;
    if (!pred_any || !gt_any) return opts.empty_penalty;

    const auto pred_surf = surface_mask(pred);
    const auto gt_surf = surface_mask(gt);
    const auto d_to_gt = squared_edt(gt_surf, pred.shape(), spacing_mm);
    const auto d_to_pred = squared_edt(pred_surf, pred.shape(), spacing_mm);

    std::vector<double> pooled;
    for (size_t i = 0; i < pred_surf.size(); ++i) {
        if (pred_surf[i]) pooled.push_back(std::sqrt(d_to_gt[i]));
        if (gt_surf[i]) pooled.push_back(std::sqrt(d_to_pred[i]));
    }
    return percentile_value(std::move(pooled), opts.percentile);
}

EvalSpec eval_spec_from_string(const std::string& s) {
    if (s == "covid-2d") return EvalSpec::Covid2d;
    if (s == "brats-3d") return EvalSpec::Brats3d;
    throw ConfigError("unknown evaluation spec '" + s + "' (expected covid-2d or brats-3d)");
}

std::vector<std::string> eval_class_names(EvalSpec spec) {
    if (spec == EvalSpec::Covid2d) return {"GGO", "CON."};
    return {"ET", "TC", "WT"};
}

CaseRecord evaluate_case(const U8Tensor& pred_labels, const U8Tensor& gt_labels, EvalSpec spec,
                         const std::vector<double>& spacing_mm, const HdOptions& hd) {
    require(same_shape(pred_labels.shape(), gt_labels.shape()), "evaluate_case: label map shape mismatch");
    CaseRecord rec;
    auto binarize = [](const U8Tensor& labels, auto pred) {
        U8Tensor out(labels.shape());
        for (int64_t i = 0; i < labels.numel(); ++i) out[i] = pred(labels[i]) ? 1 : 0;
        return out;
    };
    std::vector<std::pair<std::string, U8Tensor>> pred_masks, gt_masks;
    if (spec == EvalSpec::Covid2d) {
        const std::vector<std::pair<std::string, uint8_t>> classes{{"GGO", 1}, {"CON.", 2}};
        for (const auto& [name, label] : classes) {
            const uint8_t want = label;
            pred_masks.emplace_back(name, binarize(pred_labels, [want](uint8_t v) { return v == want; }));
            gt_masks.emplace_back(name, binarize(gt_labels, [want](uint8_t v) { return v == want; }));
        }
    } else {
        const U8Tensor pr = regions_from_labels(pred_labels);
        const U8Tensor gr = regions_from_labels(gt_labels);
        const int64_t sp = pred_labels.numel();
        const std::vector<std::string> names = eval_class_names(spec);
        for (int r = 0; r < 3; ++r) {
            U8Tensor pm(pred_labels.shape()), gm(pred_labels.shape());
            std::copy(pr.data() + r * sp, pr.data() + (r + 1) * sp, pm.data());
            std::copy(gr.data() + r * sp, gr.data() + (r + 1) * sp, gm.data());
            pred_masks.emplace_back(names[static_cast<size_t>(r)], pm);
            gt_masks.emplace_back(names[static_cast<size_t>(r)], gm);
        }
    }
    for (size_t i = 0; i < pred_masks.size(); ++i) {
        ClassMetrics m;
        m.counts = confusion_counts(pred_masks[i].second, gt_masks[i].second);
        m.dice = dice_score(m.counts);
        m.precision = precision_score(m.counts);
        m.recall = recall_score(m.counts);
        m.hd95 = hausdorff_distance(pred_masks[i].second, gt_masks[i].second, spacing_mm, hd);
        rec.per_class[pred_masks[i].first] = m;
    }
    return rec;
}

std::map<std::string, std::map<std::string, Aggregate>> MetricReport::aggregate() const {
    std::map<std::string, std::map<std::string, std::vector<double>>> values;
    for (const auto& [id, rec] : per_case)
        for (const auto& [cls, m] : rec.per_class) {
            values[cls]["dice"].push_back(m.dice);
            values[cls]["precision"].push_back(m.precision);
            values[cls]["recall"].push_back(m.recall);
            values[cls]["hd95"].push_back(m.hd95);
        }
    std::map<std::string, std::map<std::string, Aggregate>> out;
    for (const auto& [cls, metrics] : values)
        for (const auto& [metric, vals] : metrics) {
            Aggregate a;
            for (double v : vals) a.mean += v;
            a.mean /= static_cast<double>(vals.size());
            for (double v : vals) a.stddev += (v - a.mean) * (v - a.mean);
            a.stddev = vals.size() > 1 ? std::sqrt(a.stddev / (static_cast<double>(vals.size()) - 1)) : 0.0;
            out[cls][metric] = a;
        }
    return out;
}

std::string MetricReport::format_table(const std::string& model_name) const {
    const auto agg = aggregate();
    std::ostringstream os;
    os << std::fixed << std::setprecision(3);
    os << "Model: " << model_name << "  (" << per_case.size() << " cases)\n";
    os << std::left << std::setw(8) << "Class" << std::right << std::setw(10) << "Dice" << std::setw(12)
       << "Precision" << std::setw(10) << "Recall" << std::setw(12) << "HD95" << "\n";
    for (const auto& [cls, metrics] : agg) {
        os << std::left << std::setw(8) << cls << std::right;
        os << std::setw(10) << metrics.at("dice").mean << std::setw(12) << metrics.at("precision").mean
           << std::setw(10) << metrics.at("recall").mean << std::setw(12) << metrics.at("hd95").mean << "\n";
    }
    return os.str();
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    for (const auto& [id, rec] : per_case) {
        nlohmann::json jr;
        for (const auto& [cls, m] : rec.per_class)
            jr[cls] = {{"dice", m.dice},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"hd95", m.hd95},
                       {"tp", m.counts.tp},
                       {"fp", m.counts.fp},
                       {"tn", m.counts.tn},
                       {"fn", m.counts.fn}};
        j["cases"][id] = jr;
    }
    for (const auto& [cls, metrics] : aggregate())
        for (const auto& [metric, a] : metrics)
            j["aggregate"][cls][metric] = {{"mean", a.mean}, {"std", a.stddev}};
    return j.dump(2);
}

MetricReport merge_reports(const MetricReport& a, const MetricReport& b) {
    MetricReport out = a;
    for (const auto& [id, rec] : b.per_case) {
        if (out.per_case.count(id)) throw DataError("merge_reports: duplicate case id '" + id + "'");
        out.per_case[id] = rec;
    }
    return out;
}

}  // namespace panet
