#pragma once

#include <map>
#include <string>

#include "panet/autograd/ops.hpp"

namespace panet {

enum class BinaryLossKind { DiceFocal, DiceCE };
enum class MulticlassLossKind { FocalTversky, DiceCE };
enum class OutputMode { SoftmaxLabels, SigmoidRegions };

struct LossConfig {
    BinaryLossKind binary_loss = BinaryLossKind::DiceFocal;
    MulticlassLossKind multiclass_loss = MulticlassLossKind::FocalTversky;
    double focal_gamma = 2.0;
    double focal_alpha = 0.25;
    double tversky_alpha = 0.7;
    double tversky_beta = 0.3;
    double ftl_exponent = 0.75;
    double dice_smooth = 1e-5;

    void validate() const {
        if (std::abs(tversky_alpha + tversky_beta - 1.0) > 1e-9)
            throw ConfigError("loss: tversky_alpha + tversky_beta must equal 1.0");
        if (focal_gamma < 0 || focal_alpha < 0 || ftl_exponent <= 0 || dice_smooth < 0)
            throw ConfigError("loss: weights and exponents must be non-negative");
    }
};

namespace loss {

// Soft Dice with squared denominator terms, one score per (sample, channel),
// averaged over both.
template <typename T>
Var<T> dice(const Var<T>& p, const Tensor<T>& g, double smooth) {
    const Shape& s = p->value.shape();
    require(same_shape(s, g.shape()), "dice: shape mismatch " + shape_str(s) + " vs " + shape_str(g.shape()));
    const int64_t n = s[0], c = s[1], sp = numel_of(s) / (n * c);
    std::vector<double> inter(n * c), psq(n * c), gsq(n * c);
    double total = 0.0;
    for (int64_t j = 0; j < n * c; ++j) {
        const T* pp = p->value.data() + j * sp;
        const T* gp = g.data() + j * sp;
        double i = 0, u = 0, v = 0;
        for (int64_t k = 0; k < sp; ++k) {
            i += static_cast<double>(pp[k]) * gp[k];
            u += static_cast<double>(pp[k]) * pp[k];
            v += static_cast<double>(gp[k]) * gp[k];
        }
        inter[j] = i;
        psq[j] = u;
        gsq[j] = v;
        total += 1.0 - (2.0 * i + smooth) / (u + v + smooth);
    }
    Tensor<T> out({1}, static_cast<T>(total / (n * c)));
    Tensor<T> pv = p->value;
    return make_node<T>(std::move(out), {p}, [p, pv, g, inter, psq, gsq, smooth, n, c, sp](const Tensor<T>& gr) {
        if (!p->requires_grad) return;
        Tensor<T>& gp = ensure_grad(p);
        const double scale = static_cast<double>(gr[0]) / (n * c);
        for (int64_t j = 0; j < n * c; ++j) {
            const double denom = psq[j] + gsq[j] + smooth;
            const double num = 2.0 * inter[j] + smooth;
            const T* pp = pv.data() + j * sp;
            const T* gg = g.data() + j * sp;
            T* out = gp.data() + j * sp;
            for (int64_t k = 0; k < sp; ++k) {
                const double d = -(2.0 * gg[k] * denom - num * 2.0 * pp[k]) / (denom * denom);
                out[k] += static_cast<T>(scale * d);
            }
        }
    });
}

// Mean of -alpha * (1 - p_t)^gamma * log(p_t); probabilities clamped to
// [eps, 1-eps] with zero gradient outside the kept range.
template <typename T>
Var<T> focal(const Var<T>& p, const Tensor<T>& g, double gamma, double alpha, double eps = 1e-7) {
    const Shape& s = p->value.shape();
    require(same_shape(s, g.shape()), "focal: shape mismatch");
    const int64_t n = p->value.numel();
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double pc = std::min(1.0 - eps, std::max(eps, static_cast<double>(p->value[i])));
        const double pt = g[i] > T(0.5) ? pc : 1.0 - pc;
        total += -alpha * std::pow(1.0 - pt, gamma) * std::log(pt);
    }
    Tensor<T> out({1}, static_cast<T>(total / n));
    Tensor<T> pv = p->value;
    return make_node<T>(std::move(out), {p}, [p, pv, g, gamma, alpha, eps, n](const Tensor<T>& gr) {
        if (!p->requires_grad) return;
        Tensor<T>& gp = ensure_grad(p);
        const double scale = static_cast<double>(gr[0]) / n;
        for (int64_t i = 0; i < n; ++i) {
            const double praw = static_cast<double>(pv[i]);
            if (praw < eps || praw > 1.0 - eps) continue;  // clamped: zero gradient
            const bool pos = g[i] > T(0.5);
            const double pt = pos ? praw : 1.0 - praw;
            const double om = 1.0 - pt;
            const double dpt = gamma > 0.0
                                   ? alpha * gamma * std::pow(om, gamma - 1.0) * std::log(pt) - alpha * std::pow(om, gamma) / pt
                                   : -alpha / pt;
            gp[i] += static_cast<T>(scale * dpt * (pos ? 1.0 : -1.0));
        }
    });
}

// Mean over channels of (1 - TI_c)^exponent with TI pooled over batch and
// space per channel.
template <typename T>
Var<T> focal_tversky(const Var<T>& p, const Tensor<T>& g, double t_alpha, double t_beta, double exponent,
                     double smooth = 1e-5) {
    const Shape& s = p->value.shape();
    require(same_shape(s, g.shape()), "focal_tversky: shape mismatch");
    const int64_t n = s[0], c = s[1], sp = numel_of(s) / (n * c);
    std::vector<double> ti(c), denom(c);
    double total = 0.0;
    for (int64_t ch = 0; ch < c; ++ch) {
        double inter = 0, fp = 0, fn = 0;
        for (int64_t b = 0; b < n; ++b) {
            const T* pp = p->value.data() + (b * c + ch) * sp;
            const T* gp = g.data() + (b * c + ch) * sp;
            for (int64_t k = 0; k < sp; ++k) {
                const double pd = pp[k], gd = gp[k];
                inter += pd * gd;
                fp += (1.0 - gd) * pd;
                fn += gd * (1.0 - pd);
            }
        }
        denom[ch] = inter + t_alpha * fp + t_beta * fn + smooth;
        ti[ch] = (inter + smooth) / denom[ch];
        total += std::pow(1.0 - ti[ch], exponent);
    }
    Tensor<T> out({1}, static_cast<T>(total / c));
    Tensor<T> pv = p->value;
    return make_node<T>(std::move(out), {p},
                        [p, pv, g, ti, denom, t_alpha, t_beta, exponent, smooth, n, c, sp](const Tensor<T>& gr) {
                            if (!p->requires_grad) return;
                            Tensor<T>& gp = ensure_grad(p);
                            const double scale = static_cast<double>(gr[0]) / c;
                            for (int64_t ch = 0; ch < c; ++ch) {
                                const double num = ti[ch] * denom[ch];  // inter + smooth
                                const double outer =
                                    exponent * std::pow(std::max(0.0, 1.0 - ti[ch]), exponent - 1.0);
                                for (int64_t b = 0; b < n; ++b) {
                                    const T* gg = g.data() + (b * c + ch) * sp;
                                    T* out = gp.data() + (b * c + ch) * sp;
                                    for (int64_t k = 0; k < sp; ++k) {
                                        const double gd = gg[k];
                                        const double dnum = gd;
                                        const double dden = gd + t_alpha * (1.0 - gd) - t_beta * gd;
                                        const double dti = (dnum * denom[ch] - num * dden) / (denom[ch] * denom[ch]);
                                        out[k] += static_cast<T>(scale * outer * -dti);
                                    }
                                }
                            }
                        });
}

// Multi-class negative log-likelihood on raw logits with integer labels.
template <typename T>
Var<T> cross_entropy_labels(const Var<T>& logits, const Tensor<uint8_t>& labels) {
    const Shape& s = logits->value.shape();
    const int64_t n = s[0], c = s[1], sp = numel_of(s) / (n * c);
    require(labels.numel() == n * sp, "cross_entropy: label count mismatch");
    for (int64_t i = 0; i < labels.numel(); ++i)
        if (labels[i] >= c)
            throw DataError("cross_entropy: label value " + std::to_string(int(labels[i])) + " outside class range 0.." +
                            std::to_string(c - 1));
    Tensor<T> probs(s);
    detail::softmax_channel_forward(logits->value.data(), probs.data(), n, c, sp);
    double total = 0.0;
    for (int64_t b = 0; b < n; ++b)
        for (int64_t k = 0; k < sp; ++k)
            total -= std::log(std::max(1e-300, static_cast<double>(probs[(b * c + labels[b * sp + k]) * sp + k])));
    Tensor<T> out({1}, static_cast<T>(total / (n * sp)));
    return make_node<T>(std::move(out), {logits}, [logits, probs, labels, n, c, sp](const Tensor<T>& gr) {
        if (!logits->requires_grad) return;
        Tensor<T>& gl = ensure_grad(logits);
        const double scale = static_cast<double>(gr[0]) / (n * sp);
        for (int64_t b = 0; b < n; ++b)
            for (int64_t ch = 0; ch < c; ++ch) {
                const T* pp = probs.data() + (b * c + ch) * sp;
                T* out = gl.data() + (b * c + ch) * sp;
                const uint8_t* lab = labels.data() + b * sp;
                for (int64_t k = 0; k < sp; ++k)
                    out[k] += static_cast<T>(scale * (pp[k] - (lab[k] == ch ? 1.0 : 0.0)));
            }
    });
}

// Per-channel binary cross entropy on raw logits (sigmoid-regions mode).
template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& g) {
    const Shape& s = logits->value.shape();
    require(same_shape(s, g.shape()), "bce_with_logits: shape mismatch");
    const int64_t n = logits->value.numel();
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double z = logits->value[i], t = g[i];
        total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
    Tensor<T> out({1}, static_cast<T>(total / n));
    Tensor<T> zv = logits->value;
    return make_node<T>(std::move(out), {logits}, [logits, zv, g, n](const Tensor<T>& gr) {
        if (!logits->requires_grad) return;
        Tensor<T>& gl = ensure_grad(logits);
        const double scale = static_cast<double>(gr[0]) / n;
        for (int64_t i = 0; i < n; ++i) {
            const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(zv[i])));
            gl[i] += static_cast<T>(scale * (sig - g[i]));
        }
    });
}

// Binary cross entropy on probabilities (the attention map is already a
// sigmoid output).
template <typename T>
Var<T> bce_probs(const Var<T>& p, const Tensor<T>& g, double eps = 1e-7) {
    const Shape& s = p->value.shape();
    require(same_shape(s, g.shape()), "bce: shape mismatch");
    const int64_t n = p->value.numel();
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double pc = std::min(1.0 - eps, std::max(eps, static_cast<double>(p->value[i])));
        total -= g[i] * std::log(pc) + (1.0 - g[i]) * std::log(1.0 - pc);
    }
    Tensor<T> out({1}, static_cast<T>(total / n));
    Tensor<T> pv = p->value;
    return make_node<T>(std::move(out), {p}, [p, pv, g, eps, n](const Tensor<T>& gr) {
        if (!p->requires_grad) return;
        Tensor<T>& gp = ensure_grad(p);
        const double scale = static_cast<double>(gr[0]) / n;
        for (int64_t i = 0; i < n; ++i) {
            const double praw = static_cast<double>(pv[i]);
            if (praw < eps || praw > 1.0 - eps) continue;
            gp[i] += static_cast<T>(scale * (-g[i] / praw + (1.0 - g[i]) / (1.0 - praw)));
        }
    });
}

}  // namespace loss

// ---------------------------------------------------------------------------
// Target construction

// Union of disjoint per-class foreground maps, clamped to {0,1}.
template <typename T>
Tensor<T> binary_target(const Tensor<T>& onehot) {
    const Shape& s = onehot.shape();
    require(s.size() >= 2, "binary_target: expected [N,C,...]");
    const int64_t n = s[0], c = s[1], sp = numel_of(s) / (n * c);
    for (int64_t i = 0; i < onehot.numel(); ++i)
        if (onehot[i] != T(0) && onehot[i] != T(1)) throw DataError("binary_target: input maps must be binary");
    Shape os = s;
    os[1] = 1;
    Tensor<T> out(os);
    for (int64_t b = 0; b < n; ++b)
        for (int64_t k = 0; k < sp; ++k) {
            T acc = T(0);
            for (int64_t ch = 0; ch < c; ++ch) acc += onehot[(b * c + ch) * sp + k];
            out[b * sp + k] = acc > T(1) ? T(1) : acc;
        }
    return out;
}

// ET = label 4; TC = labels {1,4}; WT = labels {1,2,4}.
inline U8Tensor regions_from_labels(const U8Tensor& labels) {
    Shape os{3};
    for (int64_t d : labels.shape()) os.push_back(d);
    U8Tensor out(os);
    const int64_t n = labels.numel();
    for (int64_t i = 0; i < n; ++i) {
        const uint8_t v = labels[i];
        if (v != 0 && v != 1 && v != 2 && v != 4)
            throw DataError("regions_from_labels: unknown label value " + std::to_string(int(v)));
        out[i] = v == 4;
        out[n + i] = v == 1 || v == 4;
        out[2 * n + i] = v == 1 || v == 2 || v == 4;
    }
    return out;
}

template <typename T>
struct SupervisionTargets {
    U8Tensor labels;     // [N, spatial...]
    Tensor<T> onehot;    // [N, C, spatial...] (softmax-labels mode)
    Tensor<T> regions;   // [N, 3, spatial...] (sigmoid-regions mode)
    Tensor<T> binary;    // [N, 1, spatial...] union of foreground classes
};

template <typename T>
SupervisionTargets<T> make_targets(const U8Tensor& labels, OutputMode mode, int64_t num_classes) {
    SupervisionTargets<T> t;
    t.labels = labels;
    const Shape& s = labels.shape();
    const int64_t n = s[0], sp = numel_of(s) / s[0];
    Shape bshape{n, 1};
    for (size_t i = 1; i < s.size(); ++i) bshape.push_back(s[i]);
    t.binary = Tensor<T>(bshape);
    for (int64_t i = 0; i < labels.numel(); ++i) t.binary[i] = labels[i] > 0 ? T(1) : T(0);
    if (mode == OutputMode::SoftmaxLabels) {
        Shape oshape{n, num_classes};
        for (size_t i = 1; i < s.size(); ++i) oshape.push_back(s[i]);
        t.onehot = Tensor<T>(oshape);
        for (int64_t b = 0; b < n; ++b)
            for (int64_t k = 0; k < sp; ++k) {
                const uint8_t v = labels[b * sp + k];
                if (v >= num_classes)
                    throw DataError("make_targets: label value " + std::to_string(int(v)) + " outside class range");
                t.onehot[(b * num_classes + v) * sp + k] = T(1);
            }
    } else {
        Shape rshape{n, 3};
        for (size_t i = 1; i < s.size(); ++i) rshape.push_back(s[i]);
        t.regions = Tensor<T>(rshape);
        for (int64_t b = 0; b < n; ++b) {
            Shape one{};
            for (size_t i = 1; i < s.size(); ++i) one.push_back(s[i]);
            U8Tensor lab = U8Tensor(one);
            std::copy(labels.data() + b * sp, labels.data() + (b + 1) * sp, lab.data());
            const U8Tensor r = regions_from_labels(lab);
            for (int64_t i = 0; i < 3 * sp; ++i) t.regions[b * 3 * sp + i] = static_cast<T>(r[i]);
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Assembled criteria

template <typename T>
Var<T> multiclass_loss(const Var<T>& logits, const SupervisionTargets<T>& targets, const LossConfig& cfg,
                       OutputMode mode) {
    if (mode == OutputMode::SoftmaxLabels) {
        auto probs = ops::softmax_channel(logits);
        if (cfg.multiclass_loss == MulticlassLossKind::FocalTversky)
            return loss::focal_tversky(probs, targets.onehot, cfg.tversky_alpha, cfg.tversky_beta, cfg.ftl_exponent,
                                       cfg.dice_smooth);
        return ops::add(loss::dice(probs, targets.onehot, cfg.dice_smooth),
                        loss::cross_entropy_labels(logits, targets.labels));
    }
    auto probs = ops::sigmoid(logits);
    if (cfg.multiclass_loss == MulticlassLossKind::FocalTversky)
        return loss::focal_tversky(probs, targets.regions, cfg.tversky_alpha, cfg.tversky_beta, cfg.ftl_exponent,
                                   cfg.dice_smooth);
    return ops::add(loss::dice(probs, targets.regions, cfg.dice_smooth), loss::bce_with_logits(logits, targets.regions));
}

// Binary supervision of the attention map (already resized to label
// resolution by the caller).
template <typename T>
Var<T> binary_supervision_loss(const Var<T>& y_up, const SupervisionTargets<T>& targets, const LossConfig& cfg) {
    require(same_shape(y_up->value.shape(), targets.binary.shape()),
            "binary_supervision_loss: attention map must be resized to the label resolution");
    auto d = loss::dice(y_up, targets.binary, cfg.dice_smooth);
    if (cfg.binary_loss == BinaryLossKind::DiceFocal)
        return ops::add(d, loss::focal(y_up, targets.binary, cfg.focal_gamma, cfg.focal_alpha));
    return ops::add(d, loss::bce_probs(y_up, targets.binary));
}

struct LossBreakdown {
    std::map<std::string, double> terms;
    double total = 0.0;
};

// Deep-supervised total: main term, one term per auxiliary head, and (when
// intermediate supervision is on) the binary term on the attention map. All
// terms are unit-weighted.
template <typename T>
std::pair<Var<T>, LossBreakdown> total_loss(const Var<T>& main_logits, const std::vector<Var<T>>& aux_logits,
                                            const Var<T>& attention_up, const SupervisionTargets<T>& targets,
                                            const LossConfig& cfg, OutputMode mode, bool deep_supervision,
                                            bool intermediate_supervision) {
    if (deep_supervision && aux_logits.size() != 3)
        throw ConfigError("total_loss: deep supervision enabled but " + std::to_string(aux_logits.size()) +
                          " auxiliary outputs were provided (expected 3)");
    if (intermediate_supervision && (!attention_up || !attention_up->value.defined()))
        throw ConfigError("total_loss: intermediate supervision enabled but no attention map was provided");
    LossBreakdown bd;
    Var<T> total = multiclass_loss(main_logits, targets, cfg, mode);
    bd.terms["main"] = static_cast<double>(total->value[0]);
    if (deep_supervision)
        for (size_t i = 0; i < aux_logits.size(); ++i) {
            auto t = multiclass_loss(aux_logits[i], targets, cfg, mode);
            bd.terms["aux" + std::to_string(i + 1)] = static_cast<double>(t->value[0]);
            total = ops::add(total, t);
        }
    if (intermediate_supervision) {
        auto t = binary_supervision_loss(attention_up, targets, cfg);
        bd.terms["intermediate"] = static_cast<double>(t->value[0]);
        total = ops::add(total, t);
    }
    bd.total = static_cast<double>(total->value[0]);
    return {total, bd};
}

}  // namespace panet
