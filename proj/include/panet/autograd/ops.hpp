#pragma once

#include <cmath>

#include "panet/autograd/var.hpp"
#include "panet/core/half.hpp"
#include "panet/core/kernels.hpp"

namespace panet {

// Simulated mixed precision: when enabled, conv inputs, weights and outputs
// are rounded through IEEE half storage (accumulation stays in single
// precision, master weights are untouched).
inline bool& half_sim_flag() {
    thread_local bool on = false;
    return on;
}

struct HalfSimGuard {
    explicit HalfSimGuard(bool on) : prev_(half_sim_flag()) { half_sim_flag() = on; }
    ~HalfSimGuard() { half_sim_flag() = prev_; }

  private:
    bool prev_;
};

// Analytic multiply-accumulate counter for the summarize report. Only conv
// layers contribute; normalization and activations are excluded.
struct MacCounter {
    bool active = false;
    double macs = 0.0;
};

inline MacCounter& mac_counter() {
    thread_local MacCounter c;
    return c;
}

namespace ops {

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require(same_shape(a->value.shape(), b->value.shape()),
            "add: shape mismatch " + shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
    Tensor<T> out(a->value.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
    return make_node<T>(std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
        accum(a, g);
        accum(b, g);
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    require(same_shape(a->value.shape(), b->value.shape()),
            "mul: shape mismatch " + shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
    Tensor<T> out(a->value.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] * b->value[i];
    Tensor<T> av = a->value, bv = b->value;
    return make_node<T>(std::move(out), {a, b}, [a, b, av, bv](const Tensor<T>& g) {
        if (a->requires_grad) {
            Tensor<T>& ga = ensure_grad(a);
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
        }
        if (b->requires_grad) {
            Tensor<T>& gb = ensure_grad(b);
            for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

// out = alpha * x with a learnable scalar alpha of shape [1].
template <typename T>
Var<T> scale_param(const Var<T>& x, const Var<T>& alpha) {
    require(alpha->value.numel() == 1, "scale_param: alpha must be scalar");
    const T a = alpha->value[0];
    Tensor<T> out(x->value.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a * x->value[i];
    Tensor<T> xv = x->value;
    return make_node<T>(std::move(out), {x, alpha}, [x, alpha, xv, a](const Tensor<T>& g) {
        if (x->requires_grad) {
            Tensor<T>& gx = ensure_grad(x);
            for (int64_t i = 0; i < g.numel(); ++i) gx[i] += a * g[i];
        }
        if (alpha->requires_grad) {
            double acc = 0.0;
            for (int64_t i = 0; i < g.numel(); ++i) acc += static_cast<double>(g[i]) * xv[i];
            ensure_grad(alpha)[0] += static_cast<T>(acc);
        }
    });
}

// Broadcast multiply of a one-channel spatial map over all channels of f.
template <typename T>
Var<T> mul_map(const Var<T>& f, const Var<T>& y) {
    const Shape& fs = f->value.shape();
    const Shape& ys = y->value.shape();
    require(ys.size() == fs.size() && ys[0] == fs[0] && ys[1] == 1, "mul_map: map must be [N,1,spatial]");
    for (size_t i = 2; i < fs.size(); ++i)
        require(ys[i] == fs[i], "mul_map: spatial mismatch " + shape_str(fs) + " vs " + shape_str(ys));
    const int64_t n = fs[0], c = fs[1];
    const int64_t sp = numel_of(fs) / (n * c);
    Tensor<T> out(fs);
    for (int64_t b = 0; b < n; ++b)
        for (int64_t ch = 0; ch < c; ++ch) {
            const T* fp = f->value.data() + (b * c + ch) * sp;
            const T* yp = y->value.data() + b * sp;
            T* op = out.data() + (b * c + ch) * sp;
            for (int64_t i = 0; i < sp; ++i) op[i] = fp[i] * yp[i];
        }
    Tensor<T> fv = f->value, yv = y->value;
    return make_node<T>(std::move(out), {f, y}, [f, y, fv, yv, n, c, sp](const Tensor<T>& g) {
        if (f->requires_grad) {
            Tensor<T>& gf = ensure_grad(f);
            for (int64_t b = 0; b < n; ++b)
                for (int64_t ch = 0; ch < c; ++ch) {
                    const T* gp = g.data() + (b * c + ch) * sp;
                    const T* yp = yv.data() + b * sp;
                    T* out = gf.data() + (b * c + ch) * sp;
                    for (int64_t i = 0; i < sp; ++i) out[i] += gp[i] * yp[i];
                }
        }
        if (y->requires_grad) {
            Tensor<T>& gy = ensure_grad(y);
            for (int64_t b = 0; b < n; ++b)
                for (int64_t ch = 0; ch < c; ++ch) {
                    const T* gp = g.data() + (b * c + ch) * sp;
                    const T* fp = fv.data() + (b * c + ch) * sp;
                    T* out = gy.data() + b * sp;
                    for (int64_t i = 0; i < sp; ++i) out[i] += gp[i] * fp[i];
                }
        }
    });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
    require(!xs.empty(), "concat: empty input list");
    Shape s = xs[0]->value.shape();
    int64_t ctotal = 0;
    for (const auto& x : xs) {
        const Shape& xs_i = x->value.shape();
        require(xs_i.size() == s.size() && xs_i[0] == s[0], "concat: batch mismatch");
        for (size_t d = 2; d < s.size(); ++d) require(xs_i[d] == s[d], "concat: spatial mismatch");
        ctotal += xs_i[1];
    }
    const int64_t n = s[0];
    const int64_t sp = numel_of(s) / (s[0] * s[1]);
    Shape os = s;
    os[1] = ctotal;
    Tensor<T> out(os);
    std::vector<int64_t> coffs;
    int64_t off = 0;
    for (const auto& x : xs) {
        coffs.push_back(off);
        const int64_t c = x->value.shape()[1];
        for (int64_t b = 0; b < n; ++b)
            std::copy(x->value.data() + b * c * sp, x->value.data() + (b + 1) * c * sp,
                      out.data() + (b * ctotal + off) * sp);
        off += c;
    }
    std::vector<Var<T>> parents(xs);
    return make_node<T>(std::move(out), parents, [parents, coffs, n, sp, ctotal](const Tensor<T>& g) {
        for (size_t i = 0; i < parents.size(); ++i) {
            const auto& p = parents[i];
            if (!p->requires_grad) continue;
            Tensor<T>& gp = ensure_grad(p);
            const int64_t c = p->value.shape()[1];
            for (int64_t b = 0; b < n; ++b) {
                const T* src = g.data() + (b * ctotal + coffs[i]) * sp;
                T* dst = gp.data() + b * c * sp;
                for (int64_t j = 0; j < c * sp; ++j) dst[j] += src[j];
            }
        }
    });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> out(x->value.shape());
    // NaN propagates so a poisoned batch surfaces as a non-finite loss
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = std::isnan(x->value[i]) ? x->value[i] : (x->value[i] > T(0) ? x->value[i] : T(0));
    Tensor<T> xv = x->value;
    return make_node<T>(std::move(out), {x}, [x, xv](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T>& gx = ensure_grad(x);
        for (int64_t i = 0; i < g.numel(); ++i)
            if (xv[i] > T(0)) gx[i] += g[i];
    });
}

// Single-parameter PReLU: out = max(0,x) + a*min(0,x).
template <typename T>
Var<T> prelu(const Var<T>& x, const Var<T>& a) {
    require(a->value.numel() == 1, "prelu: slope must be scalar");
    const T slope = a->value[0];
    Tensor<T> out(x->value.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] > T(0) ? x->value[i] : slope * x->value[i];
    Tensor<T> xv = x->value;
    return make_node<T>(std::move(out), {x, a}, [x, a, xv, slope](const Tensor<T>& g) {
        if (x->requires_grad) {
            Tensor<T>& gx = ensure_grad(x);
            for (int64_t i = 0; i < g.numel(); ++i) gx[i] += xv[i] > T(0) ? g[i] : slope * g[i];
        }
        if (a->requires_grad) {
            double acc = 0.0;
            for (int64_t i = 0; i < g.numel(); ++i)
                if (xv[i] <= T(0)) acc += static_cast<double>(g[i]) * xv[i];
            ensure_grad(a)[0] += static_cast<T>(acc);
        }
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> out(x->value.shape());
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x->value[i]))));
    Tensor<T> ov = out;
    return make_node<T>(std::move(out), {x}, [x, ov](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T>& gx = ensure_grad(x);
        for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * ov[i] * (T(1) - ov[i]);
    });
}

// Clamp with straight-through gradient inside the kept range.
template <typename T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
    Tensor<T> out(x->value.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::min(hi, std::max(lo, x->value[i]));
    Tensor<T> xv = x->value;
    return make_node<T>(std::move(out), {x}, [x, xv, lo, hi](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T>& gx = ensure_grad(x);
        for (int64_t i = 0; i < g.numel(); ++i)
            if (xv[i] >= lo && xv[i] <= hi) gx[i] += g[i];
    });
}

template <typename T>
Var<T> softmax_channel(const Var<T>& x) {
    const Shape& s = x->value.shape();
    require(s.size() >= 2, "softmax: expected [N,C,...]");
    const int64_t n = s[0], c = s[1], sp = numel_of(s) / (s[0] * s[1]);
    Tensor<T> out(s);
    detail::softmax_channel_forward(x->value.data(), out.data(), n, c, sp);
    Tensor<T> ov = out;
    return make_node<T>(std::move(out), {x}, [x, ov, n, c, sp](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        detail::softmax_channel_backward(ov.data(), g.data(), ensure_grad(x).data(), n, c, sp);
    });
}

template <typename T>
Var<T> sum_all(const Var<T>& x) {
    double acc = 0.0;
    for (int64_t i = 0; i < x->value.numel(); ++i) acc += static_cast<double>(x->value[i]);
    Tensor<T> out({1}, static_cast<T>(acc));
    return make_node<T>(std::move(out), {x}, [x](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T>& gx = ensure_grad(x);
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g[0];
    });
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
    const int64_t n = x->value.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(x->value[i]);
    Tensor<T> out({1}, static_cast<T>(acc / n));
    return make_node<T>(std::move(out), {x}, [x, n](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T>& gx = ensure_grad(x);
        const T k = g[0] / static_cast<T>(n);
        for (int64_t i = 0; i < n; ++i) gx[i] += k;
    });
}

template <typename T>
Var<T> stop_gradient(const Var<T>& x) {
    auto n = std::make_shared<Node<T>>();
    n->value = x->value;
    n->leaf = true;
    return n;
}

inline detail::ConvDims conv_dims(const Shape& xs, const Shape& ws, const std::vector<int64_t>& stride,
                                  const std::vector<int64_t>& pad, int64_t groups) {
    detail::ConvDims d;
    d.nd = static_cast<int>(xs.size()) - 2;
    require(d.nd == 2 || d.nd == 3, "conv: expected 4-D or 5-D input, got " + shape_str(xs));
    require(static_cast<int>(ws.size()) == d.nd + 2, "conv: weight rank mismatch");
    d.batch = xs[0];
    d.cin = xs[1];
    d.cout = ws[0];
    d.groups = groups;
    require(d.cin % groups == 0 && d.cout % groups == 0, "conv: channels not divisible by groups");
    require(ws[1] == d.cin / groups, "conv: weight expects " + std::to_string(ws[1] * groups) + " input channels, got " +
                                         std::to_string(d.cin));
    const int off = 3 - d.nd;  // pack 2-D spatial dims into trailing slots
    for (int i = 0; i < d.nd; ++i) {
        d.isp[off + i] = xs[2 + i];
        d.kernel[off + i] = ws[2 + i];
        d.stride[off + i] = stride[i];
        d.pad[off + i] = pad[i];
        const int64_t o = (d.isp[off + i] + 2 * pad[i] - ws[2 + i]) / stride[i] + 1;
        require(o > 0, "conv: output size would be non-positive on axis " + std::to_string(i));
        d.osp[off + i] = o;
    }
    return d;
}

template <typename T>
Var<T> conv_nd(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const std::vector<int64_t>& stride,
               const std::vector<int64_t>& pad, int64_t groups = 1) {
    const detail::ConvDims d = conv_dims(x->value.shape(), w->value.shape(), stride, pad, groups);
    Shape os{d.batch, d.cout};
    for (int i = 3 - d.nd; i < 3; ++i) os.push_back(d.osp[i]);
    Tensor<T> xv = x->value, wv = w->value;
    if constexpr (std::is_same_v<T, float>) {
        if (half_sim_flag()) {
            xv = xv.clone();
            wv = wv.clone();
            for (int64_t i = 0; i < xv.numel(); ++i) xv[i] = half_round(xv[i]);
            for (int64_t i = 0; i < wv.numel(); ++i) wv[i] = half_round(wv[i]);
        }
    }
    Tensor<T> out(os);
    detail::conv_forward(xv.data(), wv.data(), bias ? bias->value.data() : nullptr, out.data(), d);
    if constexpr (std::is_same_v<T, float>) {
        if (half_sim_flag())
            for (int64_t i = 0; i < out.numel(); ++i) out[i] = half_round(out[i]);
    }
    if (mac_counter().active)
        mac_counter().macs += static_cast<double>(d.batch) * d.out_spatial() * d.cout * (d.cin / d.groups) * d.kvol();
    std::vector<Var<T>> parents = bias ? std::vector<Var<T>>{x, w, bias} : std::vector<Var<T>>{x, w};
    return make_node<T>(std::move(out), parents, [x, w, bias, xv, wv, d](const Tensor<T>& g) {
        if (x->requires_grad) detail::conv_backward_input(ensure_grad(x).data(), wv.data(), g.data(), d);
        if (w->requires_grad) detail::conv_backward_weight(xv.data(), ensure_grad(w).data(), g.data(), d);
        if (bias && bias->requires_grad) detail::conv_backward_bias(ensure_grad(bias).data(), g.data(), d);
    });
}

template <typename T>
Var<T> interp_linear(const Var<T>& x, const std::vector<int64_t>& out_spatial) {
    const Shape& s = x->value.shape();
    const int nd = static_cast<int>(s.size()) - 2;
    require(nd == 2 || nd == 3, "interp: expected 4-D or 5-D input");
    require(static_cast<int>(out_spatial.size()) == nd, "interp: target dimensionality mismatch");
    Shape os{s[0], s[1]};
    std::vector<int64_t> isp(s.begin() + 2, s.end());
    for (int64_t v : out_spatial) os.push_back(v);
    Tensor<T> out(os);
    detail::interp_linear_forward(x->value.data(), out.data(), nd, s[0] * s[1], isp.data(), out_spatial.data());
    return make_node<T>(std::move(out), {x}, [x, nd, isp, out_spatial, s](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        detail::interp_linear_backward(ensure_grad(x).data(), g.data(), nd, s[0] * s[1], isp.data(),
                                       out_spatial.data());
    });
}

template <typename T>
Var<T> upsample2x(const Var<T>& x) {
    const Shape& s = x->value.shape();
    std::vector<int64_t> target(s.begin() + 2, s.end());
    for (auto& v : target) v *= 2;
    return interp_linear(x, target);
}

template <typename T>
Var<T> maxpool_nd(const Var<T>& x, int64_t kernel, int64_t stride, int64_t pad) {
    const Shape& s = x->value.shape();
    const int nd = static_cast<int>(s.size()) - 2;
    detail::ConvDims d;
    d.nd = nd;
    d.batch = s[0];
    d.cin = s[1];
    const int off = 3 - nd;
    for (int i = 0; i < nd; ++i) {
        d.isp[off + i] = s[2 + i];
        d.kernel[off + i] = kernel;
        d.stride[off + i] = stride;
        d.pad[off + i] = pad;
        d.osp[off + i] = (s[2 + i] + 2 * pad - kernel) / stride + 1;
    }
    Shape os{d.batch, d.cin};
    for (int i = off; i < 3; ++i) os.push_back(d.osp[i]);
    Tensor<T> out(os);
    Tensor<int64_t> argmax(os);
    detail::maxpool_forward(x->value.data(), out.data(), argmax.data(), d);
    return make_node<T>(std::move(out), {x}, [x, argmax, d](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        detail::maxpool_backward(ensure_grad(x).data(), g.data(), argmax.data(), d);
    });
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, double momentum = 0.1, double eps = 1e-5) {
    const Shape& s = x->value.shape();
    const int64_t n = s[0], c = s[1], sp = numel_of(s) / (s[0] * s[1]);
    Tensor<T> out(s), save_mean({c}), save_inv_std({c});
    detail::batch_norm_forward(x->value.data(), out.data(), gamma->value.data(), beta->value.data(),
                               running_mean.data(), running_var.data(), save_mean.data(), save_inv_std.data(),
                               n, c, sp, training, momentum, eps);
    Tensor<T> xv = x->value;
    Tensor<T> gv = gamma->value;
    return make_node<T>(std::move(out), {x, gamma, beta},
                        [x, gamma, beta, xv, gv, save_mean, save_inv_std, n, c, sp, training](const Tensor<T>& g) {
                            Tensor<T> devnull;
                            if (training) {
                                Tensor<T>& gx = x->requires_grad ? ensure_grad(x) : (devnull = Tensor<T>::zeros(xv.shape()));
                                detail::batch_norm_backward(xv.data(), g.data(), gx.data(),
                                                            ensure_grad(gamma).data(), ensure_grad(beta).data(),
                                                            gv.data(), save_mean.data(), save_inv_std.data(), n, c, sp);
                                return;
                            }
                            // Eval mode: statistics are constants.
                            for (int64_t ch = 0; ch < c; ++ch) {
                                const T k = gv[ch] * save_inv_std[ch];
                                double dgamma = 0.0, dbeta = 0.0;
                                for (int64_t b = 0; b < n; ++b) {
                                    const T* gp = g.data() + (b * c + ch) * sp;
                                    const T* xp = xv.data() + (b * c + ch) * sp;
                                    T* gxp = x->requires_grad ? ensure_grad(x).data() + (b * c + ch) * sp : nullptr;
                                    for (int64_t i = 0; i < sp; ++i) {
                                        if (gxp) gxp[i] += k * gp[i];
                                        dgamma += static_cast<double>(gp[i]) * (xp[i] - save_mean[ch]) * save_inv_std[ch];
                                        dbeta += gp[i];
                                    }
                                }
                                if (gamma->requires_grad) ensure_grad(gamma)[ch] += static_cast<T>(dgamma);
                                if (beta->requires_grad) ensure_grad(beta)[ch] += static_cast<T>(dbeta);
                            }
                        });
}

template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = 1e-5) {
    const Shape& s = x->value.shape();
    const int64_t n = s[0], c = s[1], sp = numel_of(s) / (s[0] * s[1]);
    Tensor<T> out(s), save_mean({n * c}), save_inv_std({n * c});
    detail::instance_norm_forward(x->value.data(), out.data(), gamma->value.data(), beta->value.data(),
                                  save_mean.data(), save_inv_std.data(), n, c, sp, eps);
    Tensor<T> xv = x->value, gv = gamma->value;
    return make_node<T>(std::move(out), {x, gamma, beta},
                        [x, gamma, beta, xv, gv, save_mean, save_inv_std, n, c, sp](const Tensor<T>& g) {
                            Tensor<T> devnull;
                            Tensor<T>& gx = x->requires_grad ? ensure_grad(x) : (devnull = Tensor<T>::zeros(xv.shape()));
                            detail::instance_norm_backward(xv.data(), g.data(), gx.data(), ensure_grad(gamma).data(),
                                                           ensure_grad(beta).data(), gv.data(), save_mean.data(),
                                                           save_inv_std.data(), n, c, sp);
                        });
}

}  // namespace ops
}  // namespace panet
