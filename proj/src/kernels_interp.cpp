#include <algorithm>
#include <cmath>
#include <vector>

#include "panet/core/kernels.hpp"

namespace panet::detail {

namespace {

// Half-pixel source coordinates; negative positions clamp to 0 so the
// interpolation stays a convex combination of input samples.
struct AxisMap {
    std::vector<int64_t> i0, i1;
    std::vector<double> w1;  // weight of i1; i0 gets (1 - w1)
};

AxisMap linear_axis(int64_t in, int64_t out) {
    AxisMap m;
    m.i0.resize(static_cast<size_t>(out));
    m.i1.resize(static_cast<size_t>(out));
    m.w1.resize(static_cast<size_t>(out));
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (int64_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        if (src < 0.0) src = 0.0;
        int64_t i0 = std::min(static_cast<int64_t>(src), in - 1);
        int64_t i1 = std::min(i0 + 1, in - 1);
        m.i0[static_cast<size_t>(o)] = i0;
        m.i1[static_cast<size_t>(o)] = i1;
        m.w1[static_cast<size_t>(o)] = src - static_cast<double>(i0);
    }
    return m;
}

std::vector<int64_t> nearest_axis(int64_t in, int64_t out) {
    std::vector<int64_t> idx(static_cast<size_t>(out));
    for (int64_t o = 0; o < out; ++o)
        idx[static_cast<size_t>(o)] = std::min(static_cast<int64_t>(std::floor(
                                                   static_cast<double>(o) * static_cast<double>(in) /
                                                   static_cast<double>(out))),
                                               in - 1);
    return idx;
}

}  // namespace

template <typename T>
void interp_linear_forward(const T* x, T* y, int nd, int64_t nc, const int64_t* isp, const int64_t* osp) {
    if (nd == 2) {
        const AxisMap mh = linear_axis(isp[0], osp[0]), mw = linear_axis(isp[1], osp[1]);
        for (int64_t p = 0; p < nc; ++p) {
            const T* in = x + p * isp[0] * isp[1];
            T* out = y + p * osp[0] * osp[1];
            for (int64_t oh = 0; oh < osp[0]; ++oh) {
                const int64_t h0 = mh.i0[oh], h1 = mh.i1[oh];
                const double wh = mh.w1[oh];
                for (int64_t ow = 0; ow < osp[1]; ++ow) {
                    const int64_t w0 = mw.i0[ow], w1 = mw.i1[ow];
                    const double ww = mw.w1[ow];
                    const double v = (1 - wh) * ((1 - ww) * in[h0 * isp[1] + w0] + ww * in[h0 * isp[1] + w1]) +
                                     wh * ((1 - ww) * in[h1 * isp[1] + w0] + ww * in[h1 * isp[1] + w1]);
                    out[oh * osp[1] + ow] = static_cast<T>(v);
                }
            }
        }
        return;
    }
    const AxisMap md = linear_axis(isp[0], osp[0]), mh = linear_axis(isp[1], osp[1]), mw = linear_axis(isp[2], osp[2]);
    const int64_t ihw = isp[1] * isp[2], ohw = osp[1] * osp[2];
    for (int64_t p = 0; p < nc; ++p) {
        const T* in = x + p * isp[0] * ihw;
        T* out = y + p * osp[0] * ohw;
        for (int64_t od = 0; od < osp[0]; ++od) {
            const int64_t d0 = md.i0[od], d1 = md.i1[od];
            const double wd = md.w1[od];
            for (int64_t oh = 0; oh < osp[1]; ++oh) {
                const int64_t h0 = mh.i0[oh], h1 = mh.i1[oh];
                const double wh = mh.w1[oh];
                for (int64_t ow = 0; ow < osp[2]; ++ow) {
                    const int64_t w0 = mw.i0[ow], w1 = mw.i1[ow];
                    const double ww = mw.w1[ow];
                    auto at = [&](int64_t d, int64_t h, int64_t w) {
                        return static_cast<double>(in[(d * isp[1] + h) * isp[2] + w]);
                    };
                    const double v =
                        (1 - wd) * ((1 - wh) * ((1 - ww) * at(d0, h0, w0) + ww * at(d0, h0, w1)) +
                                    wh * ((1 - ww) * at(d0, h1, w0) + ww * at(d0, h1, w1))) +
                        wd * ((1 - wh) * ((1 - ww) * at(d1, h0, w0) + ww * at(d1, h0, w1)) +
                              wh * ((1 - ww) * at(d1, h1, w0) + ww * at(d1, h1, w1)));
                    out[(od * osp[1] + oh) * osp[2] + ow] = static_cast<T>(v);
                }
            }
        }
    }
}

template <typename T>
void interp_linear_backward(T* dx, const T* dy, int nd, int64_t nc, const int64_t* isp, const int64_t* osp) {
    if (nd == 2) {
        const AxisMap mh = linear_axis(isp[0], osp[0]), mw = linear_axis(isp[1], osp[1]);
        for (int64_t p = 0; p < nc; ++p) {
            T* din = dx + p * isp[0] * isp[1];
            const T* dout = dy + p * osp[0] * osp[1];
            for (int64_t oh = 0; oh < osp[0]; ++oh) {
                const int64_t h0 = mh.i0[oh], h1 = mh.i1[oh];
                const double wh = mh.w1[oh];
                for (int64_t ow = 0; ow < osp[1]; ++ow) {
                    const int64_t w0 = mw.i0[ow], w1 = mw.i1[ow];
                    const double ww = mw.w1[ow];
                    const double g = static_cast<double>(dout[oh * osp[1] + ow]);
                    din[h0 * isp[1] + w0] += static_cast<T>((1 - wh) * (1 - ww) * g);
                    din[h0 * isp[1] + w1] += static_cast<T>((1 - wh) * ww * g);
                    din[h1 * isp[1] + w0] += static_cast<T>(wh * (1 - ww) * g);
                    din[h1 * isp[1] + w1] += static_cast<T>(wh * ww * g);
                }
            }
        }
        return;
    }
    const AxisMap md = linear_axis(isp[0], osp[0]), mh = linear_axis(isp[1], osp[1]), mw = linear_axis(isp[2], osp[2]);
    const int64_t ihw = isp[1] * isp[2], ohw = osp[1] * osp[2];
    for (int64_t p = 0; p < nc; ++p) {
        T* din = dx + p * isp[0] * ihw;
        const T* dout = dy + p * osp[0] * ohw;
        for (int64_t od = 0; od < osp[0]; ++od) {
            const int64_t d0 = md.i0[od], d1 = md.i1[od];
            const double wd = md.w1[od];
            for (int64_t oh = 0; oh < osp[1]; ++oh) {
                const int64_t h0 = mh.i0[oh], h1 = mh.i1[oh];
                const double wh = mh.w1[oh];
                for (int64_t ow = 0; ow < osp[2]; ++ow) {
                    const int64_t w0 = mw.i0[ow], w1 = mw.i1[ow];
                    const double ww = mw.w1[ow];
                    const double g = static_cast<double>(dout[(od * osp[1] + oh) * osp[2] + ow]);
                    auto add = [&](int64_t d, int64_t h, int64_t w, double f) {
                        din[(d * isp[1] + h) * isp[2] + w] += static_cast<T>(f * g);
                    };
                    add(d0, h0, w0, (1 - wd) * (1 - wh) * (1 - ww));
                    add(d0, h0, w1, (1 - wd) * (1 - wh) * ww);
                    add(d0, h1, w0, (1 - wd) * wh * (1 - ww));
                    add(d0, h1, w1, (1 - wd) * wh * ww);
                    add(d1, h0, w0, wd * (1 - wh) * (1 - ww));
                    add(d1, h0, w1, wd * (1 - wh) * ww);
                    add(d1, h1, w0, wd * wh * (1 - ww));
                    add(d1, h1, w1, wd * wh * ww);
                }
            }
        }
    }
}

template <typename T>
void interp_nearest(const T* x, T* y, int nd, int64_t nc, const int64_t* isp, const int64_t* osp) {
    if (nd == 2) {
        const auto ah = nearest_axis(isp[0], osp[0]), aw = nearest_axis(isp[1], osp[1]);
        for (int64_t p = 0; p < nc; ++p) {
            const T* in = x + p * isp[0] * isp[1];
            T* out = y + p * osp[0] * osp[1];
            for (int64_t oh = 0; oh < osp[0]; ++oh)
                for (int64_t ow = 0; ow < osp[1]; ++ow) out[oh * osp[1] + ow] = in[ah[oh] * isp[1] + aw[ow]];
        }
        return;
    }
    const auto ad = nearest_axis(isp[0], osp[0]), ah = nearest_axis(isp[1], osp[1]), aw = nearest_axis(isp[2], osp[2]);
    for (int64_t p = 0; p < nc; ++p) {
        const T* in = x + p * isp[0] * isp[1] * isp[2];
        T* out = y + p * osp[0] * osp[1] * osp[2];
        for (int64_t od = 0; od < osp[0]; ++od)
            for (int64_t oh = 0; oh < osp[1]; ++oh)
                for (int64_t ow = 0; ow < osp[2]; ++ow)
                    out[(od * osp[1] + oh) * osp[2] + ow] = in[(ad[od] * isp[1] + ah[oh]) * isp[2] + aw[ow]];
    }
}

template <typename T>
void pad_reflect(const T* x, T* y, int nd, int64_t nc, const int64_t* isp, const int64_t* lo, const int64_t* hi) {
    auto reflect = [](int64_t i, int64_t n) {
        if (n == 1) return int64_t(0);
        const int64_t period = 2 * (n - 1);
        i = ((i % period) + period) % period;
        return i < n ? i : period - i;
    };
    if (nd == 2) {
        const int64_t oh = isp[0] + lo[0] + hi[0], ow = isp[1] + lo[1] + hi[1];
        for (int64_t p = 0; p < nc; ++p) {
            const T* in = x + p * isp[0] * isp[1];
            T* out = y + p * oh * ow;
            for (int64_t h = 0; h < oh; ++h) {
                const int64_t ih = reflect(h - lo[0], isp[0]);
                for (int64_t w = 0; w < ow; ++w) out[h * ow + w] = in[ih * isp[1] + reflect(w - lo[1], isp[1])];
            }
        }
        return;
    }
    const int64_t od = isp[0] + lo[0] + hi[0], oh = isp[1] + lo[1] + hi[1], ow = isp[2] + lo[2] + hi[2];
    for (int64_t p = 0; p < nc; ++p) {
        const T* in = x + p * isp[0] * isp[1] * isp[2];
        T* out = y + p * od * oh * ow;
        for (int64_t d = 0; d < od; ++d) {
            const int64_t id = reflect(d - lo[0], isp[0]);
            for (int64_t h = 0; h < oh; ++h) {
                const int64_t ih = reflect(h - lo[1], isp[1]);
                for (int64_t w = 0; w < ow; ++w)
                    out[(d * oh + h) * ow + w] = in[(id * isp[1] + ih) * isp[2] + reflect(w - lo[2], isp[2])];
            }
        }
    }
}

template void interp_linear_forward<float>(const float*, float*, int, int64_t, const int64_t*, const int64_t*);
template void interp_linear_forward<double>(const double*, double*, int, int64_t, const int64_t*, const int64_t*);
template void interp_linear_backward<float>(float*, const float*, int, int64_t, const int64_t*, const int64_t*);
template void interp_linear_backward<double>(double*, const double*, int, int64_t, const int64_t*, const int64_t*);
template void interp_nearest<float>(const float*, float*, int, int64_t, const int64_t*, const int64_t*);
template void interp_nearest<double>(const double*, double*, int, int64_t, const int64_t*, const int64_t*);
template void interp_nearest<uint8_t>(const uint8_t*, uint8_t*, int, int64_t, const int64_t*, const int64_t*);
template void pad_reflect<float>(const float*, float*, int, int64_t, const int64_t*, const int64_t*, const int64_t*);
template void pad_reflect<double>(const double*, double*, int, int64_t, const int64_t*, const int64_t*, const int64_t*);

}  // namespace panet::detail
