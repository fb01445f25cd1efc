#include <algorithm>
#include <vector>

#include "panet/core/kernels.hpp"

namespace panet::detail {

namespace {

// Slabs are ranges of the outermost output spatial axis, sized so the column
// buffer stays near 16 MB.
int64_t slab_rows(const ConvDims& d) {
    const int64_t inner = d.nd == 3 ? d.osp[1] * d.osp[2] : d.osp[2];
    const int64_t k_rows = (d.cin / d.groups) * d.kvol();
    const int64_t budget = 4 * 1024 * 1024;
    int64_t rows = std::max<int64_t>(1, budget / std::max<int64_t>(1, k_rows * inner));
    return std::min(rows, d.nd == 3 ? d.osp[0] : d.osp[1]);
}

// x_g points at the group's first input channel for one sample.
template <typename T>
void im2col(const T* x_g, T* col, const ConvDims& d, int64_t o0, int64_t o1) {
    const int64_t cpg = d.cin / d.groups;
    if (d.nd == 2) {
        const int64_t ih_n = d.isp[1], iw_n = d.isp[2], ow_n = d.osp[2];
        const int64_t cols = (o1 - o0) * ow_n;
        for (int64_t ci = 0; ci < cpg; ++ci) {
            const T* plane = x_g + ci * ih_n * iw_n;
            for (int64_t kh = 0; kh < d.kernel[1]; ++kh)
                for (int64_t kw = 0; kw < d.kernel[2]; ++kw) {
                    T* row = col + ((ci * d.kernel[1] + kh) * d.kernel[2] + kw) * cols;
                    for (int64_t oh = o0; oh < o1; ++oh) {
                        const int64_t ih = oh * d.stride[1] - d.pad[1] + kh;
                        T* out = row + (oh - o0) * ow_n;
                        if (ih < 0 || ih >= ih_n) {
                            std::fill(out, out + ow_n, T(0));
                            continue;
                        }
                        const T* in = plane + ih * iw_n;
                        for (int64_t ow = 0; ow < ow_n; ++ow) {
                            const int64_t iw = ow * d.stride[2] - d.pad[2] + kw;
                            out[ow] = (iw >= 0 && iw < iw_n) ? in[iw] : T(0);
                        }
                    }
                }
        }
        return;
    }
    const int64_t id_n = d.isp[0], ih_n = d.isp[1], iw_n = d.isp[2];
    const int64_t oh_n = d.osp[1], ow_n = d.osp[2];
    const int64_t cols = (o1 - o0) * oh_n * ow_n;
    for (int64_t ci = 0; ci < cpg; ++ci) {
        const T* vol = x_g + ci * id_n * ih_n * iw_n;
        for (int64_t kd = 0; kd < d.kernel[0]; ++kd)
            for (int64_t kh = 0; kh < d.kernel[1]; ++kh)
                for (int64_t kw = 0; kw < d.kernel[2]; ++kw) {
                    T* row = col + (((ci * d.kernel[0] + kd) * d.kernel[1] + kh) * d.kernel[2] + kw) * cols;
                    for (int64_t od = o0; od < o1; ++od) {
                        const int64_t id = od * d.stride[0] - d.pad[0] + kd;
                        for (int64_t oh = 0; oh < oh_n; ++oh) {
                            const int64_t ih = oh * d.stride[1] - d.pad[1] + kh;
                            T* out = row + ((od - o0) * oh_n + oh) * ow_n;
                            if (id < 0 || id >= id_n || ih < 0 || ih >= ih_n) {
                                std::fill(out, out + ow_n, T(0));
                                continue;
                            }
                            const T* in = vol + (id * ih_n + ih) * iw_n;
                            for (int64_t ow = 0; ow < ow_n; ++ow) {
                                const int64_t iw = ow * d.stride[2] - d.pad[2] + kw;
                                out[ow] = (iw >= 0 && iw < iw_n) ? in[iw] : T(0);
                            }
                        }
                    }
                }
    }
}

template <typename T>
void col2im_add(const T* col, T* dx_g, const ConvDims& d, int64_t o0, int64_t o1) {
    const int64_t cpg = d.cin / d.groups;
    if (d.nd == 2) {
        const int64_t ih_n = d.isp[1], iw_n = d.isp[2], ow_n = d.osp[2];
        const int64_t cols = (o1 - o0) * ow_n;
        for (int64_t ci = 0; ci < cpg; ++ci) {
            T* plane = dx_g + ci * ih_n * iw_n;
            for (int64_t kh = 0; kh < d.kernel[1]; ++kh)
                for (int64_t kw = 0; kw < d.kernel[2]; ++kw) {
                    const T* row = col + ((ci * d.kernel[1] + kh) * d.kernel[2] + kw) * cols;
                    for (int64_t oh = o0; oh < o1; ++oh) {
                        const int64_t ih = oh * d.stride[1] - d.pad[1] + kh;
                        if (ih < 0 || ih >= ih_n) continue;
                        const T* in = row + (oh - o0) * ow_n;
                        T* out = plane + ih * iw_n;
                        for (int64_t ow = 0; ow < ow_n; ++ow) {
                            const int64_t iw = ow * d.stride[2] - d.pad[2] + kw;
                            if (iw >= 0 && iw < iw_n) out[iw] += in[ow];
                        }
                    }
                }
        }
        return;
    }
    const int64_t id_n = d.isp[0], ih_n = d.isp[1], iw_n = d.isp[2];
    const int64_t oh_n = d.osp[1], ow_n = d.osp[2];
    const int64_t cols = (o1 - o0) * oh_n * ow_n;
    for (int64_t ci = 0; ci < cpg; ++ci) {
        T* vol = dx_g + ci * id_n * ih_n * iw_n;
        for (int64_t kd = 0; kd < d.kernel[0]; ++kd)
            for (int64_t kh = 0; kh < d.kernel[1]; ++kh)
                for (int64_t kw = 0; kw < d.kernel[2]; ++kw) {
                    const T* row = col + (((ci * d.kernel[0] + kd) * d.kernel[1] + kh) * d.kernel[2] + kw) * cols;
                    for (int64_t od = o0; od < o1; ++od) {
                        const int64_t id = od * d.stride[0] - d.pad[0] + kd;
                        if (id < 0 || id >= id_n) continue;
                        for (int64_t oh = 0; oh < oh_n; ++oh) {
                            const int64_t ih = oh * d.stride[1] - d.pad[1] + kh;
                            if (ih < 0 || ih >= ih_n) continue;
                            const T* in = row + ((od - o0) * oh_n + oh) * ow_n;
                            T* out = vol + (id * ih_n + ih) * iw_n;
                            for (int64_t ow = 0; ow < ow_n; ++ow) {
                                const int64_t iw = ow * d.stride[2] - d.pad[2] + kw;
                                if (iw >= 0 && iw < iw_n) out[iw] += in[ow];
                            }
                        }
                    }
                }
    }
}

bool is_pointwise(const ConvDims& d) {
    return d.kvol() == 1 && d.stride == std::array<int64_t, 3>{1, 1, 1} && d.pad == std::array<int64_t, 3>{0, 0, 0};
}

// Small-output layers are bottlenecked by streaming the weight matrix, so the
// GEMM is batched across samples (one pass over the weights instead of one
// per sample).
bool batch_small_output(const ConvDims& d) {
    const int64_t k_rows = (d.cin / d.groups) * d.kvol();
    return d.batch > 1 && d.out_spatial() <= 4096 && k_rows * d.batch * d.out_spatial() <= (int64_t(1) << 24);
}

}  // namespace

template <typename T>
void conv_forward(const T* x, const T* w, const T* bias, T* y, const ConvDims& d) {
    const int64_t cpg_in = d.cin / d.groups, cpg_out = d.cout / d.groups;
    const int64_t isp = d.in_spatial(), osp = d.out_spatial();
    const int64_t k_rows = cpg_in * d.kvol();
    if (!is_pointwise(d) && batch_small_output(d)) {
        const int64_t outer = d.nd == 3 ? d.osp[0] : d.osp[1];
        std::vector<T> col(static_cast<size_t>(k_rows * d.batch * osp));
        std::vector<T> out(static_cast<size_t>(cpg_out * d.batch * osp));
        for (int64_t g = 0; g < d.groups; ++g) {
            for (int64_t n = 0; n < d.batch; ++n) {
                // per-sample columns land in one wide matrix
                std::vector<T> cn(static_cast<size_t>(k_rows * osp));
                im2col(x + (n * d.cin + g * cpg_in) * isp, cn.data(), d, 0, outer);
                for (int64_t r = 0; r < k_rows; ++r)
                    std::copy(cn.data() + r * osp, cn.data() + (r + 1) * osp,
                              col.data() + r * d.batch * osp + n * osp);
            }
            gemm<T>(false, false, cpg_out, d.batch * osp, k_rows, T(1), w + g * cpg_out * k_rows, k_rows, col.data(),
                    d.batch * osp, T(0), out.data(), d.batch * osp);
            for (int64_t co = 0; co < cpg_out; ++co)
                for (int64_t n = 0; n < d.batch; ++n)
                    std::copy(out.data() + co * d.batch * osp + n * osp, out.data() + co * d.batch * osp + (n + 1) * osp,
                              y + (n * d.cout + g * cpg_out + co) * osp);
        }
        if (bias)
            for (int64_t n = 0; n < d.batch; ++n)
                for (int64_t c = 0; c < d.cout; ++c) {
                    T* row = y + (n * d.cout + c) * osp;
                    for (int64_t i = 0; i < osp; ++i) row[i] += bias[c];
                }
        return;
    }
    if (is_pointwise(d)) {
        if (batch_small_output(d)) {
            std::vector<T> xin(static_cast<size_t>(cpg_in * d.batch * osp));
            std::vector<T> out(static_cast<size_t>(cpg_out * d.batch * osp));
            for (int64_t g = 0; g < d.groups; ++g) {
                for (int64_t ci = 0; ci < cpg_in; ++ci)
                    for (int64_t n = 0; n < d.batch; ++n)
                        std::copy(x + (n * d.cin + g * cpg_in + ci) * osp, x + (n * d.cin + g * cpg_in + ci + 1) * osp,
                                  xin.data() + ci * d.batch * osp + n * osp);
                gemm<T>(false, false, cpg_out, d.batch * osp, cpg_in, T(1), w + g * cpg_out * k_rows, k_rows,
                        xin.data(), d.batch * osp, T(0), out.data(), d.batch * osp);
                for (int64_t co = 0; co < cpg_out; ++co)
                    for (int64_t n = 0; n < d.batch; ++n)
                        std::copy(out.data() + co * d.batch * osp + n * osp,
                                  out.data() + co * d.batch * osp + (n + 1) * osp,
                                  y + (n * d.cout + g * cpg_out + co) * osp);
            }
        } else {
            for (int64_t n = 0; n < d.batch; ++n)
                for (int64_t g = 0; g < d.groups; ++g)
                    gemm<T>(false, false, cpg_out, osp, cpg_in, T(1), w + g * cpg_out * k_rows, k_rows,
                            x + (n * d.cin + g * cpg_in) * isp, osp, T(0), y + (n * d.cout + g * cpg_out) * osp, osp);
        }
    } else {
        const int64_t inner = d.nd == 3 ? d.osp[1] * d.osp[2] : d.osp[2];
        const int64_t outer = d.nd == 3 ? d.osp[0] : d.osp[1];
        const int64_t chunk = slab_rows(d);
        std::vector<T> col(static_cast<size_t>(k_rows * chunk * inner));
        for (int64_t n = 0; n < d.batch; ++n)
            for (int64_t g = 0; g < d.groups; ++g)
                for (int64_t o0 = 0; o0 < outer; o0 += chunk) {
                    const int64_t o1 = std::min(outer, o0 + chunk);
                    const int64_t cols = (o1 - o0) * inner;
                    im2col(x + (n * d.cin + g * cpg_in) * isp, col.data(), d, o0, o1);
                    gemm<T>(false, false, cpg_out, cols, k_rows, T(1), w + g * cpg_out * k_rows, k_rows,
                            col.data(), cols, T(0), y + (n * d.cout + g * cpg_out) * osp + o0 * inner, osp);
                }
    }
    if (bias) {
        for (int64_t n = 0; n < d.batch; ++n)
            for (int64_t c = 0; c < d.cout; ++c) {
                T* out = y + (n * d.cout + c) * osp;
                const T b = bias[c];
                for (int64_t i = 0; i < osp; ++i) out[i] += b;
            }
    }
}

template <typename T>
void conv_backward_input(T* dx, const T* w, const T* dy, const ConvDims& d) {
    const int64_t cpg_in = d.cin / d.groups, cpg_out = d.cout / d.groups;
    const int64_t isp = d.in_spatial(), osp = d.out_spatial();
    const int64_t k_rows = cpg_in * d.kvol();
    if (!is_pointwise(d) && batch_small_output(d)) {
        const int64_t outer = d.nd == 3 ? d.osp[0] : d.osp[1];
        std::vector<T> dout(static_cast<size_t>(cpg_out * d.batch * osp));
        std::vector<T> dcol(static_cast<size_t>(k_rows * d.batch * osp));
        std::vector<T> cn(static_cast<size_t>(k_rows * osp));
        for (int64_t g = 0; g < d.groups; ++g) {
            for (int64_t co = 0; co < cpg_out; ++co)
                for (int64_t n = 0; n < d.batch; ++n)
                    std::copy(dy + (n * d.cout + g * cpg_out + co) * osp, dy + (n * d.cout + g * cpg_out + co + 1) * osp,
                              dout.data() + co * d.batch * osp + n * osp);
            gemm<T>(true, false, k_rows, d.batch * osp, cpg_out, T(1), w + g * cpg_out * k_rows, k_rows, dout.data(),
                    d.batch * osp, T(0), dcol.data(), d.batch * osp);
            for (int64_t n = 0; n < d.batch; ++n) {
                for (int64_t r = 0; r < k_rows; ++r)
                    std::copy(dcol.data() + r * d.batch * osp + n * osp, dcol.data() + r * d.batch * osp + (n + 1) * osp,
                              cn.data() + r * osp);
                col2im_add(cn.data(), dx + (n * d.cin + g * cpg_in) * isp, d, 0, outer);
            }
        }
        return;
    }
    if (is_pointwise(d)) {
        if (batch_small_output(d)) {
            std::vector<T> dout(static_cast<size_t>(cpg_out * d.batch * osp));
            std::vector<T> din(static_cast<size_t>(cpg_in * d.batch * osp));
            for (int64_t g = 0; g < d.groups; ++g) {
                for (int64_t co = 0; co < cpg_out; ++co)
                    for (int64_t n = 0; n < d.batch; ++n)
                        std::copy(dy + (n * d.cout + g * cpg_out + co) * osp,
                                  dy + (n * d.cout + g * cpg_out + co + 1) * osp,
                                  dout.data() + co * d.batch * osp + n * osp);
                gemm<T>(true, false, cpg_in, d.batch * osp, cpg_out, T(1), w + g * cpg_out * k_rows, k_rows,
                        dout.data(), d.batch * osp, T(0), din.data(), d.batch * osp);
                for (int64_t ci = 0; ci < cpg_in; ++ci)
                    for (int64_t n = 0; n < d.batch; ++n) {
                        T* out = dx + (n * d.cin + g * cpg_in + ci) * osp;
                        const T* src = din.data() + ci * d.batch * osp + n * osp;
                        for (int64_t i = 0; i < osp; ++i) out[i] += src[i];
                    }
            }
            return;
        }
        for (int64_t n = 0; n < d.batch; ++n)
            for (int64_t g = 0; g < d.groups; ++g)
                gemm<T>(true, false, cpg_in, osp, cpg_out, T(1), w + g * cpg_out * k_rows, k_rows,
                        dy + (n * d.cout + g * cpg_out) * osp, osp, T(1), dx + (n * d.cin + g * cpg_in) * isp, osp);
        return;
    }
    const int64_t inner = d.nd == 3 ? d.osp[1] * d.osp[2] : d.osp[2];
    const int64_t outer = d.nd == 3 ? d.osp[0] : d.osp[1];
    const int64_t chunk = slab_rows(d);
    std::vector<T> col(static_cast<size_t>(k_rows * chunk * inner));
    for (int64_t n = 0; n < d.batch; ++n)
        for (int64_t g = 0; g < d.groups; ++g)
            for (int64_t o0 = 0; o0 < outer; o0 += chunk) {
                const int64_t o1 = std::min(outer, o0 + chunk);
                const int64_t cols = (o1 - o0) * inner;
                gemm<T>(true, false, k_rows, cols, cpg_out, T(1), w + g * cpg_out * k_rows, k_rows,
                        dy + (n * d.cout + g * cpg_out) * osp + o0 * inner, osp, T(0), col.data(), cols);
                col2im_add(col.data(), dx + (n * d.cin + g * cpg_in) * isp, d, o0, o1);
            }
}

template <typename T>
void conv_backward_weight(const T* x, T* dw, const T* dy, const ConvDims& d) {
    const int64_t cpg_in = d.cin / d.groups, cpg_out = d.cout / d.groups;
    const int64_t isp = d.in_spatial(), osp = d.out_spatial();
    const int64_t k_rows = cpg_in * d.kvol();
    if (!is_pointwise(d) && batch_small_output(d)) {
        const int64_t outer = d.nd == 3 ? d.osp[0] : d.osp[1];
        std::vector<T> col(static_cast<size_t>(k_rows * d.batch * osp));
        std::vector<T> dout(static_cast<size_t>(cpg_out * d.batch * osp));
        std::vector<T> cn(static_cast<size_t>(k_rows * osp));
        for (int64_t g = 0; g < d.groups; ++g) {
            for (int64_t n = 0; n < d.batch; ++n) {
                im2col(x + (n * d.cin + g * cpg_in) * isp, cn.data(), d, 0, outer);
                for (int64_t r = 0; r < k_rows; ++r)
                    std::copy(cn.data() + r * osp, cn.data() + (r + 1) * osp,
                              col.data() + r * d.batch * osp + n * osp);
            }
            for (int64_t co = 0; co < cpg_out; ++co)
                for (int64_t n = 0; n < d.batch; ++n)
                    std::copy(dy + (n * d.cout + g * cpg_out + co) * osp, dy + (n * d.cout + g * cpg_out + co + 1) * osp,
                              dout.data() + co * d.batch * osp + n * osp);
            gemm<T>(false, true, cpg_out, k_rows, d.batch * osp, T(1), dout.data(), d.batch * osp, col.data(),
                    d.batch * osp, T(1), dw + g * cpg_out * k_rows, k_rows);
        }
        return;
    }
    if (is_pointwise(d)) {
        if (batch_small_output(d)) {
            std::vector<T> dout(static_cast<size_t>(cpg_out * d.batch * osp));
            std::vector<T> xin(static_cast<size_t>(cpg_in * d.batch * osp));
            for (int64_t g = 0; g < d.groups; ++g) {
                for (int64_t co = 0; co < cpg_out; ++co)
                    for (int64_t n = 0; n < d.batch; ++n)
                        std::copy(dy + (n * d.cout + g * cpg_out + co) * osp,
                                  dy + (n * d.cout + g * cpg_out + co + 1) * osp,
                                  dout.data() + co * d.batch * osp + n * osp);
                for (int64_t ci = 0; ci < cpg_in; ++ci)
                    for (int64_t n = 0; n < d.batch; ++n)
                        std::copy(x + (n * d.cin + g * cpg_in + ci) * osp, x + (n * d.cin + g * cpg_in + ci + 1) * osp,
                                  xin.data() + ci * d.batch * osp + n * osp);
                gemm<T>(false, true, cpg_out, cpg_in, d.batch * osp, T(1), dout.data(), d.batch * osp, xin.data(),
                        d.batch * osp, T(1), dw + g * cpg_out * k_rows, k_rows);
            }
            return;
        }
        for (int64_t n = 0; n < d.batch; ++n)
            for (int64_t g = 0; g < d.groups; ++g)
                gemm<T>(false, true, cpg_out, k_rows, osp, T(1), dy + (n * d.cout + g * cpg_out) * osp, osp,
                        x + (n * d.cin + g * cpg_in) * isp, osp, T(1), dw + g * cpg_out * k_rows, k_rows);
        return;
    }
    const int64_t inner = d.nd == 3 ? d.osp[1] * d.osp[2] : d.osp[2];
    const int64_t outer = d.nd == 3 ? d.osp[0] : d.osp[1];
    const int64_t chunk = slab_rows(d);
    std::vector<T> col(static_cast<size_t>(k_rows * chunk * inner));
    for (int64_t n = 0; n < d.batch; ++n)
        for (int64_t g = 0; g < d.groups; ++g)
            for (int64_t o0 = 0; o0 < outer; o0 += chunk) {
                const int64_t o1 = std::min(outer, o0 + chunk);
                const int64_t cols = (o1 - o0) * inner;
                im2col(x + (n * d.cin + g * cpg_in) * isp, col.data(), d, o0, o1);
                gemm<T>(false, true, cpg_out, k_rows, cols, T(1),
                        dy + (n * d.cout + g * cpg_out) * osp + o0 * inner, osp, col.data(), cols, T(1),
                        dw + g * cpg_out * k_rows, k_rows);
            }
}

template <typename T>
void conv_backward_bias(T* db, const T* dy, const ConvDims& d) {
    const int64_t osp = d.out_spatial();
    for (int64_t n = 0; n < d.batch; ++n)
        for (int64_t c = 0; c < d.cout; ++c) {
            const T* in = dy + (n * d.cout + c) * osp;
            double acc = 0.0;
            for (int64_t i = 0; i < osp; ++i) acc += static_cast<double>(in[i]);
            db[c] += static_cast<T>(acc);
        }
}

template void conv_forward<float>(const float*, const float*, const float*, float*, const ConvDims&);
template void conv_forward<double>(const double*, const double*, const double*, double*, const ConvDims&);
template void conv_backward_input<float>(float*, const float*, const float*, const ConvDims&);
template void conv_backward_input<double>(double*, const double*, const double*, const ConvDims&);
template void conv_backward_weight<float>(const float*, float*, const float*, const ConvDims&);
template void conv_backward_weight<double>(const double*, double*, const double*, const ConvDims&);
template void conv_backward_bias<float>(float*, const float*, const ConvDims&);
template void conv_backward_bias<double>(double*, const double*, const ConvDims&);

}  // namespace panet::detail
