#include <limits>

#include "panet/core/kernels.hpp"

namespace panet::detail {

template <typename T>
void maxpool_forward(const T* x, T* y, int64_t* argmax, const ConvDims& d) {
    const int64_t isp = d.in_spatial(), osp = d.out_spatial();
    for (int64_t p = 0; p < d.batch * d.cin; ++p) {
        const T* in = x + p * isp;
        T* out = y + p * osp;
        int64_t* am = argmax + p * osp;
        for (int64_t od = 0; od < d.osp[0]; ++od)
            for (int64_t oh = 0; oh < d.osp[1]; ++oh)
                for (int64_t ow = 0; ow < d.osp[2]; ++ow) {
                    T best = -std::numeric_limits<T>::infinity();
                    int64_t best_i = -1;
                    for (int64_t kd = 0; kd < d.kernel[0]; ++kd) {
                        const int64_t id = od * d.stride[0] - d.pad[0] + kd;
                        if (id < 0 || id >= d.isp[0]) continue;
                        for (int64_t kh = 0; kh < d.kernel[1]; ++kh) {
                            const int64_t ih = oh * d.stride[1] - d.pad[1] + kh;
                            if (ih < 0 || ih >= d.isp[1]) continue;
                            for (int64_t kw = 0; kw < d.kernel[2]; ++kw) {
                                const int64_t iw = ow * d.stride[2] - d.pad[2] + kw;
                                if (iw < 0 || iw >= d.isp[2]) continue;
                                const int64_t idx = (id * d.isp[1] + ih) * d.isp[2] + iw;
                                if (in[idx] > best) {
                                    best = in[idx];
                                    best_i = idx;
                                }
                            }
                        }
                    }
                    const int64_t o = (od * d.osp[1] + oh) * d.osp[2] + ow;
                    out[o] = best;
                    am[o] = best_i;
                }
    }
}

template <typename T>
void maxpool_backward(T* dx, const T* dy, const int64_t* argmax, const ConvDims& d) {
    const int64_t isp = d.in_spatial(), osp = d.out_spatial();
    for (int64_t p = 0; p < d.batch * d.cin; ++p) {
        T* din = dx + p * isp;
        const T* dout = dy + p * osp;
        const int64_t* am = argmax + p * osp;
        for (int64_t o = 0; o < osp; ++o)
            if (am[o] >= 0) din[am[o]] += dout[o];
    }
}

template void maxpool_forward<float>(const float*, float*, int64_t*, const ConvDims&);
template void maxpool_forward<double>(const double*, double*, int64_t*, const ConvDims&);
template void maxpool_backward<float>(float*, const float*, const int64_t*, const ConvDims&);
template void maxpool_backward<double>(double*, const double*, const int64_t*, const ConvDims&);

}  // namespace panet::detail
