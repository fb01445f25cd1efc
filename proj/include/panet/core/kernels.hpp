#pragma once

#include <array>
#include <cstdint>

#include "panet/core/common.hpp"

// Low-level numeric kernels. All tensors are dense row-major; spatial layouts
// are [N, C, H, W] (nd=2) or [N, C, D, H, W] (nd=3). Backward kernels
// accumulate into their output buffers.
namespace panet::detail {

template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, T alpha, const T* a, int64_t lda,
          const T* b, int64_t ldb, T beta, T* c, int64_t ldc);

struct ConvDims {
    int nd = 2;
    int64_t batch = 0, cin = 0, cout = 0, groups = 1;
    std::array<int64_t, 3> isp{1, 1, 1};     // input spatial extents
    std::array<int64_t, 3> osp{1, 1, 1};     // output spatial extents
    std::array<int64_t, 3> kernel{1, 1, 1};
    std::array<int64_t, 3> stride{1, 1, 1};
    std::array<int64_t, 3> pad{0, 0, 0};

    int64_t in_spatial() const { return isp[0] * isp[1] * isp[2]; }
    int64_t out_spatial() const { return osp[0] * osp[1] * osp[2]; }
    int64_t kvol() const { return kernel[0] * kernel[1] * kernel[2]; }
};

// Weight layout: [cout, cin/groups, kvol]; bias (optional): [cout].
template <typename T>
void conv_forward(const T* x, const T* w, const T* bias, T* y, const ConvDims& d);
template <typename T>
void conv_backward_input(T* dx, const T* w, const T* dy, const ConvDims& d);
template <typename T>
void conv_backward_weight(const T* x, T* dw, const T* dy, const ConvDims& d);
template <typename T>
void conv_backward_bias(T* db, const T* dy, const ConvDims& d);

// Linear interpolation with half-pixel (align_corners=false) sampling.
template <typename T>
void interp_linear_forward(const T* x, T* y, int nd, int64_t nc, const int64_t* isp, const int64_t* osp);
template <typename T>
void interp_linear_backward(T* dx, const T* dy, int nd, int64_t nc, const int64_t* isp, const int64_t* osp);
template <typename T>
void interp_nearest(const T* x, T* y, int nd, int64_t nc, const int64_t* isp, const int64_t* osp);

// Max pooling; argmax stores flat spatial indices into the input plane.
template <typename T>
void maxpool_forward(const T* x, T* y, int64_t* argmax, const ConvDims& d);
template <typename T>
void maxpool_backward(T* dx, const T* dy, const int64_t* argmax, const ConvDims& d);

// Normalization. save_mean / save_inv_std have one entry per statistics group
// (per channel for batch norm, per sample-channel for instance norm).
template <typename T>
void batch_norm_forward(const T* x, T* y, const T* gamma, const T* beta, T* running_mean, T* running_var,
                        T* save_mean, T* save_inv_std, int64_t n, int64_t c, int64_t sp, bool training,
                        double momentum, double eps);
template <typename T>
void batch_norm_backward(const T* x, const T* dy, T* dx, T* dgamma, T* dbeta, const T* gamma,
                         const T* save_mean, const T* save_inv_std, int64_t n, int64_t c, int64_t sp);
template <typename T>
void instance_norm_forward(const T* x, T* y, const T* gamma, const T* beta, T* save_mean, T* save_inv_std,
                           int64_t n, int64_t c, int64_t sp, double eps);
template <typename T>
void instance_norm_backward(const T* x, const T* dy, T* dx, T* dgamma, T* dbeta, const T* gamma,
                            const T* save_mean, const T* save_inv_std, int64_t n, int64_t c, int64_t sp);

template <typename T>
void softmax_channel_forward(const T* x, T* y, int64_t n, int64_t c, int64_t sp);
template <typename T>
void softmax_channel_backward(const T* y, const T* dy, T* dx, int64_t n, int64_t c, int64_t sp);

// Reflect padding over spatial dims (no gradient variant; inference only).
template <typename T>
void pad_reflect(const T* x, T* y, int nd, int64_t nc, const int64_t* isp, const int64_t* lo, const int64_t* hi);

}  // namespace panet::detail
