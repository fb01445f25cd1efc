#include <cmath>

#include "panet/core/kernels.hpp"

namespace panet::detail {

template <typename T>
void batch_norm_forward(const T* x, T* y, const T* gamma, const T* beta, T* running_mean, T* running_var,
                        T* save_mean, T* save_inv_std, int64_t n, int64_t c, int64_t sp, bool training,
                        double momentum, double eps) {
    const int64_t count = n * sp;
    for (int64_t ch = 0; ch < c; ++ch) {
        double mean, var;
        if (training) {
            double s = 0.0, s2 = 0.0;
            for (int64_t b = 0; b < n; ++b) {
                const T* in = x + (b * c + ch) * sp;
                for (int64_t i = 0; i < sp; ++i) {
                    const double v = static_cast<double>(in[i]);
                    s += v;
                    s2 += v * v;
                }
            }
            mean = s / count;
            var = s2 / count - mean * mean;
            if (var < 0.0) var = 0.0;
            const double unbiased = count > 1 ? var * count / (count - 1) : var;
            running_mean[ch] = static_cast<T>((1.0 - momentum) * running_mean[ch] + momentum * mean);
            running_var[ch] = static_cast<T>((1.0 - momentum) * running_var[ch] + momentum * unbiased);
        } else {
            mean = static_cast<double>(running_mean[ch]);
            var = static_cast<double>(running_var[ch]);
        }
        const double inv_std = 1.0 / std::sqrt(var + eps);
        if (save_mean) save_mean[ch] = static_cast<T>(mean);
        if (save_inv_std) save_inv_std[ch] = static_cast<T>(inv_std);
        const double g = static_cast<double>(gamma[ch]) * inv_std;
        const double b0 = static_cast<double>(beta[ch]) - g * mean;
        for (int64_t b = 0; b < n; ++b) {
            const T* in = x + (b * c + ch) * sp;
            T* out = y + (b * c + ch) * sp;
            for (int64_t i = 0; i < sp; ++i) out[i] = static_cast<T>(g * in[i] + b0);
        }
    }
}

// Training-mode backward through the batch statistics.
template <typename T>
void batch_norm_backward(const T* x, const T* dy, T* dx, T* dgamma, T* dbeta, const T* gamma,
                         const T* save_mean, const T* save_inv_std, int64_t n, int64_t c, int64_t sp) {
    const int64_t count = n * sp;
    for (int64_t ch = 0; ch < c; ++ch) {
        const double mean = save_mean[ch], inv_std = save_inv_std[ch];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int64_t b = 0; b < n; ++b) {
            const T* in = x + (b * c + ch) * sp;
            const T* g = dy + (b * c + ch) * sp;
            for (int64_t i = 0; i < sp; ++i) {
                const double xhat = (in[i] - mean) * inv_std;
                sum_dy += g[i];
                sum_dy_xhat += g[i] * xhat;
            }
        }
        dgamma[ch] += static_cast<T>(sum_dy_xhat);
        dbeta[ch] += static_cast<T>(sum_dy);
        const double k = static_cast<double>(gamma[ch]) * inv_std;
        for (int64_t b = 0; b < n; ++b) {
            const T* in = x + (b * c + ch) * sp;
            const T* g = dy + (b * c + ch) * sp;
            T* out = dx + (b * c + ch) * sp;
            for (int64_t i = 0; i < sp; ++i) {
                const double xhat = (in[i] - mean) * inv_std;
                out[i] += static_cast<T>(k * (g[i] - sum_dy / count - xhat * sum_dy_xhat / count));
            }
        }
    }
}

template <typename T>
void instance_norm_forward(const T* x, T* y, const T* gamma, const T* beta, T* save_mean, T* save_inv_std,
                           int64_t n, int64_t c, int64_t sp, double eps) {
    for (int64_t b = 0; b < n; ++b)
        for (int64_t ch = 0; ch < c; ++ch) {
            const T* in = x + (b * c + ch) * sp;
            T* out = y + (b * c + ch) * sp;
            double s = 0.0, s2 = 0.0;
            for (int64_t i = 0; i < sp; ++i) {
                const double v = static_cast<double>(in[i]);
                s += v;
                s2 += v * v;
            }
            const double mean = s / sp;
            double var = s2 / sp - mean * mean;
            if (var < 0.0) var = 0.0;
            const double inv_std = 1.0 / std::sqrt(var + eps);
            if (save_mean) save_mean[b * c + ch] = static_cast<T>(mean);
            if (save_inv_std) save_inv_std[b * c + ch] = static_cast<T>(inv_std);
            const double g = static_cast<double>(gamma[ch]) * inv_std;
            const double b0 = static_cast<double>(beta[ch]) - g * mean;
            for (int64_t i = 0; i < sp; ++i) out[i] = static_cast<T>(g * in[i] + b0);
        }
}

template <typename T>
void instance_norm_backward(const T* x, const T* dy, T* dx, T* dgamma, T* dbeta, const T* gamma,
                            const T* save_mean, const T* save_inv_std, int64_t n, int64_t c, int64_t sp) {
    for (int64_t b = 0; b < n; ++b)
        for (int64_t ch = 0; ch < c; ++ch) {
            const T* in = x + (b * c + ch) * sp;
            const T* g = dy + (b * c + ch) * sp;
            T* out = dx + (b * c + ch) * sp;
            const double mean = save_mean[b * c + ch], inv_std = save_inv_std[b * c + ch];
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int64_t i = 0; i < sp; ++i) {
                const double xhat = (in[i] - mean) * inv_std;
                sum_dy += g[i];
                sum_dy_xhat += g[i] * xhat;
            }
            dgamma[ch] += static_cast<T>(sum_dy_xhat);
            dbeta[ch] += static_cast<T>(sum_dy);
            const double k = static_cast<double>(gamma[ch]) * inv_std;
            for (int64_t i = 0; i < sp; ++i) {
                const double xhat = (in[i] - mean) * inv_std;
                out[i] += static_cast<T>(k * (g[i] - sum_dy / sp - xhat * sum_dy_xhat / sp));
            }
        }
}

template <typename T>
void softmax_channel_forward(const T* x, T* y, int64_t n, int64_t c, int64_t sp) {
    for (int64_t b = 0; b < n; ++b)
        for (int64_t i = 0; i < sp; ++i) {
            const T* in = x + b * c * sp + i;
            T* out = y + b * c * sp + i;
            double mx = -1e300;
            for (int64_t ch = 0; ch < c; ++ch) mx = std::max(mx, static_cast<double>(in[ch * sp]));
            double denom = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) denom += std::exp(static_cast<double>(in[ch * sp]) - mx);
            for (int64_t ch = 0; ch < c; ++ch)
                out[ch * sp] = static_cast<T>(std::exp(static_cast<double>(in[ch * sp]) - mx) / denom);
        }
}

template <typename T>
void softmax_channel_backward(const T* y, const T* dy, T* dx, int64_t n, int64_t c, int64_t sp) {
    for (int64_t b = 0; b < n; ++b)
        for (int64_t i = 0; i < sp; ++i) {
            const T* p = y + b * c * sp + i;
            const T* g = dy + b * c * sp + i;
            T* out = dx + b * c * sp + i;
            double dot = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) dot += static_cast<double>(p[ch * sp]) * g[ch * sp];
            for (int64_t ch = 0; ch < c; ++ch)
                out[ch * sp] += static_cast<T>(static_cast<double>(p[ch * sp]) * (g[ch * sp] - dot));
        }
}

#define PANET_INST_NORM(T)                                                                                     \
    template void batch_norm_forward<T>(const T*, T*, const T*, const T*, T*, T*, T*, T*, int64_t, int64_t,    \
                                        int64_t, bool, double, double);                                        \
    template void batch_norm_backward<T>(const T*, const T*, T*, T*, T*, const T*, const T*, const T*,        \
                                         int64_t, int64_t, int64_t);                                           \
    template void instance_norm_forward<T>(const T*, T*, const T*, const T*, T*, T*, int64_t, int64_t,        \
                                           int64_t, double);                                                   \
    template void instance_norm_backward<T>(const T*, const T*, T*, T*, T*, const T*, const T*, const T*,     \
                                            int64_t, int64_t, int64_t);                                        \
    template void softmax_channel_forward<T>(const T*, T*, int64_t, int64_t, int64_t);                        \
    template void softmax_channel_backward<T>(const T*, const T*, T*, int64_t, int64_t, int64_t);

PANET_INST_NORM(float)
PANET_INST_NORM(double)

}  // namespace panet::detail
