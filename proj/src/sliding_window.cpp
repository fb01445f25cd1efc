#include <cmath>

#include "panet/core/kernels.hpp"
#include "panet/infer/inference.hpp"

namespace panet {

void SlidingWindowSpec::validate() const {
    if (patch.empty() || patch.size() > 3) throw ConfigError("sliding window: patch must have 1-3 axes");
    for (int64_t p : patch)
        if (p < 1) throw ConfigError("sliding window: patch extents must be positive");
    if (overlap < 0.0 || overlap >= 1.0)
        throw ConfigError("sliding window: overlap must lie in [0,1) (stride would be zero)");
    for (int64_t p : patch)
        if (static_cast<int64_t>(std::llround(p * (1.0 - overlap))) < 1)
            throw ConfigError("sliding window: overlap too large, stride rounds to zero");
}

std::vector<int64_t> window_starts(int64_t size, int64_t patch, double overlap) {
    const int64_t stride = static_cast<int64_t>(std::llround(patch * (1.0 - overlap)));
    if (stride < 1) throw ConfigError("sliding window: stride is zero");
    std::vector<int64_t> starts;
    for (int64_t p = 0;; p += stride) {
        const int64_t s = std::min(p, size - patch);
        starts.push_back(s);
        if (s == size - patch) break;
    }
    return starts;
}

FTensor sliding_window_predict(const PatchPredictor& predict, const FTensor& volume, const SlidingWindowSpec& spec,
                               int64_t out_channels) {
    spec.validate();
    const int nd = static_cast<int>(volume.rank()) - 1;
    require(nd == static_cast<int>(spec.patch.size()), "sliding window: patch rank does not match the volume");
    const int64_t channels = volume.size(0);
    std::vector<int64_t> vsp(volume.shape().begin() + 1, volume.shape().end());

    // Reflect-pad axes smaller than the patch.
    std::vector<int64_t> lo(static_cast<size_t>(nd), 0), hi(static_cast<size_t>(nd), 0), psp = vsp;
    bool padded = false;
    for (int d = 0; d < nd; ++d)
        if (vsp[static_cast<size_t>(d)] < spec.patch[static_cast<size_t>(d)]) {
            const int64_t missing = spec.patch[static_cast<size_t>(d)] - vsp[static_cast<size_t>(d)];
            lo[static_cast<size_t>(d)] = missing / 2;
            hi[static_cast<size_t>(d)] = missing - missing / 2;
            psp[static_cast<size_t>(d)] = spec.patch[static_cast<size_t>(d)];
            padded = true;
        }
    FTensor work = volume;
    if (padded) {
        Shape ws{channels};
        for (int64_t v : psp) ws.push_back(v);
        work = FTensor(ws);
        detail::pad_reflect(volume.data(), work.data(), nd, channels, vsp.data(), lo.data(), hi.data());
    }

    std::vector<std::vector<int64_t>> starts;
    int64_t n_windows = 1;
    for (int d = 0; d < nd; ++d) {
        starts.push_back(window_starts(psp[static_cast<size_t>(d)], spec.patch[static_cast<size_t>(d)], spec.overlap));
        n_windows *= static_cast<int64_t>(starts.back().size());
    }

    const int64_t work_sp = numel_of(Shape(psp.begin(), psp.end()));
    const int64_t patch_sp = numel_of(Shape(spec.patch.begin(), spec.patch.end()));
    std::vector<double> acc(static_cast<size_t>(out_channels * work_sp), 0.0);
    std::vector<int32_t> cover(static_cast<size_t>(work_sp), 0);

    Shape pshape{channels};
    for (int64_t v : spec.patch) pshape.push_back(v);

    for (int64_t w = 0; w < n_windows; ++w) {
        // canonical order: last axis fastest
        std::vector<int64_t> origin(static_cast<size_t>(nd));
        int64_t rem = w;
        for (int d = nd - 1; d >= 0; --d) {
            const auto& s = starts[static_cast<size_t>(d)];
            origin[static_cast<size_t>(d)] = s[static_cast<size_t>(rem % static_cast<int64_t>(s.size()))];
            rem /= static_cast<int64_t>(s.size());
        }
        FTensor patch(pshape);
        // gather
        std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
        for (int64_t i = 0; i < patch_sp; ++i) {
            int64_t flat = 0;
            for (int d = 0; d < nd; ++d)
                flat = flat * psp[static_cast<size_t>(d)] + origin[static_cast<size_t>(d)] + idx[static_cast<size_t>(d)];
            for (int64_t c = 0; c < channels; ++c) patch[c * patch_sp + i] = work[c * work_sp + flat];
            for (int d = nd - 1; d >= 0; --d) {
                if (++idx[static_cast<size_t>(d)] < spec.patch[static_cast<size_t>(d)]) break;
                idx[static_cast<size_t>(d)] = 0;
            }
        }
        const FTensor pred = predict(patch);
        require(pred.rank() == nd + 1 && pred.size(0) == out_channels &&
                    std::equal(pred.shape().begin() + 1, pred.shape().end(), spec.patch.begin()),
                "sliding window: predictor returned " + shape_str(pred.shape()));
        // scatter-accumulate
        std::fill(idx.begin(), idx.end(), 0);
        for (int64_t i = 0; i < patch_sp; ++i) {
            int64_t flat = 0;
            for (int d = 0; d < nd; ++d)
                flat = flat * psp[static_cast<size_t>(d)] + origin[static_cast<size_t>(d)] + idx[static_cast<size_t>(d)];
            ++cover[static_cast<size_t>(flat)];
            for (int64_t c = 0; c < out_channels; ++c)
                acc[static_cast<size_t>(c * work_sp + flat)] += static_cast<double>(pred[c * patch_sp + i]);
            for (int d = nd - 1; d >= 0; --d) {
                if (++idx[static_cast<size_t>(d)] < spec.patch[static_cast<size_t>(d)]) break;
                idx[static_cast<size_t>(d)] = 0;
            }
        }
    }

    // mean fusion, then crop the padding away
    Shape oshape{out_channels};
    for (int64_t v : vsp) oshape.push_back(v);
    FTensor out(oshape);
    const int64_t out_sp = numel_of(Shape(vsp.begin(), vsp.end()));
    std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
    for (int64_t i = 0; i < out_sp; ++i) {
        int64_t flat = 0;
        for (int d = 0; d < nd; ++d)
            flat = flat * psp[static_cast<size_t>(d)] + lo[static_cast<size_t>(d)] + idx[static_cast<size_t>(d)];
        for (int64_t c = 0; c < out_channels; ++c)
            out[c * out_sp + i] = static_cast<float>(acc[static_cast<size_t>(c * work_sp + flat)] /
                                                     cover[static_cast<size_t>(flat)]);
        for (int d = nd - 1; d >= 0; --d) {
            if (++idx[static_cast<size_t>(d)] < vsp[static_cast<size_t>(d)]) break;
            idx[static_cast<size_t>(d)] = 0;
        }
    }
    return out;
}

}  // namespace panet
