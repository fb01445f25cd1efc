#pragma once

#include "panet/nn/layers.hpp"

namespace panet {

// Resizes a stride-8 attention map to any consumer resolution. Linear
// interpolation is convex, so values stay inside [0,1].
template <typename T>
Var<T> resize_attention(const Var<T>& y, const std::vector<int64_t>& target_spatial) {
    const Shape& s = y->value.shape();
    require(s.size() == target_spatial.size() + 2,
            "resize_attention: target dimensionality mismatch for map " + shape_str(s));
    std::vector<int64_t> cur(s.begin() + 2, s.end());
    if (cur == target_spatial) return y;
    return ops::interp_linear(y, target_spatial);
}

// One compression/fusion step: the deeper feature is channel-compressed,
// linearly upsampled to the shallow resolution, concatenated with the shallow
// feature and fused back to the shallow channel count.
template <typename T>
Var<T> fuse_pair(const Var<T>& deep, const Var<T>& shallow, Conv<T>& compressor, ConvBlock<T>& fuser) {
    const Shape& ds = deep->value.shape();
    const Shape& ss = shallow->value.shape();
    require(ds.size() == ss.size(), "fuse_pair: rank mismatch");
    std::vector<int64_t> target(ss.begin() + 2, ss.end());
    for (size_t i = 2; i < ds.size(); ++i)
        require(ss[i] == 2 * ds[i], "fuse_pair: deep feature must be 2x coarser than shallow, got " + shape_str(ds) +
                                        " vs " + shape_str(ss));
    auto up = ops::interp_linear(compressor.forward(deep), target);
    return fuser.forward(ops::concat_channels<T>({up, shallow}));
}

// Lesion-prior spatial attention from the three deepest encoder features.
// Native resolution is stride 8 (the resolution of the third pyramid level).
template <typename T>
class AttentionGuidingDecoder : public Module<T> {
  public:
    AttentionGuidingDecoder(int nd, int64_t c3, int64_t c4, int64_t c5, int64_t fuse_kernel, bool fuse_norm_act,
                            NormKind norm, ActKind act)
        : compress5_(this->template register_module<Conv<T>>("compress5",
                                                             std::make_shared<Conv<T>>(nd, c5, c4, 1))),
          fuse54_(this->template register_module<ConvBlock<T>>(
              "fuse54", std::make_shared<ConvBlock<T>>(nd, 2 * c4, c4, fuse_kernel,
                                                       fuse_norm_act ? norm : NormKind::None,
                                                       fuse_norm_act ? act : ActKind::None))),
          compress4_(this->template register_module<Conv<T>>("compress4",
                                                             std::make_shared<Conv<T>>(nd, c4, c3, 1))),
          fuse43_(this->template register_module<ConvBlock<T>>(
              "fuse43", std::make_shared<ConvBlock<T>>(nd, 2 * c3, c3, fuse_kernel,
                                                       fuse_norm_act ? norm : NormKind::None,
                                                       fuse_norm_act ? act : ActKind::None))),
          out_(this->template register_module<Conv<T>>("out", std::make_shared<Conv<T>>(nd, c3, 1, 1))) {}

    // Y = sigmoid(out(fuse(fuse(X5, X4), X3))), every element in (0,1).
    Var<T> forward(const Var<T>& x3, const Var<T>& x4, const Var<T>& x5) {
        auto z5 = fuse_pair(x5, x4, *compress5_, *fuse54_);
        auto z4 = fuse_pair(z5, x3, *compress4_, *fuse43_);
        auto y = ops::sigmoid(out_->forward(z4));
        // Guards the open-interval contract against float saturation on
        // extreme inputs; 0.5 and the usual operating range are untouched.
        return ops::clamp(y, static_cast<T>(1e-12), static_cast<T>(1.0 - 1e-7));
    }

  private:
    std::shared_ptr<Conv<T>> compress5_;
    std::shared_ptr<ConvBlock<T>> fuse54_;
    std::shared_ptr<Conv<T>> compress4_;
    std::shared_ptr<ConvBlock<T>> fuse43_;
    std::shared_ptr<Conv<T>> out_;
};

}  // namespace panet
