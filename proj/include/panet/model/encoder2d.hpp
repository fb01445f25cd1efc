#pragma once

#include "panet/nn/layers.hpp"

namespace panet {

// Feature extractors yield a 5-level pyramid; channel counts never decrease
// with depth and spatial sizes follow the per-level stride exactly.
template <typename T>
class Encoder : public Module<T> {
  public:
    virtual std::vector<Var<T>> forward_pyramid(const Var<T>& x) = 0;
    virtual const std::vector<int64_t>& channels() const = 0;
    virtual const std::vector<int64_t>& strides() const = 0;
    virtual int nd() const = 0;
};

// ResNeXt bottleneck (32 groups).
template <typename T>
class Bottleneck2d : public Module<T> {
  public:
    Bottleneck2d(int64_t cin, int64_t width, int64_t cout, int64_t stride, int64_t groups)
        : conv1_(this->template register_module<ConvBlock<T>>(
              "conv1", std::make_shared<ConvBlock<T>>(2, cin, width, 1, NormKind::Batch, ActKind::ReLU))),
          conv2_(this->template register_module<ConvBlock<T>>(
              "conv2",
              std::make_shared<ConvBlock<T>>(2, width, width, 3, NormKind::Batch, ActKind::ReLU, stride, groups))),
          conv3_(this->template register_module<ConvBlock<T>>(
              "conv3", std::make_shared<ConvBlock<T>>(2, width, cout, 1, NormKind::Batch, ActKind::None))) {
        if (stride != 1 || cin != cout)
            downsample_ = this->template register_module<ConvBlock<T>>(
                "downsample", std::make_shared<ConvBlock<T>>(2, cin, cout, 1, NormKind::Batch, ActKind::None, stride));
    }

    Var<T> forward(const Var<T>& x) {
        auto main = conv3_->forward(conv2_->forward(conv1_->forward(x)));
        auto skip = downsample_ ? downsample_->forward(x) : x;
        return ops::relu(ops::add(main, skip));
    }

  private:
    std::shared_ptr<ConvBlock<T>> conv1_, conv2_, conv3_, downsample_;
};

// ResNeXt-50 (32x4d) layout: strides {2,4,8,16,32}, channels
// {64,256,512,1024,2048}. The stem accepts any input channel count so that
// grayscale slices work with and without pretrained RGB weights.
template <typename T>
class ResNeXt50Encoder : public Encoder<T> {
  public:
    explicit ResNeXt50Encoder(int64_t in_channels)
        : stem_(this->template register_module<ConvBlock<T>>(
              "stem", std::make_shared<ConvBlock<T>>(2, in_channels, 64, 7, NormKind::Batch, ActKind::ReLU, 2))) {
        const int64_t groups = 32;
        struct StageCfg {
            int64_t blocks, width, cout, stride;
        };
        const StageCfg cfg[4] = {{3, 128, 256, 1}, {4, 256, 512, 2}, {6, 512, 1024, 2}, {3, 1024, 2048, 2}};
        int64_t cin = 64;
        for (int s = 0; s < 4; ++s) {
            std::vector<std::shared_ptr<Bottleneck2d<T>>> blocks;
            for (int64_t b = 0; b < cfg[s].blocks; ++b) {
                auto blk = std::make_shared<Bottleneck2d<T>>(b == 0 ? cin : cfg[s].cout, cfg[s].width, cfg[s].cout,
                                                             b == 0 ? cfg[s].stride : 1, groups);
                this->register_module("layer" + std::to_string(s + 1) + "." + std::to_string(b), blk);
                blocks.push_back(blk);
            }
            layers_.push_back(std::move(blocks));
            cin = cfg[s].cout;
        }
    }

    std::vector<Var<T>> forward_pyramid(const Var<T>& x) override {
        std::vector<Var<T>> pyramid;
        auto h = stem_->forward(x);
        pyramid.push_back(h);  // stride 2
        h = ops::maxpool_nd(h, 3, 2, 1);
        for (const auto& layer : layers_) {
            for (const auto& blk : layer) h = blk->forward(h);
            pyramid.push_back(h);  // strides 4, 8, 16, 32
        }
        return pyramid;
    }

    const std::vector<int64_t>& channels() const override {
        static const std::vector<int64_t> c{64, 256, 512, 1024, 2048};
        return c;
    }
    const std::vector<int64_t>& strides() const override {
        static const std::vector<int64_t> s{2, 4, 8, 16, 32};
        return s;
    }
    int nd() const override { return 2; }

  private:
    std::shared_ptr<ConvBlock<T>> stem_;
    std::vector<std::vector<std::shared_ptr<Bottleneck2d<T>>>> layers_;
};

}  // namespace panet
