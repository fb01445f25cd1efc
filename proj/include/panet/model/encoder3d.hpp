#pragma once

#include "panet/model/encoder2d.hpp"

namespace panet {

template <typename T>
class ResBlock3d : public Module<T> {
  public:
    explicit ResBlock3d(int64_t channels)
        : conv1_(this->template register_module<ConvBlock<T>>(
              "conv1", std::make_shared<ConvBlock<T>>(3, channels, channels, 3, NormKind::Instance, ActKind::PReLU))),
          conv2_(this->template register_module<ConvBlock<T>>(
              "conv2", std::make_shared<ConvBlock<T>>(3, channels, channels, 3, NormKind::Instance, ActKind::None))),
          act_(this->template register_module<Act<T>>("act", std::make_shared<Act<T>>(ActKind::PReLU))) {}

    Var<T> forward(const Var<T>& x) { return act_->forward(ops::add(conv2_->forward(conv1_->forward(x)), x)); }

  private:
    std::shared_ptr<ConvBlock<T>> conv1_, conv2_;
    std::shared_ptr<Act<T>> act_;
};

// From-scratch residual encoder for volumes: 5 levels at strides {1,2,4,8,16}
// with channels doubling per level. Downsampling uses strided 3x3x3 padded
// convolutions; instance norm and PReLU throughout.
template <typename T>
class Residual3dEncoder : public Encoder<T> {
  public:
    Residual3dEncoder(int64_t in_channels, int64_t base_channels, int64_t blocks_per_stage)
        : stem_(this->template register_module<ConvBlock<T>>(
              "stem",
              std::make_shared<ConvBlock<T>>(3, in_channels, base_channels, 3, NormKind::Instance, ActKind::PReLU))) {
        for (int level = 0; level < 5; ++level) channels_.push_back(base_channels << level);
        for (int level = 0; level < 5; ++level) {
            Stage stage;
            if (level > 0)
                stage.down = this->template register_module<ConvBlock<T>>(
                    "down" + std::to_string(level),
                    std::make_shared<ConvBlock<T>>(3, channels_[level - 1], channels_[level], 3, NormKind::Instance,
                                                   ActKind::PReLU, 2));
            for (int64_t b = 0; b < blocks_per_stage; ++b)
                stage.blocks.push_back(this->template register_module<ResBlock3d<T>>(
                    "stage" + std::to_string(level) + "." + std::to_string(b),
                    std::make_shared<ResBlock3d<T>>(channels_[level])));
            stages_.push_back(std::move(stage));
        }
    }

    std::vector<Var<T>> forward_pyramid(const Var<T>& x) override {
        std::vector<Var<T>> pyramid;
        auto h = stem_->forward(x);
        for (const auto& stage : stages_) {
            if (stage.down) h = stage.down->forward(h);
            for (const auto& blk : stage.blocks) h = blk->forward(h);
            pyramid.push_back(h);
        }
        return pyramid;
    }

    const std::vector<int64_t>& channels() const override { return channels_; }
    const std::vector<int64_t>& strides() const override {
        static const std::vector<int64_t> s{1, 2, 4, 8, 16};
        return s;
    }
    int nd() const override { return 3; }

  private:
    struct Stage {
        std::shared_ptr<ConvBlock<T>> down;
        std::vector<std::shared_ptr<ResBlock3d<T>>> blocks;
    };
    std::shared_ptr<ConvBlock<T>> stem_;
    std::vector<Stage> stages_;
    std::vector<int64_t> channels_;
};

}  // namespace panet
