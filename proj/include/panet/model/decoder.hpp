#pragma once

#include "panet/model/encoder3d.hpp"

namespace panet {

// Additive attention gate (Attention U-Net baseline): the skip feature is
// reweighted by a sigmoid map computed from the coarser decoder feature.
template <typename T>
class AttentionGate : public Module<T> {
  public:
    AttentionGate(int nd, int64_t gate_c, int64_t skip_c)
        : wg_(this->template register_module<Conv<T>>(
              "wg", std::make_shared<Conv<T>>(nd, gate_c, std::max<int64_t>(1, skip_c / 2), 1))),
          wx_(this->template register_module<Conv<T>>(
              "wx", std::make_shared<Conv<T>>(nd, skip_c, std::max<int64_t>(1, skip_c / 2), 1))),
          psi_(this->template register_module<Conv<T>>(
              "psi", std::make_shared<Conv<T>>(nd, std::max<int64_t>(1, skip_c / 2), 1, 1))) {}

    Var<T> forward(const Var<T>& gate, const Var<T>& skip) {
        std::vector<int64_t> target(skip->value.shape().begin() + 2, skip->value.shape().end());
        auto g = ops::interp_linear(wg_->forward(gate), target);
        auto att = ops::sigmoid(psi_->forward(ops::relu(ops::add(g, wx_->forward(skip)))));
        return ops::mul_map(skip, att);
    }

  private:
    std::shared_ptr<Conv<T>> wg_, wx_, psi_;
};

// One decoder step: upsample x2, concatenate the skip, two conv-norm-act
// layers.
template <typename T>
class DecoderStage : public Module<T> {
  public:
    DecoderStage(int nd, int64_t prev_c, int64_t skip_c, int64_t out_c, NormKind norm, ActKind act)
        : conv1_(this->template register_module<ConvBlock<T>>(
              "conv1", std::make_shared<ConvBlock<T>>(nd, prev_c + skip_c, out_c, 3, norm, act))),
          conv2_(this->template register_module<ConvBlock<T>>(
              "conv2", std::make_shared<ConvBlock<T>>(nd, out_c, out_c, 3, norm, act))) {}

    Var<T> forward(const Var<T>& prev, const Var<T>& skip) {
        auto up = ops::upsample2x(prev);
        require(std::equal(up->value.shape().begin() + 2, up->value.shape().end(), skip->value.shape().begin() + 2),
                "decoder: upsampled feature " + shape_str(up->value.shape()) + " does not match skip " +
                    shape_str(skip->value.shape()));
        return conv2_->forward(conv1_->forward(ops::concat_channels<T>({up, skip})));
    }

  private:
    std::shared_ptr<ConvBlock<T>> conv1_, conv2_;
};

template <typename T>
struct DecoderOutputs {
    Var<T> main_logits;
    std::vector<Var<T>> aux_logits;
};

// Multi-class decoder over a 5-level pyramid. Auxiliary heads sit on the
// three deepest decoder stages; each is a 1x1 conv upsampled to input size.
template <typename T>
class MultiClassDecoder : public Module<T> {
  public:
    MultiClassDecoder(int nd, const std::vector<int64_t>& enc_channels, const std::vector<int64_t>& dec_channels,
                      int64_t num_classes, NormKind norm, ActKind act, bool final_upsample, bool deep_supervision,
                      bool gated_skips)
        : final_upsample_(final_upsample), deep_supervision_(deep_supervision) {
        require(enc_channels.size() == 5 && dec_channels.size() == 4, "decoder: expected 5 encoder levels, 4 stages");
        int64_t prev = enc_channels[4];
        for (int i = 0; i < 4; ++i) {
            const int64_t skip_c = enc_channels[3 - i];
            if (gated_skips)
                gates_.push_back(this->template register_module<AttentionGate<T>>(
                    "gate" + std::to_string(i), std::make_shared<AttentionGate<T>>(nd, prev, skip_c)));
            stages_.push_back(this->template register_module<DecoderStage<T>>(
                "stage" + std::to_string(i),
                std::make_shared<DecoderStage<T>>(nd, prev, skip_c, dec_channels[i], norm, act)));
            prev = dec_channels[i];
        }
        if (final_upsample_)
            final_conv_ = this->template register_module<ConvBlock<T>>(
                "final_conv", std::make_shared<ConvBlock<T>>(nd, prev, prev, 3, norm, act));
        head_ = this->template register_module<Conv<T>>("head", std::make_shared<Conv<T>>(nd, prev, num_classes, 1));
        if (deep_supervision_)
            for (int i = 0; i < 3; ++i)
                aux_heads_.push_back(this->template register_module<Conv<T>>(
                    "aux_head" + std::to_string(i), std::make_shared<Conv<T>>(nd, dec_channels[i], num_classes, 1)));
    }

    // pyramid: levels 1..5 (level 5 is the decoder input).
    DecoderOutputs<T> forward(const std::vector<Var<T>>& pyramid, const std::vector<int64_t>& input_spatial) {
        DecoderOutputs<T> out;
        Var<T> h = pyramid[4];
        std::vector<Var<T>> stage_outputs;
        for (int i = 0; i < 4; ++i) {
            Var<T> skip = pyramid[3 - i];
            if (!gates_.empty()) skip = gates_[i]->forward(h, skip);
            h = stages_[i]->forward(h, skip);
            stage_outputs.push_back(h);
        }
        if (final_upsample_) h = final_conv_->forward(ops::upsample2x(h));
        out.main_logits = head_->forward(h);
        if (deep_supervision_)
            for (int i = 0; i < 3; ++i)
                out.aux_logits.push_back(
                    ops::interp_linear(aux_heads_[i]->forward(stage_outputs[i]), input_spatial));
        return out;
    }

    Conv<T>& head() { return *head_; }

  private:
    bool final_upsample_, deep_supervision_;
    std::vector<std::shared_ptr<AttentionGate<T>>> gates_;
    std::vector<std::shared_ptr<DecoderStage<T>>> stages_;
    std::shared_ptr<ConvBlock<T>> final_conv_;
    std::shared_ptr<Conv<T>> head_;
    std::vector<std::shared_ptr<Conv<T>>> aux_heads_;
};

}  // namespace panet
