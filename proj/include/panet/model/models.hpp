#pragma once

#include "panet/losses.hpp"
#include "panet/model/decoder.hpp"
#include "panet/model/skip_fusion.hpp"

namespace panet {

struct EncoderSpec {
    int dimensionality = 2;
    int64_t in_channels = 1;
    int64_t base_channels = 16;      // 3D only
    int64_t blocks_per_stage = 2;    // 3D only
    std::string pretrained_weights_path;  // 2D only

    void validate() const {
        if (dimensionality != 2 && dimensionality != 3)
            throw ConfigError("encoder: dimensionality must be 2 or 3");
        if (in_channels < 1 || base_channels < 1 || blocks_per_stage < 1)
            throw ConfigError("encoder: channel and block counts must be positive");
        if (dimensionality == 3 && !pretrained_weights_path.empty())
            throw ConfigError("encoder: pretrained weights are only available for the 2D encoder");
    }
};

struct NetworkConfig {
    EncoderSpec encoder;
    int64_t num_classes = 3;
    OutputMode output_mode = OutputMode::SoftmaxLabels;
    bool deep_supervision = true;
    bool agd = true;
    bool intermediate_supervision = true;
    bool attention_detached = false;         // stop-gradient on Y inside Eq. 6
    std::vector<int64_t> decoder_channels;   // empty: per-dimension defaults
    int64_t agd_fuse_kernel = 3;
    bool agd_fuse_norm_act = true;

    NormKind norm_policy() const { return encoder.dimensionality == 2 ? NormKind::Batch : NormKind::Instance; }
    ActKind act_policy() const { return encoder.dimensionality == 2 ? ActKind::ReLU : ActKind::PReLU; }

    std::vector<int64_t> effective_decoder_channels(const std::vector<int64_t>& enc_channels) const {
        if (!decoder_channels.empty()) {
            if (decoder_channels.size() != 4) throw ConfigError("network: decoder_channels must list 4 stages");
            return decoder_channels;
        }
        if (encoder.dimensionality == 2) return {288, 144, 96, 48};
        return {enc_channels[3], enc_channels[2], enc_channels[1], enc_channels[0]};
    }

    void validate() const {
        encoder.validate();
        if (num_classes < 1) throw ConfigError("network: num_classes must be positive");
        if (intermediate_supervision && !agd)
            throw ConfigError("network: intermediate supervision requires the attention guiding decoder");
        if (output_mode == OutputMode::SigmoidRegions && num_classes != 3)
            throw ConfigError("network: sigmoid-regions mode is only valid for the 3-region task (num_classes=3)");
        if (agd_fuse_kernel != 1 && agd_fuse_kernel != 3)
            throw ConfigError("network: agd_fuse_kernel must be 1 or 3");
    }
};

// Loads pretrained 2D encoder weights from a parameter archive; implemented
// with the checkpoint reader (float only).
void load_pretrained_encoder(Module<float>& encoder, const std::string& path, int64_t in_channels);

template <typename T>
std::shared_ptr<Encoder<T>> build_encoder(const EncoderSpec& spec) {
    spec.validate();
    std::shared_ptr<Encoder<T>> enc;
    if (spec.dimensionality == 2)
        enc = std::make_shared<ResNeXt50Encoder<T>>(spec.in_channels);
    else
        enc = std::make_shared<Residual3dEncoder<T>>(spec.in_channels, spec.base_channels, spec.blocks_per_stage);
    return enc;
}

template <typename T>
struct ModelOutputs {
    Var<T> attention;               // [N,1,stride-8 spatial]; null when AGD is off
    Var<T> main_logits;             // [N,classes,input spatial]
    std::vector<Var<T>> aux_logits; // 3 entries with deep supervision, else empty
    Var<T> coarse_logits;           // cascaded baseline stage-1 binary logits
};

template <typename T>
class SegModel : public Module<T> {
  public:
    explicit SegModel(NetworkConfig cfg) : cfg_(std::move(cfg)) {}
    virtual ModelOutputs<T> forward(const Var<T>& x) = 0;
    virtual void apply_pretrained(const std::string&) {
        throw ConfigError("this model has no pretrained-capable encoder");
    }
    const NetworkConfig& config() const { return cfg_; }

  protected:
    // Spatial extents must be divisible by the deepest stride.
    void check_input(const Var<T>& x, int64_t in_channels, int64_t divisor) const {
        const Shape& s = x->value.shape();
        const int nd = cfg_.encoder.dimensionality;
        require(static_cast<int>(s.size()) == nd + 2,
                "forward: expected " + std::to_string(nd + 2) + "-D input, got " + shape_str(s));
        if (s[1] != in_channels)
            throw ShapeError("forward: expected " + std::to_string(in_channels) + " input channels, got " +
                             std::to_string(s[1]));
        static const char* axis2[] = {"height", "width"};
        static const char* axis3[] = {"depth", "height", "width"};
        for (int i = 0; i < nd; ++i)
            if (s[2 + i] % divisor != 0)
                throw ShapeError(std::string("forward: input ") + (nd == 2 ? axis2[i] : axis3[i]) + " (" +
                                 std::to_string(s[2 + i]) + ") is not divisible by " + std::to_string(divisor));
    }

    NetworkConfig cfg_;
};

// Prior Attention Network: encoder -> attention guiding decoder on the three
// deepest features -> per-level parameterized skip refinement -> multi-class
// decoder with optional auxiliary heads.
template <typename T>
class PANet : public SegModel<T> {
  public:
    explicit PANet(const NetworkConfig& cfg) : SegModel<T>(cfg) {
        cfg.validate();
        encoder_ = this->register_module("encoder", build_encoder<T>(cfg.encoder));
        const auto& ec = encoder_->channels();
        if (cfg.agd) {
            agd_ = this->template register_module<AttentionGuidingDecoder<T>>(
                "agd", std::make_shared<AttentionGuidingDecoder<T>>(encoder_->nd(), ec[2], ec[3], ec[4],
                                                                    cfg.agd_fuse_kernel, cfg.agd_fuse_norm_act,
                                                                    cfg.norm_policy(), cfg.act_policy()));
            skip_fusion_ = this->template register_module<SkipFusion<T>>("skip_fusion", std::make_shared<SkipFusion<T>>());
        }
        decoder_ = this->template register_module<MultiClassDecoder<T>>(
            "decoder", std::make_shared<MultiClassDecoder<T>>(
                           encoder_->nd(), ec, cfg.effective_decoder_channels(ec), cfg.num_classes, cfg.norm_policy(),
                           cfg.act_policy(), encoder_->strides()[0] == 2, cfg.deep_supervision, false));
    }

    ModelOutputs<T> forward(const Var<T>& x) override {
        this->check_input(x, this->cfg_.encoder.in_channels, encoder_->strides().back());
        std::vector<int64_t> input_spatial(x->value.shape().begin() + 2, x->value.shape().end());
        auto pyramid = encoder_->forward_pyramid(x);
        ModelOutputs<T> out;
        if (agd_) {
            out.attention = agd_->forward(pyramid[2], pyramid[3], pyramid[4]);
            for (int level = 0; level < 5; ++level) {
                std::vector<int64_t> sp(pyramid[level]->value.shape().begin() + 2,
                                        pyramid[level]->value.shape().end());
                pyramid[level] = skip_fusion_->refine(pyramid[level], resize_attention(out.attention, sp), level,
                                                      this->cfg_.attention_detached);
            }
        }
        auto dec = decoder_->forward(pyramid, input_spatial);
        out.main_logits = dec.main_logits;
        out.aux_logits = std::move(dec.aux_logits);
        return out;
    }

    void apply_pretrained(const std::string& path) override {
        if constexpr (std::is_same_v<T, float>)
            load_pretrained_encoder(*encoder_, path, this->cfg_.encoder.in_channels);
        else
            throw ConfigError("pretrained weights are only supported for float models");
    }

    Encoder<T>& encoder() { return *encoder_; }
    MultiClassDecoder<T>& decoder() { return *decoder_; }
    SkipFusion<T>* skip_fusion() { return skip_fusion_.get(); }

  private:
    std::shared_ptr<Encoder<T>> encoder_;
    std::shared_ptr<AttentionGuidingDecoder<T>> agd_;
    std::shared_ptr<SkipFusion<T>> skip_fusion_;
    std::shared_ptr<MultiClassDecoder<T>> decoder_;
};

// Plain or gated-skip U-Net over the same encoder and decoder stack.
template <typename T>
class UNetModel : public SegModel<T> {
  public:
    UNetModel(const NetworkConfig& cfg, bool gated, int64_t num_classes_override = -1)
        : SegModel<T>(cfg) {
        cfg.encoder.validate();
        const int64_t classes = num_classes_override > 0 ? num_classes_override : cfg.num_classes;
        encoder_ = this->register_module("encoder", build_encoder<T>(cfg.encoder));
        const auto& ec = encoder_->channels();
        decoder_ = this->template register_module<MultiClassDecoder<T>>(
            "decoder", std::make_shared<MultiClassDecoder<T>>(
                           encoder_->nd(), ec, cfg.effective_decoder_channels(ec), classes, cfg.norm_policy(),
                           cfg.act_policy(), encoder_->strides()[0] == 2, cfg.deep_supervision, gated));
    }

    ModelOutputs<T> forward(const Var<T>& x) override {
        this->check_input(x, this->cfg_.encoder.in_channels, encoder_->strides().back());
        std::vector<int64_t> input_spatial(x->value.shape().begin() + 2, x->value.shape().end());
        auto pyramid = encoder_->forward_pyramid(x);
        auto dec = decoder_->forward(pyramid, input_spatial);
        ModelOutputs<T> out;
        out.main_logits = dec.main_logits;
        out.aux_logits = std::move(dec.aux_logits);
        return out;
    }

    void apply_pretrained(const std::string& path) override {
        if constexpr (std::is_same_v<T, float>)
            load_pretrained_encoder(*encoder_, path, this->cfg_.encoder.in_channels);
        else
            throw ConfigError("pretrained weights are only supported for float models");
    }

    MultiClassDecoder<T>& decoder() { return *decoder_; }

  private:
    std::shared_ptr<Encoder<T>> encoder_;
    std::shared_ptr<MultiClassDecoder<T>> decoder_;
};

// Two stacked U-Nets: stage 1 produces a binary lesion map whose probability
// is concatenated onto the image for stage 2.
template <typename T>
class CascadedUNet : public SegModel<T> {
  public:
    explicit CascadedUNet(const NetworkConfig& cfg) : SegModel<T>(cfg) {
        stage1_ = this->template register_module<UNetModel<T>>(
            "stage1", std::make_shared<UNetModel<T>>(cfg, false, 1));
        NetworkConfig cfg2 = cfg;
        cfg2.encoder.in_channels += 1;
        cfg2.encoder.pretrained_weights_path.clear();
        stage2_ = this->template register_module<UNetModel<T>>("stage2", std::make_shared<UNetModel<T>>(cfg2, false));
    }

    ModelOutputs<T> forward(const Var<T>& x) override {
        auto s1 = stage1_->forward(x);
        auto prior = ops::sigmoid(s1.main_logits);
        auto s2 = stage2_->forward(ops::concat_channels<T>({x, prior}));
        ModelOutputs<T> out;
        out.main_logits = s2.main_logits;
        out.aux_logits = std::move(s2.aux_logits);
        out.coarse_logits = s1.main_logits;
        return out;
    }

    void apply_pretrained(const std::string& path) override {
        stage1_->apply_pretrained(path);
        stage2_->apply_pretrained(path);  // stem adapted for the extra prior channel
    }

  private:
    std::shared_ptr<UNetModel<T>> stage1_, stage2_;
};

enum class BaselineKind { UNet, AttentionUNet, CascadedUNet };

inline BaselineKind baseline_kind_from_string(const std::string& s) {
    if (s == "unet") return BaselineKind::UNet;
    if (s == "attention_unet") return BaselineKind::AttentionUNet;
    if (s == "cascaded_unet") return BaselineKind::CascadedUNet;
    throw ConfigError("unknown baseline kind '" + s + "' (expected unet, attention_unet or cascaded_unet)");
}

template <typename T>
std::shared_ptr<SegModel<T>> build_model(const NetworkConfig& cfg) {
    cfg.validate();
    return std::make_shared<PANet<T>>(cfg);
}

template <typename T>
std::shared_ptr<SegModel<T>> build_baseline(BaselineKind kind, const NetworkConfig& cfg) {
    NetworkConfig base = cfg;
    base.agd = false;
    base.intermediate_supervision = false;
    base.deep_supervision = false;
    base.validate();
    switch (kind) {
        case BaselineKind::UNet:
            return std::make_shared<UNetModel<T>>(base, false);
        case BaselineKind::AttentionUNet:
            return std::make_shared<UNetModel<T>>(base, true);
        case BaselineKind::CascadedUNet:
            return std::make_shared<CascadedUNet<T>>(base);
    }
    throw ConfigError("build_baseline: unhandled kind");
}

// Shared init entry point: parameters are seeded per (seed, qualified name),
// then pretrained encoder weights (if configured) overwrite the encoder.
template <typename T>
void initialize_model(SegModel<T>& model, uint64_t seed) {
    model.initialize(seed);
    const auto& spec = model.config().encoder;
    if (!spec.pretrained_weights_path.empty()) model.apply_pretrained(spec.pretrained_weights_path);
}

}  // namespace panet
