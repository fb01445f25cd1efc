#include "panet/data/augment.hpp"
#include "panet/infer/inference.hpp"

namespace panet {

U8Tensor regions_to_labels(const FTensor& region_probs, double threshold) {
    const Shape& s = region_probs.shape();
    require(s.size() >= 2 && s[0] == 3, "regions_to_labels: expected [3,spatial] probabilities");
    Shape lshape(s.begin() + 1, s.end());
    const int64_t sp = numel_of(lshape);
    U8Tensor out(lshape);
    const float* et = region_probs.data();
    const float* tc = region_probs.data() + sp;
    const float* wt = region_probs.data() + 2 * sp;
    for (int64_t i = 0; i < sp; ++i) {
        if (wt[i] <= threshold) continue;       // background
        if (tc[i] <= threshold) {
            out[i] = 2;                          // edema: WT outside TC
        } else if (et[i] > threshold) {
            out[i] = 4;                          // enhancing tumor
        } else {
            out[i] = 1;                          // necrosis / non-enhancing core
        }
    }
    return out;
}

U8Tensor suppress_enhancing_tumor(const U8Tensor& labels, int64_t min_voxels) {
    int64_t et = 0;
    for (int64_t i = 0; i < labels.numel(); ++i) et += labels[i] == 4;
    if (et == 0 || et >= min_voxels) return labels;
    U8Tensor out = labels.clone();
    for (int64_t i = 0; i < out.numel(); ++i)
        if (out[i] == 4) out[i] = 1;
    return out;
}

U8Tensor argmax_labels(const FTensor& probs) {
    const Shape& s = probs.shape();
    require(s.size() >= 2, "argmax_labels: expected [K,spatial]");
    const int64_t k = s[0];
    Shape lshape(s.begin() + 1, s.end());
    const int64_t sp = numel_of(lshape);
    U8Tensor out(lshape);
    for (int64_t i = 0; i < sp; ++i) {
        int best = 0;
        float bv = probs[i];
        for (int64_t c = 1; c < k; ++c)
            if (probs[c * sp + i] > bv) {  // strict: ties keep the lower index
                bv = probs[c * sp + i];
                best = static_cast<int>(c);
            }
        out[i] = static_cast<uint8_t>(best);
    }
    return out;
}

FTensor model_probabilities(SegModel<float>& model, const FTensor& input) {
    NoGradGuard no_grad;
    Shape bshape{1};
    for (int64_t d : input.shape()) bshape.push_back(d);
    auto out = model.forward(constant(input.reshape(bshape)));
    FVar probs = model.config().output_mode == OutputMode::SoftmaxLabels ? ops::softmax_channel(out.main_logits)
                                                                         : ops::sigmoid(out.main_logits);
    Shape oshape(probs->value.shape().begin() + 1, probs->value.shape().end());
    return probs->value.reshape(oshape);
}

U8Tensor predict_2d(SegModel<float>& model, const FTensor& slice, int64_t network_size) {
    require(slice.rank() == 3, "predict_2d: expected [C,H,W] input");
    if (slice.size(0) != 1) throw DataError("predict_2d: expected a single-channel grayscale slice");
    const std::vector<int64_t> orig{slice.size(1), slice.size(2)};
    const bool resize = orig[0] != network_size || orig[1] != network_size;
    const FTensor net_in = resize ? resize_image(slice, {network_size, network_size}) : slice;
    const U8Tensor labels = argmax_labels(model_probabilities(model, net_in));
    return resize ? resize_labels(labels, orig) : labels;
}

U8Tensor overlay_labels(const FTensor& gray, const U8Tensor& labels, bool brats_colors) {
    require(gray.rank() == 2 && same_shape(gray.shape(), labels.shape()),
            "overlay_labels: expected matching [H,W] image and labels");
    const int64_t h = gray.size(0), w = gray.size(1);
    U8Tensor rgb({3, h, w});
    float lo = gray[0], hi = gray[0];
    for (int64_t i = 0; i < gray.numel(); ++i) {
        lo = std::min(lo, gray[i]);
        hi = std::max(hi, gray[i]);
    }
    const float span = hi > lo ? hi - lo : 1.0f;
    for (int64_t i = 0; i < h * w; ++i) {
        const float g = (gray[i] - lo) / span;
        float r = g, gg = g, b = g;
        const uint8_t lab = labels[i];
        if (lab != 0) {
            float cr = 0, cg = 0, cb = 0;
            if (brats_colors) {
                if (lab == 4) cr = 1;                 // ET: red
                else if (lab == 1) cg = 1;            // NCR/NET: green
                else if (lab == 2) { cr = 1; cg = 1; }  // ED: yellow
            } else {
                if (lab == 1) cr = 1;                 // GGO: red
                else if (lab == 2) cg = 1;            // CON: green
            }
            const float a = 0.55f;
            r = (1 - a) * g + a * cr;
            gg = (1 - a) * g + a * cg;
            b = (1 - a) * g + a * cb;
        }
        rgb[i] = static_cast<uint8_t>(std::lround(std::clamp(r, 0.0f, 1.0f) * 255));
        rgb[h * w + i] = static_cast<uint8_t>(std::lround(std::clamp(gg, 0.0f, 1.0f) * 255));
        rgb[2 * h * w + i] = static_cast<uint8_t>(std::lround(std::clamp(b, 0.0f, 1.0f) * 255));
    }
    return rgb;
}

}  // namespace panet
