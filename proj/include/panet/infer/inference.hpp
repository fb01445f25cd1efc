#pragma once

#include <functional>

#include "panet/data/dataset.hpp"
#include "panet/model/models.hpp"

namespace panet {

struct SlidingWindowSpec {
    std::vector<int64_t> patch{128, 128, 128};
    double overlap = 0.75;  // in [0,1); fused by arithmetic mean

    void validate() const;
};

// Window origins along one axis: 0, stride, ... with the final window pinned
// to the end so every voxel is covered.
std::vector<int64_t> window_starts(int64_t size, int64_t patch, double overlap);

// Evaluates one [C,spatial] patch to [K,spatial] probabilities.
using PatchPredictor = std::function<FTensor(const FTensor&)>;

// Whole-volume probabilities: reflect-pads undersized volumes, tiles with
// overlapping windows in canonical order and averages predictions per voxel.
FTensor sliding_window_predict(const PatchPredictor& predict, const FTensor& volume, const SlidingWindowSpec& spec,
                               int64_t out_channels);

// Hierarchical decoding of nested region probabilities (ET/TC/WT) into BraTS
// labels {0,1,2,4}; nesting is enforced by construction.
U8Tensor regions_to_labels(const FTensor& region_probs, double threshold = 0.5);

// Relabels all enhancing tumor as necrosis when the predicted ET volume is
// below min_voxels.
U8Tensor suppress_enhancing_tumor(const U8Tensor& labels, int64_t min_voxels);

// Channel argmax; ties break toward the lower class index.
U8Tensor argmax_labels(const FTensor& probs);

// Adds a batch axis, runs the model without gradients and applies the
// configured output nonlinearity. Input [C,spatial] -> [K,spatial].
FTensor model_probabilities(SegModel<float>& model, const FTensor& input);

// Slice prediction: resize to the network size if needed, argmax over the 3
// classes, nearest-resize the labels back.
U8Tensor predict_2d(SegModel<float>& model, const FTensor& slice, int64_t network_size = 512);

// Color overlay for qualitative output. 2D: red=GGO, green=CON;
// 3D labels use red=ET, green=NCR/NET, yellow=ED.
U8Tensor overlay_labels(const FTensor& gray, const U8Tensor& labels, bool brats_colors);

}  // namespace panet
