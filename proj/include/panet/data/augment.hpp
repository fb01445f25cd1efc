#pragma once

#include "panet/data/dataset.hpp"

namespace panet {

// Ordered augmentation steps with per-step switches; disable everything for an
// identity policy. 2D order: resize, brightness/contrast, affine, random
// crop, elastic. 3D order: per-modality z-score, flip, intensity shift,
// intensity scale, elastic, random crop.
struct AugmentPolicy {
    std::string task = "covid-2d";

    // 2D
    bool enable_resize = true;
    int64_t resize_to = 560;
    bool enable_intensity_2d = true;
    double brightness = 0.1;
    double contrast = 0.1;
    bool enable_affine = true;
    double rotate_deg = 10.0;
    double scale_jitter = 0.1;
    double shift_frac = 0.05;
    bool enable_crop = true;
    int64_t crop_2d = 512;
    bool enable_elastic = true;
    double elastic_sigma_px = 10.0;
    int64_t elastic_grid_2d = 8;

    // 3D
    bool enable_znorm = true;
    bool enable_flip = true;
    bool enable_intensity_3d = true;
    double intensity_shift = 0.1;
    double intensity_scale = 0.1;
    double elastic_magnitude_vox = 5.0;
    int64_t elastic_grid_3d = 4;
    std::vector<int64_t> crop_3d{128, 128, 128};

    static AugmentPolicy identity(const std::string& task) {
        AugmentPolicy p;
        p.task = task;
        p.enable_resize = p.enable_intensity_2d = p.enable_affine = p.enable_crop = p.enable_elastic = false;
        p.enable_znorm = p.enable_flip = p.enable_intensity_3d = false;
        return p;
    }
};

// Deterministic given the Rng state; the trainer derives that stream from
// (global seed, case id, epoch).
SegCase augment_case(const SegCase& c, const AugmentPolicy& policy, Rng& rng);

// Z-score per modality over nonzero (foreground) voxels; background stays 0.
void znorm_inplace(FTensor& image);

// Aligned random crop; zero-pads first when the volume is smaller than the
// patch on any axis.
SegCase sample_patch(const SegCase& c, const std::vector<int64_t>& size, Rng& rng);

// Mirrors image and labels along one spatial axis (an involution).
SegCase flip_case(const SegCase& c, int axis);

FTensor resize_image(const FTensor& image, const std::vector<int64_t>& target);       // linear
U8Tensor resize_labels(const U8Tensor& labels, const std::vector<int64_t>& target);   // nearest

}  // namespace panet
