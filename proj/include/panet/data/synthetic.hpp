#pragma once

#include "panet/data/dataset.hpp"

namespace panet {

// Intensity-separable lesion phantoms for smoke tests, demos and the overfit
// sanity runs. 2D: two elliptical lesion classes on a noisy background.
std::vector<SegCase> make_synthetic_2d(int count, int64_t size, uint64_t seed);

// 3D: nested spheres labelled with the BraTS convention {0,1,2,4} and four
// synthetic modalities.
std::vector<SegCase> make_synthetic_3d(int count, const std::vector<int64_t>& size, uint64_t seed);

// Writes a ready-to-train dataset (raster/NIfTI files + manifest.json);
// returns the manifest path.
std::string write_synthetic_dataset(const std::string& dir, const std::string& task, int count, int64_t size,
                                    uint64_t seed);

}  // namespace panet
