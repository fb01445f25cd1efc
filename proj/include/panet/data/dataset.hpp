#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include "panet/core/rng.hpp"
#include "panet/core/tensor.hpp"

namespace panet {

// One training/evaluation case: a slice ([1,H,W]) or a multi-modality volume
// ([C,D,H,W]); integer labels share the spatial extents.
struct SegCase {
    std::string id;
    FTensor image;
    U8Tensor labels;
    std::vector<double> spacing{1.0, 1.0};  // mm per spatial axis
    std::vector<char> nifti_header;         // 3D: original header, for prediction write-back
};

struct ManifestEntry {
    std::string id;
    std::vector<std::string> images;
    std::string label;
    std::string split;  // optional: "train" / "test"
};

struct DatasetManifest {
    std::string task;  // "covid-2d" or "brats-3d"
    std::vector<ManifestEntry> entries;
    std::filesystem::path root;
};

// Parses and validates a JSON manifest. Relative paths resolve against
// PANET_DATA_ROOT when set, otherwise against the manifest's directory.
DatasetManifest load_manifest(const std::string& path);

// Deterministic random split into (train, test) with |test| = test_count.
std::pair<DatasetManifest, DatasetManifest> split_manifest(const DatasetManifest& m, int64_t test_count,
                                                           uint64_t seed);

// Honors explicit split tags when present, otherwise falls back to
// split_manifest(test_count, seed).
std::pair<DatasetManifest, DatasetManifest> resolve_splits(const DatasetManifest& m, int64_t test_count,
                                                           uint64_t seed);

// Fold index assignment for k-fold cross-validation over [0,n).
std::vector<int> kfold_assignments(int64_t n, int folds, uint64_t seed);

SegCase load_case(const DatasetManifest& m, const ManifestEntry& entry);

// Lazily-loaded case collection; desk-scale tests use the in-memory variant,
// the CLI wraps manifest entries.
struct CaseSource {
    std::vector<std::string> ids;
    std::function<SegCase(size_t)> load;
    size_t size() const { return ids.size(); }
};

CaseSource memory_source(std::vector<SegCase> cases);
CaseSource manifest_source(const DatasetManifest& m);

// Raster IO (binary PGM/PPM).
U8Tensor read_pgm(const std::string& path);                 // [H,W]
void write_pgm(const std::string& path, const U8Tensor& img);
void write_ppm(const std::string& path, const U8Tensor& rgb);  // [3,H,W]

// Minimal NIfTI-1 IO (.nii and .nii.gz).
struct NiftiVolume {
    FTensor data;                  // [Z,Y,X], slope/intercept applied
    std::vector<double> spacing;   // mm per axis, [Z,Y,X] order
    std::vector<char> header;      // original 348-byte header, for write-back
};
NiftiVolume read_nifti(const std::string& path);
void write_nifti_labels(const std::string& path, const U8Tensor& labels, const NiftiVolume& reference);

}  // namespace panet
