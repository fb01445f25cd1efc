#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "panet/data/synthetic.hpp"

namespace panet {

namespace {

struct Ellipse {
    double cy, cx, ry, rx, angle;
    bool contains(double y, double x) const {
        const double dy = y - cy, dx = x - cx;
        const double c = std::cos(angle), s = std::sin(angle);
        const double u = (c * dx + s * dy) / rx;
        const double v = (-s * dx + c * dy) / ry;
        return u * u + v * v <= 1.0;
    }
};

Ellipse random_ellipse(Rng& rng, int64_t size, double rmin, double rmax) {
    Ellipse e;
    e.ry = rng.uniform(rmin, rmax) * size;
    e.rx = rng.uniform(rmin, rmax) * size;
    e.cy = rng.uniform(0.25, 0.75) * size;
    e.cx = rng.uniform(0.25, 0.75) * size;
    e.angle = rng.uniform(0.0, M_PI);
    return e;
}

}  // namespace

std::vector<SegCase> make_synthetic_2d(int count, int64_t size, uint64_t seed) {
    std::vector<SegCase> cases;
    for (int i = 0; i < count; ++i) {
        Rng rng(mix_seed(seed, 1000 + static_cast<uint64_t>(i)));
        SegCase c;
        c.id = "synth2d_" + std::to_string(i);
        c.image = FTensor({1, size, size});
        c.labels = U8Tensor({size, size});
        c.spacing = {1.0, 1.0};
        const Ellipse ggo = random_ellipse(rng, size, 0.14, 0.26);
        const Ellipse con = random_ellipse(rng, size, 0.08, 0.16);
        for (int64_t y = 0; y < size; ++y)
            for (int64_t x = 0; x < size; ++x) {
                const int64_t at = y * size + x;
                double v = 0.15 + 0.04 * rng.normal();
                uint8_t lab = 0;
                if (ggo.contains(static_cast<double>(y), static_cast<double>(x))) {
                    v = 0.55 + 0.03 * rng.normal();
                    lab = 1;
                }
                if (con.contains(static_cast<double>(y), static_cast<double>(x))) {
                    v = 0.90 + 0.03 * rng.normal();
                    lab = 2;
                }
                c.image[at] = static_cast<float>(std::clamp(v, 0.0, 1.0));
                c.labels[at] = lab;
            }
        cases.push_back(std::move(c));
    }
    return cases;
}

std::vector<SegCase> make_synthetic_3d(int count, const std::vector<int64_t>& size, uint64_t seed) {
    require(size.size() == 3, "make_synthetic_3d: size must have 3 axes");
    std::vector<SegCase> cases;
    for (int i = 0; i < count; ++i) {
        Rng rng(mix_seed(seed, 2000 + static_cast<uint64_t>(i)));
        SegCase c;
        c.id = "synth3d_" + std::to_string(i);
        c.image = FTensor({4, size[0], size[1], size[2]});
        c.labels = U8Tensor({size[0], size[1], size[2]});
        c.spacing = {1.0, 1.0, 1.0};
        const double cz = rng.uniform(0.35, 0.65) * size[0];
        const double cy = rng.uniform(0.35, 0.65) * size[1];
        const double cx = rng.uniform(0.35, 0.65) * size[2];
        const double r_wt = rng.uniform(0.22, 0.32) * std::min({size[0], size[1], size[2]});
        const double r_tc = r_wt * rng.uniform(0.55, 0.75);
        const double r_et = r_tc * rng.uniform(0.45, 0.65);
        const int64_t sp = size[0] * size[1] * size[2];
        for (int64_t z = 0; z < size[0]; ++z)
            for (int64_t y = 0; y < size[1]; ++y)
                for (int64_t x = 0; x < size[2]; ++x) {
                    const int64_t at = (z * size[1] + y) * size[2] + x;
                    const double d = std::sqrt((z - cz) * (z - cz) + (y - cy) * (y - cy) + (x - cx) * (x - cx));
                    uint8_t lab = 0;
                    if (d <= r_et)
                        lab = 4;
                    else if (d <= r_tc)
                        lab = 1;
                    else if (d <= r_wt)
                        lab = 2;
                    c.labels[at] = lab;
                    // four modalities with distinct per-tissue contrasts
                    const double base[4] = {0.4, 0.5, 0.6, 0.45};
                    const double differ[4][4] = {{0.0, 0.25, 0.45, 0.65},
                                                 {0.0, 0.55, 0.25, 0.40},
                                                 {0.0, 0.35, 0.60, 0.20},
                                                 {0.0, 0.45, 0.35, 0.55}};
                    const int li = lab == 4 ? 3 : lab;
                    for (int m = 0; m < 4; ++m) {
                        const double v = base[m] + differ[m][li] + 0.03 * rng.normal();
                        c.image[m * sp + at] = static_cast<float>(std::max(0.05, v));  // nonzero: z-norm foreground
                    }
                }
        cases.push_back(std::move(c));
    }
    return cases;
}

std::string write_synthetic_dataset(const std::string& dir, const std::string& task, int count, int64_t size,
                                    uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json entries = nlohmann::json::array();
    if (task == "covid-2d") {
        for (const auto& c : make_synthetic_2d(count, size, seed)) {
            U8Tensor img({c.image.size(1), c.image.size(2)});
            for (int64_t i = 0; i < img.numel(); ++i)
                img[i] = static_cast<uint8_t>(std::lround(std::clamp(c.image[i], 0.0f, 1.0f) * 255));
            write_pgm((fs::path(dir) / (c.id + ".pgm")).string(), img);
            write_pgm((fs::path(dir) / (c.id + "_mask.pgm")).string(), c.labels);
            entries.push_back({{"id", c.id}, {"image", c.id + ".pgm"}, {"label", c.id + "_mask.pgm"}});
        }
    } else if (task == "brats-3d") {
        for (const auto& c : make_synthetic_3d(count, {size, size, size}, seed)) {
            const int64_t sp = size * size * size;
            std::vector<std::string> mod_files;
            NiftiVolume ref;
            ref.spacing = c.spacing;
            for (int m = 0; m < 4; ++m) {
                // store each modality scaled to uint8 via a float nifti
                U8Tensor vol({size, size, size});
                for (int64_t i = 0; i < sp; ++i)
                    vol[i] = static_cast<uint8_t>(std::lround(std::clamp(c.image[m * sp + i], 0.0f, 2.0f) * 100));
                const std::string f = c.id + "_mod" + std::to_string(m) + ".nii.gz";
                write_nifti_labels((fs::path(dir) / f).string(), vol, ref);
                mod_files.push_back(f);
            }
            write_nifti_labels((fs::path(dir) / (c.id + "_seg.nii.gz")).string(), c.labels, ref);
            entries.push_back({{"id", c.id}, {"images", mod_files}, {"label", c.id + "_seg.nii.gz"}});
        }
    } else {
        throw ConfigError("write_synthetic_dataset: unknown task '" + task + "'");
    }
    nlohmann::json manifest{{"task", task}, {"entries", entries}};
    const std::string path = (fs::path(dir) / "manifest.json").string();
    std::ofstream os(path);
    os << manifest.dump(2) << "\n";
    return path;
}

}  // namespace panet
