#include <cmath>

#include "panet/core/kernels.hpp"
#include "panet/data/augment.hpp"

namespace panet {

namespace {

std::vector<int64_t> spatial_of(const FTensor& image) {
    return {image.shape().begin() + 1, image.shape().end()};
}

// Samples image (multilinear, zero border) and labels (nearest, zero border)
// at per-voxel source coordinates.
void warp_case(SegCase& c, const std::vector<std::vector<double>>& src_coords) {
    const std::vector<int64_t> sp = spatial_of(c.image);
    const int nd = static_cast<int>(sp.size());
    const int64_t total = c.labels.numel();
    const int64_t channels = c.image.size(0);
    FTensor out_img(c.image.shape());
    U8Tensor out_lab(c.labels.shape());
    for (int64_t i = 0; i < total; ++i) {
        // nearest for labels
        bool inside = true;
        int64_t flat_n = 0;
        for (int d = 0; d < nd && inside; ++d) {
            const int64_t r = static_cast<int64_t>(std::lround(src_coords[static_cast<size_t>(d)][static_cast<size_t>(i)]));
            if (r < 0 || r >= sp[static_cast<size_t>(d)]) inside = false;
            flat_n = flat_n * sp[static_cast<size_t>(d)] + std::clamp<int64_t>(r, 0, sp[static_cast<size_t>(d)] - 1);
        }
        out_lab[i] = inside ? c.labels[flat_n] : 0;
        // multilinear for the image
        int64_t base[3] = {0, 0, 0};
        double frac[3] = {0, 0, 0};
        bool any_weight = true;
        for (int d = 0; d < nd; ++d) {
            const double s = src_coords[static_cast<size_t>(d)][static_cast<size_t>(i)];
            if (s < -1.0 || s > static_cast<double>(sp[static_cast<size_t>(d)])) any_weight = false;
            const double fl = std::floor(s);
            base[d] = static_cast<int64_t>(fl);
            frac[d] = s - fl;
        }
        for (int64_t ch = 0; ch < channels; ++ch) {
            double acc = 0.0;
            if (any_weight) {
                const int corners = 1 << nd;
                for (int corner = 0; corner < corners; ++corner) {
                    double w = 1.0;
                    int64_t flat = 0;
                    bool ok = true;
                    for (int d = 0; d < nd; ++d) {
                        const int bit = (corner >> d) & 1;
                        const int64_t idx = base[d] + bit;
                        w *= bit ? frac[d] : 1.0 - frac[d];
                        if (idx < 0 || idx >= sp[static_cast<size_t>(d)]) ok = false;
                        flat = flat * sp[static_cast<size_t>(d)] + std::clamp<int64_t>(idx, 0, sp[static_cast<size_t>(d)] - 1);
                    }
                    if (ok && w > 0.0) acc += w * c.image[ch * total + flat];
                }
            }
            out_img[ch * total + i] = static_cast<float>(acc);
        }
    }
    c.image = std::move(out_img);
    c.labels = std::move(out_lab);
}

// Dense displacement field from a coarse random grid (one value per axis per
// node), linearly upsampled.
std::vector<std::vector<double>> elastic_coords(const std::vector<int64_t>& sp, int64_t grid, double magnitude,
                                                Rng& rng) {
    const int nd = static_cast<int>(sp.size());
    std::vector<int64_t> gshape(static_cast<size_t>(nd), grid + 1);
    const int64_t gtotal = numel_of(Shape(gshape.begin(), gshape.end()));
    const int64_t total = numel_of(Shape(sp.begin(), sp.end()));
    FTensor coarse({static_cast<int64_t>(1), static_cast<int64_t>(nd), gtotal});
    for (int64_t i = 0; i < coarse.numel(); ++i) coarse[i] = static_cast<float>(rng.uniform(-magnitude, magnitude));
    FTensor dense({1, nd, total});
    detail::interp_linear_forward(coarse.data(), dense.data(), nd, nd, gshape.data(), sp.data());
    std::vector<std::vector<double>> coords(static_cast<size_t>(nd), std::vector<double>(static_cast<size_t>(total)));
    std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
    for (int64_t i = 0; i < total; ++i) {
        for (int d = 0; d < nd; ++d)
            coords[static_cast<size_t>(d)][static_cast<size_t>(i)] =
                static_cast<double>(idx[static_cast<size_t>(d)]) + dense[d * total + i];
        for (int d = nd - 1; d >= 0; --d) {
            if (++idx[static_cast<size_t>(d)] < sp[static_cast<size_t>(d)]) break;
            idx[static_cast<size_t>(d)] = 0;
        }
    }
    return coords;
}

void crop_case(SegCase& c, const std::vector<int64_t>& size, const std::vector<int64_t>& offset) {
    const std::vector<int64_t> sp = spatial_of(c.image);
    const int nd = static_cast<int>(sp.size());
    const int64_t channels = c.image.size(0);
    Shape ish{channels};
    Shape lsh;
    for (int d = 0; d < nd; ++d) {
        ish.push_back(size[static_cast<size_t>(d)]);
        lsh.push_back(size[static_cast<size_t>(d)]);
    }
    FTensor img(ish);
    U8Tensor lab(lsh);
    const int64_t total = numel_of(lsh);
    std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
    const int64_t src_total = numel_of(Shape(sp.begin(), sp.end()));
    for (int64_t i = 0; i < total; ++i) {
        int64_t flat = 0;
        for (int d = 0; d < nd; ++d)
            flat = flat * sp[static_cast<size_t>(d)] + idx[static_cast<size_t>(d)] + offset[static_cast<size_t>(d)];
        lab[i] = c.labels[flat];
        for (int64_t ch = 0; ch < channels; ++ch) img[ch * total + i] = c.image[ch * src_total + flat];
        for (int d = nd - 1; d >= 0; --d) {
            if (++idx[static_cast<size_t>(d)] < size[static_cast<size_t>(d)]) break;
            idx[static_cast<size_t>(d)] = 0;
        }
    }
    c.image = std::move(img);
    c.labels = std::move(lab);
}

void pad_to(SegCase& c, const std::vector<int64_t>& min_size) {
    const std::vector<int64_t> sp = spatial_of(c.image);
    const int nd = static_cast<int>(sp.size());
    std::vector<int64_t> target(sp);
    bool need = false;
    for (int d = 0; d < nd; ++d)
        if (sp[static_cast<size_t>(d)] < min_size[static_cast<size_t>(d)]) {
            target[static_cast<size_t>(d)] = min_size[static_cast<size_t>(d)];
            need = true;
        }
    if (!need) return;
    const int64_t channels = c.image.size(0);
    Shape ish{channels};
    Shape lsh;
    for (int d = 0; d < nd; ++d) {
        ish.push_back(target[static_cast<size_t>(d)]);
        lsh.push_back(target[static_cast<size_t>(d)]);
    }
    FTensor img(ish);  // zero padding for image and labels
    U8Tensor lab(lsh);
    const int64_t src_total = numel_of(Shape(sp.begin(), sp.end()));
    const int64_t dst_total = numel_of(lsh);
    std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
    for (int64_t i = 0; i < src_total; ++i) {
        int64_t flat = 0;
        for (int d = 0; d < nd; ++d) flat = flat * target[static_cast<size_t>(d)] + idx[static_cast<size_t>(d)];
        lab[flat] = c.labels[i];
        for (int64_t ch = 0; ch < channels; ++ch) img[ch * dst_total + flat] = c.image[ch * src_total + i];
        for (int d = nd - 1; d >= 0; --d) {
            if (++idx[static_cast<size_t>(d)] < sp[static_cast<size_t>(d)]) break;
            idx[static_cast<size_t>(d)] = 0;
        }
    }
    c.image = std::move(img);
    c.labels = std::move(lab);
}

}  // namespace

FTensor resize_image(const FTensor& image, const std::vector<int64_t>& target) {
    const std::vector<int64_t> sp = spatial_of(image);
    if (sp == target) return image.clone();
    Shape os{image.size(0)};
    for (int64_t v : target) os.push_back(v);
    FTensor out(os);
    detail::interp_linear_forward(image.data(), out.data(), static_cast<int>(sp.size()), image.size(0), sp.data(),
                                  target.data());
    return out;
}

U8Tensor resize_labels(const U8Tensor& labels, const std::vector<int64_t>& target) {
    std::vector<int64_t> sp(labels.shape().begin(), labels.shape().end());
    if (sp == target) return labels.clone();
    U8Tensor out(Shape(target.begin(), target.end()));
    detail::interp_nearest(labels.data(), out.data(), static_cast<int>(sp.size()), 1, sp.data(), target.data());
    return out;
}

void znorm_inplace(FTensor& image) {
    const int64_t channels = image.size(0);
    const int64_t sp = image.numel() / channels;
    for (int64_t ch = 0; ch < channels; ++ch) {
        float* p = image.data() + ch * sp;
        double sum = 0, sum2 = 0;
        int64_t count = 0;
        for (int64_t i = 0; i < sp; ++i)
            if (p[i] != 0.0f) {
                sum += p[i];
                sum2 += static_cast<double>(p[i]) * p[i];
                ++count;
            }
        if (count == 0) continue;
        const double mean = sum / count;
        double var = sum2 / count - mean * mean;
        if (var < 0) var = 0;
        const double denom = std::max(std::sqrt(var), 1e-8);
        for (int64_t i = 0; i < sp; ++i)
            if (p[i] != 0.0f) p[i] = static_cast<float>((p[i] - mean) / denom);
    }
}

SegCase flip_case(const SegCase& c, int axis) {
    const std::vector<int64_t> sp = spatial_of(c.image);
    const int nd = static_cast<int>(sp.size());
    require(axis >= 0 && axis < nd, "flip_case: axis out of range");
    SegCase out = c;
    out.image = FTensor(c.image.shape());
    out.labels = U8Tensor(c.labels.shape());
    const int64_t total = c.labels.numel();
    const int64_t channels = c.image.size(0);
    std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
    for (int64_t i = 0; i < total; ++i) {
        int64_t flat = 0;
        for (int d = 0; d < nd; ++d) {
            const int64_t v = d == axis ? sp[static_cast<size_t>(d)] - 1 - idx[static_cast<size_t>(d)]
                                        : idx[static_cast<size_t>(d)];
            flat = flat * sp[static_cast<size_t>(d)] + v;
        }
        out.labels[i] = c.labels[flat];
        for (int64_t ch = 0; ch < channels; ++ch) out.image[ch * total + i] = c.image[ch * total + flat];
        for (int d = nd - 1; d >= 0; --d) {
            if (++idx[static_cast<size_t>(d)] < sp[static_cast<size_t>(d)]) break;
            idx[static_cast<size_t>(d)] = 0;
        }
    }
    return out;
}

SegCase sample_patch(const SegCase& c, const std::vector<int64_t>& size, Rng& rng) {
    SegCase out = c;
    pad_to(out, size);
    const std::vector<int64_t> sp = spatial_of(out.image);
    std::vector<int64_t> offset(sp.size());
    for (size_t d = 0; d < sp.size(); ++d) offset[d] = rng.uniform_int(0, sp[d] - size[d]);
    crop_case(out, size, offset);
    return out;
}

SegCase augment_case(const SegCase& c, const AugmentPolicy& policy, Rng& rng) {
    SegCase out = c;
    const int nd = static_cast<int>(spatial_of(c.image).size());
    if (policy.task == "covid-2d") {
        require(nd == 2, "augment: covid-2d policy on non-2D case");
        if (policy.enable_resize) {
            out.image = resize_image(out.image, {policy.resize_to, policy.resize_to});
            out.labels = resize_labels(out.labels, {policy.resize_to, policy.resize_to});
        }
        if (policy.enable_intensity_2d) {
            const float b = static_cast<float>(rng.uniform(-policy.brightness, policy.brightness));
            const float k = static_cast<float>(1.0 + rng.uniform(-policy.contrast, policy.contrast));
            for (int64_t i = 0; i < out.image.numel(); ++i) out.image[i] = out.image[i] * k + b;
        }
        if (policy.enable_affine) {
            const std::vector<int64_t> sp = spatial_of(out.image);
            const double theta = rng.uniform(-policy.rotate_deg, policy.rotate_deg) * M_PI / 180.0;
            const double scale = 1.0 + rng.uniform(-policy.scale_jitter, policy.scale_jitter);
            const double ty = rng.uniform(-policy.shift_frac, policy.shift_frac) * sp[0];
            const double tx = rng.uniform(-policy.shift_frac, policy.shift_frac) * sp[1];
            const double cy = 0.5 * (sp[0] - 1), cx = 0.5 * (sp[1] - 1);
            const double cs = std::cos(theta) / scale, sn = std::sin(theta) / scale;
            const int64_t total = sp[0] * sp[1];
            std::vector<std::vector<double>> coords(2, std::vector<double>(static_cast<size_t>(total)));
            for (int64_t y = 0; y < sp[0]; ++y)
                for (int64_t x = 0; x < sp[1]; ++x) {
                    const double dy = y - cy - ty, dx = x - cx - tx;
                    coords[0][static_cast<size_t>(y * sp[1] + x)] = cs * dy - sn * dx + cy;
                    coords[1][static_cast<size_t>(y * sp[1] + x)] = sn * dy + cs * dx + cx;
                }
            warp_case(out, coords);
        }
        if (policy.enable_crop) {
            pad_to(out, {policy.crop_2d, policy.crop_2d});
            const std::vector<int64_t> sp = spatial_of(out.image);
            std::vector<int64_t> offset{rng.uniform_int(0, sp[0] - policy.crop_2d),
                                        rng.uniform_int(0, sp[1] - policy.crop_2d)};
            crop_case(out, {policy.crop_2d, policy.crop_2d}, offset);
        }
        if (policy.enable_elastic)
            warp_case(out, elastic_coords(spatial_of(out.image), policy.elastic_grid_2d, policy.elastic_sigma_px, rng));
        return out;
    }
    require(nd == 3, "augment: brats-3d policy on non-3D case");
    if (policy.enable_znorm) znorm_inplace(out.image);
    if (policy.enable_flip)
        for (int axis = 0; axis < 3; ++axis)
            if (rng.bernoulli(0.5)) out = flip_case(out, axis);
    if (policy.enable_intensity_3d) {
        const float shift = static_cast<float>(rng.uniform(-policy.intensity_shift, policy.intensity_shift));
        const float scale = static_cast<float>(1.0 + rng.uniform(-policy.intensity_scale, policy.intensity_scale));
        for (int64_t i = 0; i < out.image.numel(); ++i) out.image[i] = out.image[i] * scale + shift;
    }
    if (policy.enable_elastic)
        warp_case(out, elastic_coords(spatial_of(out.image), policy.elastic_grid_3d, policy.elastic_magnitude_vox, rng));
    if (policy.enable_crop) out = sample_patch(out, policy.crop_3d, rng);
    return out;
}

}  // namespace panet
