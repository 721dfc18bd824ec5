#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "voxcur/core/errors.hpp"
#include "voxcur/core/rng.hpp"
#include "voxcur/core/tensor.hpp"
#include "voxcur/phantom/phantom.hpp"

namespace voxcur::pipeline {

using phantom::LesionAnnotation;
using phantom::PatientCase;

enum class Side { Left, Right };

inline const char* side_name(Side s) { return s == Side::Left ? "left" : "right"; }

struct BreastSample {
    std::string patient_id;
    Side side = Side::Left;
    Volume<float> volume;
    bool label = false;
    std::vector<LesionAnnotation> lesions;  // breast-local coordinates

    bool has_lesions() const { return !lesions.empty(); }
};

struct PatchSample {
    Volume<float> patch;
    bool label = false;
    std::string patient_id;
    Side side = Side::Left;
    Vec3i origin;  // offset in the breast frame
};

/// Trilinear resampling to a target spatial shape (corner-aligned grid).
template <typename T>
Volume<T> resample_volume(const Volume<T>& v, Vec3i target) {
    if (target.x < 1 || target.y < 1 || target.z < 1)
        throw ArgumentError("resample_volume: target dims must be >= 1");
    if (v.x < 2 || v.y < 2 || v.z < 2)
        throw ArgumentError("resample_volume: source dims must be >= 2");
    if (target == v.shape()) return v;

    Volume<T> out(v.c, target.x, target.y, target.z);
    auto src_coord = [](int di, int dn, int sn) {
        if (dn == 1) return (sn - 1) / 2.0;
        return static_cast<double>(di) * (sn - 1) / (dn - 1);
    };
    for (int ci = 0; ci < v.c; ++ci) {
        for (int xi = 0; xi < target.x; ++xi) {
            double sx = src_coord(xi, target.x, v.x);
            int x0 = std::min(static_cast<int>(sx), v.x - 2);
            double fx = sx - x0;
            for (int yi = 0; yi < target.y; ++yi) {
                double sy = src_coord(yi, target.y, v.y);
                int y0 = std::min(static_cast<int>(sy), v.y - 2);
                double fy = sy - y0;
                for (int zi = 0; zi < target.z; ++zi) {
                    double sz = src_coord(zi, target.z, v.z);
                    int z0 = std::min(static_cast<int>(sz), v.z - 2);
                    double fz = sz - z0;
                    double acc = 0.0;
                    for (int dx = 0; dx < 2; ++dx)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dz = 0; dz < 2; ++dz) {
                                double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) *
                                           (dz ? fz : 1 - fz);
                                acc += w * v.at(ci, x0 + dx, y0 + dy, z0 + dz);
                            }
                    out.at(ci, xi, yi, zi) = static_cast<T>(acc);
                }
            }
        }
    }
    return out;
}

struct CropResult {
    Volume<float> volume;
    int y_offset = 0;  // index of the first kept y slab in the input frame
};

/// Remove leading/trailing y slabs whose max intensity (over all channels)
/// is below `threshold`.
inline CropResult crop_air(const Volume<float>& v, float threshold) {
    if (v.size() == 0) throw ArgumentError("crop_air: empty volume");
    std::vector<float> slab_max(v.y, 0.0f);
    for (int ci = 0; ci < v.c; ++ci)
        for (int xi = 0; xi < v.x; ++xi)
            for (int yi = 0; yi < v.y; ++yi)
                for (int zi = 0; zi < v.z; ++zi)
                    slab_max[yi] = std::max(slab_max[yi], v.at(ci, xi, yi, zi));

    int y_lo = 0;
    while (y_lo < v.y && slab_max[y_lo] < threshold) ++y_lo;
    int y_hi = v.y;
    while (y_hi > y_lo && slab_max[y_hi - 1] < threshold) --y_hi;
    if (y_lo >= y_hi) throw DegenerateInputError("crop_air: entire volume below threshold");
    if (y_lo == 0 && y_hi == v.y) return {v, 0};

    Volume<float> out(v.c, v.x, y_hi - y_lo, v.z);
    for (int ci = 0; ci < v.c; ++ci)
        for (int xi = 0; xi < v.x; ++xi)
            for (int yi = y_lo; yi < y_hi; ++yi)
                for (int zi = 0; zi < v.z; ++zi)
                    out.at(ci, xi, yi - y_lo, zi) = v.at(ci, xi, yi, zi);
    return {std::move(out), y_lo};
}

/// Default crop threshold: 5% of the volume max.
inline float default_air_threshold(const Volume<float>& v) {
    float m = 0.0f;
    for (float x : v.data) m = std::max(m, x);
    return 0.05f * m;
}

/// Split a (cropped) case at the x midline into left/right breast samples.
/// Lesion coordinates are re-expressed in each breast's local frame and the
/// labels are recomputed from the assigned lesions. A center exactly on the
/// midline belongs to the right half (floor rule on the containing voxel).
inline std::pair<BreastSample, BreastSample> split_breasts(
    const Volume<float>& cropped, const std::vector<LesionAnnotation>& lesions,
    const std::string& patient_id, int crop_y_offset = 0) {
    if (cropped.x % 2 != 0)
        throw ArgumentError("split_breasts: x extent must be even, got " +
                            std::to_string(cropped.x));
    const int half = cropped.x / 2;

    BreastSample left, right;
    left.patient_id = right.patient_id = patient_id;
    left.side = Side::Left;
    right.side = Side::Right;
    left.volume = Volume<float>(cropped.c, half, cropped.y, cropped.z);
    right.volume = Volume<float>(cropped.c, half, cropped.y, cropped.z);
    for (int ci = 0; ci < cropped.c; ++ci)
        for (int xi = 0; xi < half; ++xi)
            for (int yi = 0; yi < cropped.y; ++yi)
                for (int zi = 0; zi < cropped.z; ++zi) {
                    left.volume.at(ci, xi, yi, zi) = cropped.at(ci, xi, yi, zi);
                    right.volume.at(ci, xi, yi, zi) = cropped.at(ci, xi + half, yi, zi);
                }

    for (LesionAnnotation l : lesions) {
        l.center.y -= crop_y_offset;
        if (l.center.x < half) {
            left.lesions.push_back(l);
            if (l.malignant) left.label = true;
        } else {
            l.center.x -= half;
            right.lesions.push_back(l);
            if (l.malignant) right.label = true;
        }
    }
    return {std::move(left), std::move(right)};
}

inline std::pair<BreastSample, BreastSample> split_breasts(const PatientCase& pc) {
    return split_breasts(pc.volume, pc.lesions, pc.patient_id, 0);
}

namespace detail {

// Valid patch origins whose window [o, o+shape) contains >= 1 lesion center,
// as the sorted union of per-lesion origin boxes.
inline std::vector<Vec3i> valid_patch_origins(const BreastSample& s, Vec3i patch) {
    std::vector<Vec3i> origins;
    auto axis_range = [](int c, int p, int dim) {
        return std::pair<int, int>{std::max(0, c - p + 1), std::min(c, dim - p)};
    };
    for (const auto& l : s.lesions) {
        auto [x0, x1] = axis_range(l.center.x, patch.x, s.volume.x);
        auto [y0, y1] = axis_range(l.center.y, patch.y, s.volume.y);
        auto [z0, z1] = axis_range(l.center.z, patch.z, s.volume.z);
        for (int x = x0; x <= x1; ++x)
            for (int y = y0; y <= y1; ++y)
                for (int z = z0; z <= z1; ++z) origins.push_back({x, y, z});
    }
    auto key = [](const Vec3i& a) {
        return std::tuple<int, int, int>{a.x, a.y, a.z};
    };
    std::sort(origins.begin(), origins.end(),
              [&](const Vec3i& a, const Vec3i& b) { return key(a) < key(b); });
    origins.erase(std::unique(origins.begin(), origins.end()), origins.end());
    return origins;
}

}  // namespace detail

inline bool window_contains(Vec3i origin, Vec3i shape, Vec3i p) {
    return p.x >= origin.x && p.x < origin.x + shape.x && p.y >= origin.y &&
           p.y < origin.y + shape.y && p.z >= origin.z && p.z < origin.z + shape.z;
}

/// Draw a patch uniformly among all origins whose window contains at least
/// one lesion centerpoint. Label is malignant iff any malignant center lies
/// inside the window.
inline PatchSample sample_patch(const BreastSample& s, Vec3i patch, Rng& rng) {
    if (!s.has_lesions())
        throw SamplerError("sample_patch: breast " + s.patient_id + "/" +
                           side_name(s.side) + " has no lesions");
    if (patch.x > s.volume.x || patch.y > s.volume.y || patch.z > s.volume.z)
        throw ArgumentError("sample_patch: patch shape exceeds volume shape");

    auto origins = detail::valid_patch_origins(s, patch);
    Vec3i o = origins[rng.uniform_index(origins.size())];

    PatchSample ps;
    ps.patch = Volume<float>(s.volume.c, patch.x, patch.y, patch.z);
    for (int ci = 0; ci < s.volume.c; ++ci)
        for (int xi = 0; xi < patch.x; ++xi)
            for (int yi = 0; yi < patch.y; ++yi)
                for (int zi = 0; zi < patch.z; ++zi)
                    ps.patch.at(ci, xi, yi, zi) =
                        s.volume.at(ci, o.x + xi, o.y + yi, o.z + zi);
    ps.origin = o;
    ps.patient_id = s.patient_id;
    ps.side = s.side;
    ps.label = false;
    for (const auto& l : s.lesions)
        if (l.malignant && window_contains(o, patch, l.center)) ps.label = true;
    return ps;
}

namespace detail {

inline float background_median(const Volume<float>& v) {
    std::vector<float> vals(v.data);
    auto mid = vals.begin() + vals.size() / 2;
    std::nth_element(vals.begin(), mid, vals.end());
    return *mid;
}

// In-plane rotation about the slice center with bilinear resampling
// (z untouched; a z-axis rotation moves nothing along z).
inline Volume<float> rotate_z(const Volume<float>& v, double radians, float fill) {
    Volume<float> out(v.c, v.x, v.y, v.z);
    const double cx = (v.x - 1) / 2.0, cy = (v.y - 1) / 2.0;
    const double cs = std::cos(radians), sn = std::sin(radians);
    for (int ci = 0; ci < v.c; ++ci)
        for (int xi = 0; xi < v.x; ++xi)
            for (int yi = 0; yi < v.y; ++yi) {
                // inverse map: rotate output coords by -angle
                double dx = xi - cx, dy = yi - cy;
                double sxf = cx + cs * dx + sn * dy;
                double syf = cy - sn * dx + cs * dy;
                if (sxf < 0 || syf < 0 || sxf > v.x - 1 || syf > v.y - 1) {
                    for (int zi = 0; zi < v.z; ++zi) out.at(ci, xi, yi, zi) = fill;
                    continue;
                }
                int x0 = std::min(static_cast<int>(sxf), v.x - 2);
                int y0 = std::min(static_cast<int>(syf), v.y - 2);
                if (v.x == 1) x0 = 0;
                if (v.y == 1) y0 = 0;
                double fx = sxf - x0, fy = syf - y0;
                for (int zi = 0; zi < v.z; ++zi) {
                    double v00 = v.at(ci, x0, y0, zi);
                    double v01 = v.at(ci, x0, std::min(y0 + 1, v.y - 1), zi);
                    double v10 = v.at(ci, std::min(x0 + 1, v.x - 1), y0, zi);
                    double v11 = v.at(ci, std::min(x0 + 1, v.x - 1),
                                      std::min(y0 + 1, v.y - 1), zi);
                    out.at(ci, xi, yi, zi) = static_cast<float>(
                        (1 - fx) * ((1 - fy) * v00 + fy * v01) +
                        fx * ((1 - fy) * v10 + fy * v11));
                }
            }
    return out;
}

inline Volume<float> mirror_x(const Volume<float>& v) {
    Volume<float> out(v.c, v.x, v.y, v.z);
    for (int ci = 0; ci < v.c; ++ci)
        for (int xi = 0; xi < v.x; ++xi)
            for (int yi = 0; yi < v.y; ++yi)
                for (int zi = 0; zi < v.z; ++zi)
                    out.at(ci, xi, yi, zi) = v.at(ci, v.x - 1 - xi, yi, zi);
    return out;
}

}  // namespace detail

struct AugmentParams {
    bool mirror = false;
    double angle_radians = 0.0;
};

/// Draw augmentation parameters: mirror with probability 1/2, rotation angle
/// uniform in [-max_rot_degrees, +max_rot_degrees]. Both draws always happen
/// so the stream stays aligned regardless of outcomes.
inline AugmentParams draw_augment_params(Rng& rng, double max_rot_degrees = 15.0,
                                         bool mirror_enabled = true) {
    AugmentParams p;
    bool m = rng.bernoulli(0.5);
    p.mirror = mirror_enabled && m;
    p.angle_radians = rng.uniform(-max_rot_degrees, max_rot_degrees) *
                      3.141592653589793 / 180.0;
    return p;
}

/// Apply a fixed augmentation to a volume and (optionally) lesion coordinates.
inline Volume<float> apply_augment(const Volume<float>& v, const AugmentParams& p,
                                   std::vector<LesionAnnotation>* lesions = nullptr) {
    Volume<float> out = v;
    if (p.mirror) {
        out = detail::mirror_x(out);
        if (lesions)
            for (auto& l : *lesions) l.center.x = v.x - 1 - l.center.x;
    }
    if (p.angle_radians != 0.0) {
        float fill = detail::background_median(out);
        out = detail::rotate_z(out, p.angle_radians, fill);
        if (lesions) {
            const double cx = (v.x - 1) / 2.0, cy = (v.y - 1) / 2.0;
            const double cs = std::cos(p.angle_radians), sn = std::sin(p.angle_radians);
            for (auto& l : *lesions) {
                double dx = l.center.x - cx, dy = l.center.y - cy;
                // forward map matching rotate_z's inverse mapping
                l.center.x = static_cast<int>(std::lround(cx + cs * dx - sn * dy));
                l.center.y = static_cast<int>(std::lround(cy + sn * dx + cs * dy));
            }
        }
    }
    return out;
}

inline BreastSample augment(const BreastSample& s, Rng& rng,
                            double max_rot_degrees = 15.0, bool mirror = true) {
    auto p = draw_augment_params(rng, max_rot_degrees, mirror);
    BreastSample out = s;
    out.volume = apply_augment(s.volume, p, &out.lesions);
    return out;
}

inline PatchSample augment(const PatchSample& s, Rng& rng,
                           double max_rot_degrees = 15.0, bool mirror = true) {
    auto p = draw_augment_params(rng, max_rot_degrees, mirror);
    PatchSample out = s;
    out.patch = apply_augment(s.patch, p);
    return out;
}

/// Per-channel min-max scaling to [0, 1]; a constant channel maps to zeros.
inline void normalize(Volume<float>& v) {
    const std::size_t n = v.spatial_size();
    for (int ci = 0; ci < v.c; ++ci) {
        float* ch = v.channel(ci);
        float lo = ch[0], hi = ch[0];
        for (std::size_t i = 1; i < n; ++i) {
            lo = std::min(lo, ch[i]);
            hi = std::max(hi, ch[i]);
        }
        if (hi <= lo) {
            std::fill(ch, ch + n, 0.0f);
        } else {
            float inv = 1.0f / (hi - lo);
            for (std::size_t i = 0; i < n; ++i) ch[i] = (ch[i] - lo) * inv;
        }
    }
}

inline void normalize(BreastSample& s) { normalize(s.volume); }
inline void normalize(PatchSample& s) { normalize(s.patch); }

/// Whole preprocessing chain for one patient: crop air, split at the
/// midline, min-max normalize each breast.
inline std::pair<BreastSample, BreastSample> prepare_case(const PatientCase& pc,
                                                          float air_threshold = -1.0f) {
    float thr = air_threshold >= 0.0f ? air_threshold : default_air_threshold(pc.volume);
    auto crop = crop_air(pc.volume, thr);
    auto [left, right] = split_breasts(crop.volume, pc.lesions, pc.patient_id, crop.y_offset);
    normalize(left);
    normalize(right);
    return {std::move(left), std::move(right)};
}

}  // namespace voxcur::pipeline
