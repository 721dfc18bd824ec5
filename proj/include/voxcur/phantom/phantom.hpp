#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "voxcur/core/errors.hpp"
#include "voxcur/core/rng.hpp"
#include "voxcur/core/tensor.hpp"

namespace voxcur::phantom {

enum class CurveKind { Benign, Malignant, Background };

struct PhantomConfig {
    int n_patients = 60;
    Vec3i volume_shape{64, 64, 16};  // paper-scale preset: 512 x 512 x 32
    int n_timepoints = 5;
    bool include_t2 = true;
    double malignant_patient_fraction = 305.0 / 408.0;
    double lesion_radius_min = 2.0;  // voxels
    double lesion_radius_max = 4.0;
    double noise_sigma = 0.02;
    std::uint64_t seed = 0;

    // Artifact knobs, defaults documented in the README.
    double body_y_fraction = 0.5;     // tissue occupies y < fraction * Y, rest is air
    double healthy_breast_prob = 0.5; // chance the non-index breast carries no lesion
    int max_lesions_per_breast = 2;  // 0 means a lesion-free dataset
    double lesion_amplitude = 0.5;    // peak enhancement added inside lesions
    double background_amplitude = 0.15;  // parenchymal enhancement scale

    int total_channels() const { return n_timepoints + (include_t2 ? 1 : 0); }

    void validate() const {
        if (n_patients < 1) throw ConfigError("n_patients must be >= 1");
        if (volume_shape.x < 8 || volume_shape.y < 8 || volume_shape.z < 8)
            throw ConfigError("volume_shape: every dimension must be >= 8");
        if (n_timepoints < 2) throw ConfigError("n_timepoints must be >= 2");
        if (malignant_patient_fraction < 0.0 || malignant_patient_fraction > 1.0)
            throw ConfigError("malignant_patient_fraction must lie in [0, 1]");
        if (lesion_radius_min <= 0.0 || lesion_radius_max < lesion_radius_min)
            throw ConfigError("lesion radius range is empty or non-positive");
        // A lesion must fit into one breast half after the midline split.
        double half_x = volume_shape.x / 2.0;
        double body_y = volume_shape.y * body_y_fraction;
        double max_r = lesion_radius_max;
        if (2.0 * max_r >= half_x || 2.0 * max_r >= body_y ||
            2.0 * max_r >= static_cast<double>(volume_shape.z))
            throw ConfigError("lesion_radius_max does not fit inside a breast half");
        if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
        if (body_y_fraction <= 0.0 || body_y_fraction > 1.0)
            throw ConfigError("body_y_fraction must lie in (0, 1]");
    }
};

struct LesionAnnotation {
    Vec3i center;      // whole-volume frame
    bool malignant = false;
    double radius = 0.0;  // voxels, mean of the ellipsoid semi-axes
};

struct PatientCase {
    std::string patient_id;
    Volume<float> volume;  // channels x X x Y x Z
    std::vector<LesionAnnotation> lesions;
    bool left_label = false;
    bool right_label = false;
};

/// Relative contrast-enhancement intensity in [0, 1] at a dynamic timepoint.
/// Timepoint 0 is pre-contrast and always 0. Benign lesions enhance slowly and
/// persistently; malignant lesions wash in fast, peak before the last
/// timepoint and wash out; background parenchyma enhances mildly.
inline double kinetic_curve(CurveKind kind, int timepoint_index, int n_timepoints) {
    if (n_timepoints < 2) throw ArgumentError("kinetic_curve: n_timepoints must be >= 2");
    if (timepoint_index < 0 || timepoint_index >= n_timepoints)
        throw ArgumentError("kinetic_curve: timepoint_index out of range");
    if (timepoint_index == 0) return 0.0;

    const double last = n_timepoints - 1;
    const double t = static_cast<double>(timepoint_index);
    switch (kind) {
        case CurveKind::Benign:
            // slow persistent enhancement up to 1
            return std::pow(t / last, 0.7);
        case CurveKind::Background:
            // mild diffuse enhancement; stays below the benign final value
            return 0.5 * (t / last);
        case CurveKind::Malignant: {
            if (n_timepoints < 3) return t / last;  // washout needs >= 3 points
            // fast wash-in, peak strictly before the last timepoint, wash-out
            int peak = std::clamp(static_cast<int>(std::lround(last * 0.4)), 1,
                                  n_timepoints - 2);
            if (timepoint_index <= peak)
                return std::pow(t / peak, 0.5);
            return 1.0 - 0.4 * (t - peak) / (last - peak);
        }
    }
    throw ArgumentError("kinetic_curve: unknown kind");
}

namespace detail {

struct Ellipsoid {
    double cx, cy, cz;  // center, voxel units, whole-volume frame
    double rx, ry, rz;  // semi-axes
    bool malignant;

    // 1 at the center, cosine taper to 0 at the boundary.
    double weight(double x, double y, double z) const {
        double dx = (x - cx) / rx, dy = (y - cy) / ry, dz = (z - cz) / rz;
        double d = std::sqrt(dx * dx + dy * dy + dz * dz);
        if (d >= 1.0) return 0.0;
        return 0.5 * (1.0 + std::cos(3.141592653589793 * d));
    }
};

struct BreastPlan {
    std::vector<Ellipsoid> lesions;
};

// Place lesions for one breast half. x range is [x_lo, x_hi).
inline BreastPlan plan_breast(Rng& rng, const PhantomConfig& cfg, int x_lo, int x_hi,
                              int n_malignant, int n_benign) {
    BreastPlan plan;
    const int body_y = std::max(1, static_cast<int>(cfg.volume_shape.y * cfg.body_y_fraction));
    const int n_total = n_malignant + n_benign;
    for (int li = 0; li < n_total; ++li) {
        bool malignant = li < n_malignant;
        double r = rng.uniform(cfg.lesion_radius_min, cfg.lesion_radius_max);
        Ellipsoid e;
        e.rx = r * rng.uniform(0.8, 1.2);
        e.ry = r * rng.uniform(0.8, 1.2);
        e.rz = std::min(r * rng.uniform(0.8, 1.2), cfg.volume_shape.z / 3.0);
        auto place = [&](double lo, double hi, double rad) {
            double margin = rad + 1.5;
            return rng.uniform(lo + margin, hi - margin);
        };
        e.cx = place(x_lo, x_hi, e.rx);
        e.cy = place(0, body_y, e.ry);
        e.cz = place(0, cfg.volume_shape.z, e.rz);
        e.malignant = malignant;
        plan.lesions.push_back(e);
    }
    return plan;
}

// Smooth low-frequency parenchyma texture from a handful of Gaussian blobs.
struct Texture {
    struct Blob {
        double cx, cy, cz, sx, sy, sz, amp;
    };
    std::vector<Blob> blobs;
    double base;

    static Texture make(Rng& rng, const PhantomConfig& cfg) {
        Texture t;
        t.base = rng.uniform(0.25, 0.35);
        const auto& s = cfg.volume_shape;
        int n = 6;
        for (int i = 0; i < n; ++i) {
            Blob b;
            b.cx = rng.uniform(0, s.x);
            b.cy = rng.uniform(0, s.y * cfg.body_y_fraction);
            b.cz = rng.uniform(0, s.z);
            b.sx = rng.uniform(s.x * 0.1, s.x * 0.3);
            b.sy = rng.uniform(s.y * 0.05, s.y * 0.2);
            b.sz = rng.uniform(s.z * 0.2, s.z * 0.6);
            b.amp = rng.uniform(-0.08, 0.12);
            t.blobs.push_back(b);
        }
        return t;
    }

    double eval(double x, double y, double z) const {
        double v = base;
        for (const auto& b : blobs) {
            double dx = (x - b.cx) / b.sx, dy = (y - b.cy) / b.sy, dz = (z - b.cz) / b.sz;
            v += b.amp * std::exp(-0.5 * (dx * dx + dy * dy + dz * dz));
        }
        return std::clamp(v, 0.05, 0.6);
    }
};

}  // namespace detail

/// Generate one patient case deterministically from (config.seed, index).
inline PatientCase generate_patient(const PhantomConfig& cfg, int index) {
    Rng rng = Rng::from_keys({cfg.seed, static_cast<std::uint64_t>(index)});
    const auto& s = cfg.volume_shape;
    const int n_ch = cfg.total_channels();
    const int body_y = std::max(1, static_cast<int>(s.y * cfg.body_y_fraction));

    PatientCase pc;
    {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "patient_%04d", index);
        pc.patient_id = buf;
    }
    pc.volume = Volume<float>(n_ch, s.x, s.y, s.z);

    // Deterministic malignancy quota: patient i is malignant iff the running
    // count floor((i+1)*f) advances, which hits round-to-floor of n*f exactly.
    const double f = cfg.malignant_patient_fraction;
    bool malignant_patient =
        static_cast<long long>((index + 1) * f) > static_cast<long long>(index * f);

    // Index breast carries the patient's defining finding.
    bool index_is_left = rng.bernoulli(0.5);
    bool other_healthy = rng.bernoulli(cfg.healthy_breast_prob);
    int extra = cfg.max_lesions_per_breast > 1
                    ? static_cast<int>(rng.uniform_index(cfg.max_lesions_per_breast))
                    : 0;

    auto plan_side = [&](bool is_index) -> detail::BreastPlan {
        if (cfg.max_lesions_per_breast == 0) return {};
        int x_lo = (is_index == index_is_left) ? 0 : s.x / 2;
        int x_hi = (is_index == index_is_left) ? s.x / 2 : s.x;
        if (is_index) {
            int n_mal = malignant_patient ? 1 : 0;
            int n_ben = std::min(malignant_patient ? extra : 1 + extra,
                                 cfg.max_lesions_per_breast - n_mal);
            return detail::plan_breast(rng, cfg, x_lo, x_hi, n_mal, n_ben);
        }
        if (other_healthy) return {};
        return detail::plan_breast(rng, cfg, x_lo, x_hi, 0, 1);
    };

    detail::BreastPlan index_plan = plan_side(true);
    detail::BreastPlan other_plan = plan_side(false);

    std::vector<detail::Ellipsoid> lesions = index_plan.lesions;
    lesions.insert(lesions.end(), other_plan.lesions.begin(), other_plan.lesions.end());

    auto texture = detail::Texture::make(rng, cfg);
    double t2_contrast = rng.uniform(0.6, 1.0);

    // Paint tissue. Air (y >= body_y) stays exactly zero so crop_air has a
    // well-defined boundary.
    for (int xi = 0; xi < s.x; ++xi) {
        for (int yi = 0; yi < body_y; ++yi) {
            for (int zi = 0; zi < s.z; ++zi) {
                double base = texture.eval(xi, yi, zi);
                double lesion_w_mal = 0.0, lesion_w_ben = 0.0;
                for (const auto& e : lesions) {
                    double w = e.weight(xi, yi, zi);
                    if (e.malignant)
                        lesion_w_mal = std::max(lesion_w_mal, w);
                    else
                        lesion_w_ben = std::max(lesion_w_ben, w);
                }
                for (int t = 0; t < cfg.n_timepoints; ++t) {
                    double v = base +
                               cfg.background_amplitude *
                                   kinetic_curve(CurveKind::Background, t, cfg.n_timepoints);
                    v += cfg.lesion_amplitude * lesion_w_mal *
                         kinetic_curve(CurveKind::Malignant, t, cfg.n_timepoints);
                    v += cfg.lesion_amplitude * lesion_w_ben *
                         kinetic_curve(CurveKind::Benign, t, cfg.n_timepoints);
                    pc.volume.at(t, xi, yi, zi) = static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
                if (cfg.include_t2) {
                    double v = t2_contrast * base +
                               0.3 * std::max(lesion_w_mal, lesion_w_ben);
                    pc.volume.at(cfg.n_timepoints, xi, yi, zi) =
                        static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
            }
        }
    }

    // Additive noise inside the body region only.
    if (cfg.noise_sigma > 0.0) {
        for (int ci = 0; ci < n_ch; ++ci)
            for (int xi = 0; xi < s.x; ++xi)
                for (int yi = 0; yi < body_y; ++yi)
                    for (int zi = 0; zi < s.z; ++zi)
                        pc.volume.at(ci, xi, yi, zi) += static_cast<float>(
                            rng.normal(0.0, cfg.noise_sigma));
    }

    for (const auto& e : lesions) {
        LesionAnnotation a;
        a.center = {static_cast<int>(e.cx), static_cast<int>(e.cy), static_cast<int>(e.cz)};
        a.malignant = e.malignant;
        a.radius = (e.rx + e.ry + e.rz) / 3.0;
        pc.lesions.push_back(a);
    }
    for (const auto& a : pc.lesions) {
        bool left = a.center.x < s.x / 2;
        if (a.malignant) (left ? pc.left_label : pc.right_label) = true;
    }
    return pc;
}

inline std::vector<PatientCase> generate_phantom(const PhantomConfig& cfg) {
    cfg.validate();
    std::vector<PatientCase> cases(cfg.n_patients);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < cfg.n_patients; ++i) cases[i] = generate_patient(cfg, i);
    return cases;
}

}  // namespace voxcur::phantom
