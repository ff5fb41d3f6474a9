#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dentalign/pointcloud.hpp"
#include "dentalign/rng.hpp"
#include "dentalign/volume.hpp"

namespace dentalign {

namespace detail {

// Trilinear sample at continuous index coordinates, clamped to the edge.
inline double sample_trilinear(const VoxelVolume& v, double x, double y, double z) {
    auto prep = [](double u, std::int64_t n, std::int64_t& lo, double& f) {
        u = std::clamp(u, 0.0, static_cast<double>(n - 1));
        lo = std::min(static_cast<std::int64_t>(std::floor(u)), n - 1);
        const std::int64_t hi = std::min(lo + 1, n - 1);
        f = u - static_cast<double>(lo);
        lo = std::min(lo, hi);  // hi==lo at the top edge, f applies to equal cells
    };
    std::int64_t x0, y0, z0;
    double fx, fy, fz;
    prep(x, v.dims[0], x0, fx);
    prep(y, v.dims[1], y0, fy);
    prep(z, v.dims[2], z0, fz);
    const std::int64_t x1 = std::min(x0 + 1, v.dims[0] - 1);
    const std::int64_t y1 = std::min(y0 + 1, v.dims[1] - 1);
    const std::int64_t z1 = std::min(z0 + 1, v.dims[2] - 1);

    const double c000 = v.at(x0, y0, z0), c001 = v.at(x0, y0, z1);
    const double c010 = v.at(x0, y1, z0), c011 = v.at(x0, y1, z1);
    const double c100 = v.at(x1, y0, z0), c101 = v.at(x1, y0, z1);
    const double c110 = v.at(x1, y1, z0), c111 = v.at(x1, y1, z1);

    const double c00 = c000 * (1 - fz) + c001 * fz;
    const double c01 = c010 * (1 - fz) + c011 * fz;
    const double c10 = c100 * (1 - fz) + c101 * fz;
    const double c11 = c110 * (1 - fz) + c111 * fz;
    const double c0 = c00 * (1 - fy) + c01 * fy;
    const double c1 = c10 * (1 - fy) + c11 * fy;
    return c0 * (1 - fx) + c1 * fx;
}

inline std::uint16_t sample_label_nearest(const VoxelVolume& v, double x, double y, double z) {
    auto idx = [](double u, std::int64_t n) {
        return std::clamp(static_cast<std::int64_t>(std::llround(u)), std::int64_t{0}, n - 1);
    };
    return v.label_at(idx(x, v.dims[0]), idx(y, v.dims[1]), idx(z, v.dims[2]));
}

}  // namespace detail

// Voxel i sits at physical position i*spacing along each axis; physical extent
// is dims*spacing, so an identity resample reproduces the input exactly.
inline VoxelVolume resample_trilinear(const VoxelVolume& v, std::array<double, 3> target_spacing) {
    for (double s : target_spacing) {
        if (s <= 0) throw ConfigError("target spacing must be strictly positive");
    }
    if (v.voxel_count() == 0) throw EmptyInputError("resample of an empty volume");

    VoxelVolume out;
    out.orientation = v.orientation;
    out.spacing = target_spacing;
    for (int d = 0; d < 3; ++d) {
        const double extent = static_cast<double>(v.dims[d]) * v.spacing[d];
        out.dims[d] = std::max<std::int64_t>(1, std::llround(extent / target_spacing[d]));
    }
    out.values.resize(static_cast<std::size_t>(out.voxel_count()));
    if (v.labels) out.labels = std::vector<std::uint16_t>(out.values.size(), 0);

    for (std::int64_t i = 0; i < out.dims[0]; ++i) {
        const double x = static_cast<double>(i) * target_spacing[0] / v.spacing[0];
        for (std::int64_t j = 0; j < out.dims[1]; ++j) {
            const double y = static_cast<double>(j) * target_spacing[1] / v.spacing[1];
            for (std::int64_t k = 0; k < out.dims[2]; ++k) {
                const double z = static_cast<double>(k) * target_spacing[2] / v.spacing[2];
                out.at(i, j, k) = detail::sample_trilinear(v, x, y, z);
                if (v.labels) {
                    (*out.labels)[static_cast<std::size_t>(out.flat(i, j, k))] =
                        detail::sample_label_nearest(v, x, y, z);
                }
            }
        }
    }
    return out;
}

inline VoxelVolume reorient_to_ras(const VoxelVolume& v) {
    v.orientation.validate();
    if (v.orientation.is_identity()) return v;

    VoxelVolume out;
    for (int k = 0; k < 3; ++k) {
        const int r = std::abs(v.orientation.code[k]) - 1;
        out.dims[static_cast<std::size_t>(r)] = v.dims[static_cast<std::size_t>(k)];
        out.spacing[static_cast<std::size_t>(r)] = v.spacing[static_cast<std::size_t>(k)];
    }
    out.values.resize(static_cast<std::size_t>(v.voxel_count()));
    if (v.labels) out.labels = std::vector<std::uint16_t>(out.values.size(), 0);

    std::array<std::int64_t, 3> idx{};
    for (idx[0] = 0; idx[0] < v.dims[0]; ++idx[0]) {
        for (idx[1] = 0; idx[1] < v.dims[1]; ++idx[1]) {
            for (idx[2] = 0; idx[2] < v.dims[2]; ++idx[2]) {
                std::array<std::int64_t, 3> oidx{};
                for (int k = 0; k < 3; ++k) {
                    const int c = v.orientation.code[static_cast<std::size_t>(k)];
                    const int r = std::abs(c) - 1;
                    oidx[static_cast<std::size_t>(r)] =
                        c > 0 ? idx[static_cast<std::size_t>(k)]
                              : v.dims[static_cast<std::size_t>(k)] - 1 - idx[static_cast<std::size_t>(k)];
                }
                const auto src = v.flat(idx[0], idx[1], idx[2]);
                const auto dst = out.flat(oidx[0], oidx[1], oidx[2]);
                out.values[static_cast<std::size_t>(dst)] = v.values[static_cast<std::size_t>(src)];
                if (v.labels) {
                    (*out.labels)[static_cast<std::size_t>(dst)] = (*v.labels)[static_cast<std::size_t>(src)];
                }
            }
        }
    }
    return out;
}

// (clamp(v, lo, hi) - lo) / (hi - lo); paper defaults clip HU to [0, 2500].
inline VoxelVolume clip_normalize(const VoxelVolume& v, double lo = 0.0, double hi = 2500.0) {
    if (lo >= hi) throw ConfigError("clip_normalize requires lo < hi");
    VoxelVolume out = v;
    const double inv = 1.0 / (hi - lo);
    for (auto& x : out.values) x = (std::clamp(x, lo, hi) - lo) * inv;
    return out;
}

// Greedy max-min selection; first pick is seed_index, ties go to the lowest
// index. Returns k distinct indices.
inline std::vector<std::int64_t> farthest_point_sampling(const PointCloud& pc, std::int64_t k,
                                                         std::int64_t seed_index = 0) {
    const auto n = static_cast<std::int64_t>(pc.size());
    if (k < 1 || k > n) {
        throw CardinalityError("farthest_point_sampling: k=" + std::to_string(k) + " with " +
                               std::to_string(n) + " points");
    }
    if (seed_index < 0 || seed_index >= n) {
        throw CardinalityError("farthest_point_sampling: seed index out of range");
    }

    std::vector<std::int64_t> selected;
    selected.reserve(static_cast<std::size_t>(k));
    selected.push_back(seed_index);
    std::vector<char> taken(static_cast<std::size_t>(n), 0);
    taken[static_cast<std::size_t>(seed_index)] = 1;
    std::vector<double> min_d2(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        min_d2[static_cast<std::size_t>(i)] = dist2(pc.points[static_cast<std::size_t>(i)],
                                                    pc.points[static_cast<std::size_t>(seed_index)]);
    }

    while (static_cast<std::int64_t>(selected.size()) < k) {
        std::int64_t best = -1;
        double best_d2 = -1.0;
        for (std::int64_t i = 0; i < n; ++i) {
            if (taken[static_cast<std::size_t>(i)]) continue;
            if (min_d2[static_cast<std::size_t>(i)] > best_d2) {
                best_d2 = min_d2[static_cast<std::size_t>(i)];
                best = i;
            }
        }
        selected.push_back(best);
        taken[static_cast<std::size_t>(best)] = 1;
        for (std::int64_t i = 0; i < n; ++i) {
            if (taken[static_cast<std::size_t>(i)]) continue;
            min_d2[static_cast<std::size_t>(i)] =
                std::min(min_d2[static_cast<std::size_t>(i)],
                         dist2(pc.points[static_cast<std::size_t>(i)], pc.points[static_cast<std::size_t>(best)]));
        }
    }
    return selected;
}

// Threshold-plus-bounding-box crop standing in for the ROI model. Expects a
// normalized volume; crops to the bounding box of values > threshold.
inline VoxelVolume roi_crop(const VoxelVolume& v, double threshold = 0.3) {
    std::array<std::int64_t, 3> lo{v.dims[0], v.dims[1], v.dims[2]};
    std::array<std::int64_t, 3> hi{-1, -1, -1};
    for (std::int64_t i = 0; i < v.dims[0]; ++i) {
        for (std::int64_t j = 0; j < v.dims[1]; ++j) {
            for (std::int64_t k = 0; k < v.dims[2]; ++k) {
                if (v.at(i, j, k) > threshold) {
                    lo = {std::min(lo[0], i), std::min(lo[1], j), std::min(lo[2], k)};
                    hi = {std::max(hi[0], i), std::max(hi[1], j), std::max(hi[2], k)};
                }
            }
        }
    }
    if (hi[0] < 0) throw EmptyInputError("roi_crop: no voxels above threshold");

    VoxelVolume out;
    out.spacing = v.spacing;
    out.orientation = v.orientation;
    out.dims = {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
    out.values.resize(static_cast<std::size_t>(out.voxel_count()));
    if (v.labels) out.labels = std::vector<std::uint16_t>(out.values.size(), 0);
    for (std::int64_t i = 0; i < out.dims[0]; ++i)
        for (std::int64_t j = 0; j < out.dims[1]; ++j)
            for (std::int64_t k = 0; k < out.dims[2]; ++k) {
                out.at(i, j, k) = v.at(lo[0] + i, lo[1] + j, lo[2] + k);
                if (v.labels) {
                    (*out.labels)[static_cast<std::size_t>(out.flat(i, j, k))] =
                        v.label_at(lo[0] + i, lo[1] + j, lo[2] + k);
                }
            }
    return out;
}

// ---- fine-tuning augmentations ---------------------------------------------

struct VolumeAugmentConfig {
    std::array<std::int64_t, 3> crop_dims{0, 0, 0};  // 0 keeps the full axis
    double max_rotation_rad = 0.0;                   // about z, bound within (-0.5, 0.5)
    double noise_sigma = 0.0;                        // additive, normalized units
    double max_intensity_shift = 0.0;

    void validate() const {
        if (max_rotation_rad < 0 || max_rotation_rad > 0.5) {
            throw ConfigError("volume rotation bound must lie in [0, 0.5] rad");
        }
        if (noise_sigma < 0 || max_intensity_shift < 0) {
            throw ConfigError("negative augmentation magnitude");
        }
    }

    bool is_identity() const {
        return crop_dims == std::array<std::int64_t, 3>{0, 0, 0} && max_rotation_rad == 0 &&
               noise_sigma == 0 && max_intensity_shift == 0;
    }
};

// Concrete parameters of one augmentation, split from the config so tests can
// pin exact values.
struct VolumeAugmentDraw {
    std::array<std::int64_t, 3> crop_origin{0, 0, 0};
    std::array<std::int64_t, 3> crop_dims{0, 0, 0};
    double rotation_rad = 0.0;
    double noise_sigma = 0.0;
    double intensity_shift = 0.0;
    std::uint64_t noise_seed = 0;
};

inline VolumeAugmentDraw draw_volume_augment(const VolumeAugmentConfig& cfg,
                                             const std::array<std::int64_t, 3>& dims, Rng& rng) {
    cfg.validate();
    VolumeAugmentDraw d;
    for (int a = 0; a < 3; ++a) {
        const std::int64_t want = cfg.crop_dims[static_cast<std::size_t>(a)];
        if (want == 0) {
            d.crop_dims[static_cast<std::size_t>(a)] = dims[static_cast<std::size_t>(a)];
            continue;
        }
        if (want > dims[static_cast<std::size_t>(a)]) {
            throw CardinalityError("crop larger than volume");
        }
        d.crop_dims[static_cast<std::size_t>(a)] = want;
        d.crop_origin[static_cast<std::size_t>(a)] = static_cast<std::int64_t>(
            rng.uniform_index(static_cast<std::uint64_t>(dims[static_cast<std::size_t>(a)] - want + 1)));
    }
    d.rotation_rad = cfg.max_rotation_rad > 0 ? rng.uniform(-cfg.max_rotation_rad, cfg.max_rotation_rad) : 0.0;
    d.noise_sigma = cfg.noise_sigma;
    d.intensity_shift =
        cfg.max_intensity_shift > 0 ? rng.uniform(-cfg.max_intensity_shift, cfg.max_intensity_shift) : 0.0;
    d.noise_seed = rng.next_u64();
    return d;
}

inline VoxelVolume apply_volume_augment(const VoxelVolume& v, const VolumeAugmentDraw& d) {
    // crop
    VoxelVolume cur;
    if (d.crop_dims == v.dims && d.crop_origin == std::array<std::int64_t, 3>{0, 0, 0}) {
        cur = v;
    } else {
        for (int a = 0; a < 3; ++a) {
            if (d.crop_origin[static_cast<std::size_t>(a)] + d.crop_dims[static_cast<std::size_t>(a)] >
                v.dims[static_cast<std::size_t>(a)]) {
                throw CardinalityError("crop larger than volume");
            }
        }
        cur.spacing = v.spacing;
        cur.orientation = v.orientation;
        cur.dims = d.crop_dims;
        cur.values.resize(static_cast<std::size_t>(cur.voxel_count()));
        if (v.labels) cur.labels = std::vector<std::uint16_t>(cur.values.size(), 0);
        for (std::int64_t i = 0; i < cur.dims[0]; ++i)
            for (std::int64_t j = 0; j < cur.dims[1]; ++j)
                for (std::int64_t k = 0; k < cur.dims[2]; ++k) {
                    cur.at(i, j, k) = v.at(d.crop_origin[0] + i, d.crop_origin[1] + j, d.crop_origin[2] + k);
                    if (v.labels) {
                        (*cur.labels)[static_cast<std::size_t>(cur.flat(i, j, k))] =
                            v.label_at(d.crop_origin[0] + i, d.crop_origin[1] + j, d.crop_origin[2] + k);
                    }
                }
    }

    // rotation about the z axis through the volume center; values trilinear,
    // labels nearest-neighbor (interpolation for label maps is unspecified
    // upstream; nearest keeps codes valid)
    if (d.rotation_rad != 0.0) {
        const VoxelVolume src = cur;
        const double c = std::cos(-d.rotation_rad), s = std::sin(-d.rotation_rad);
        const double cx = static_cast<double>(src.dims[0] - 1) / 2.0;
        const double cy = static_cast<double>(src.dims[1] - 1) / 2.0;
        for (std::int64_t i = 0; i < src.dims[0]; ++i) {
            for (std::int64_t j = 0; j < src.dims[1]; ++j) {
                // physical-isotropy is not assumed; rotate in index space scaled by spacing
                const double px = (static_cast<double>(i) - cx) * src.spacing[0];
                const double py = (static_cast<double>(j) - cy) * src.spacing[1];
                const double qx = (c * px - s * py) / src.spacing[0] + cx;
                const double qy = (s * px + c * py) / src.spacing[1] + cy;
                for (std::int64_t k = 0; k < src.dims[2]; ++k) {
                    cur.at(i, j, k) = detail::sample_trilinear(src, qx, qy, static_cast<double>(k));
                    if (src.labels) {
                        (*cur.labels)[static_cast<std::size_t>(cur.flat(i, j, k))] =
                            detail::sample_label_nearest(src, qx, qy, static_cast<double>(k));
                    }
                }
            }
        }
    }

    // noise then global shift, then one clamp back to [0,1]
    if (d.noise_sigma > 0.0 || d.intensity_shift != 0.0) {
        Rng noise(d.noise_seed);
        for (auto& x : cur.values) {
            if (d.noise_sigma > 0.0) x += noise.gaussian(0.0, d.noise_sigma);
            x = std::clamp(x + d.intensity_shift, 0.0, 1.0);
        }
    }
    return cur;
}

inline VoxelVolume augment_volume(const VoxelVolume& v, const VolumeAugmentConfig& cfg, Rng rng) {
    return apply_volume_augment(v, draw_volume_augment(cfg, v.dims, rng));
}

struct CloudAugmentConfig {
    double max_rotation_rad = 0.0;  // about z, bound within (-0.5, 0.5)
    double max_shift_mm = 0.0;
    double min_scale = 1.0;
    double max_scale = 1.0;

    void validate() const {
        if (max_rotation_rad < 0 || max_rotation_rad > 0.5) {
            throw ConfigError("cloud rotation bound must lie in [0, 0.5] rad");
        }
        if (min_scale <= 0 || max_scale < min_scale) {
            throw ConfigError("scale bounds must be positive with min <= max");
        }
        if (max_shift_mm < 0) throw ConfigError("negative shift bound");
    }
};

struct CloudAugmentDraw {
    double rotation_rad = 0.0;
    Vec3 shift{0, 0, 0};
    double scale = 1.0;
};

inline CloudAugmentDraw draw_cloud_augment(const CloudAugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    CloudAugmentDraw d;
    d.rotation_rad = cfg.max_rotation_rad > 0 ? rng.uniform(-cfg.max_rotation_rad, cfg.max_rotation_rad) : 0.0;
    if (cfg.max_shift_mm > 0) {
        for (auto& s : d.shift) s = rng.uniform(-cfg.max_shift_mm, cfg.max_shift_mm);
    }
    d.scale = cfg.max_scale > cfg.min_scale ? rng.uniform(cfg.min_scale, cfg.max_scale) : cfg.min_scale;
    return d;
}

// p' = scale * R(p - centroid) + centroid + shift; normals rotate only.
inline PointCloud apply_cloud_augment(const PointCloud& pc, const CloudAugmentDraw& d) {
    PointCloud out = pc;
    if (d.rotation_rad == 0.0 && d.shift == Vec3{0, 0, 0} && d.scale == 1.0) return out;
    const double c = std::cos(d.rotation_rad), s = std::sin(d.rotation_rad);
    const Vec3 ctr = pc.centroid();
    for (std::size_t i = 0; i < pc.points.size(); ++i) {
        const Vec3 r = pc.points[i] - ctr;
        const Vec3 rot{c * r[0] - s * r[1], s * r[0] + c * r[1], r[2]};
        out.points[i] = d.scale * rot + ctr + d.shift;
        const Vec3& n = pc.normals[i];
        out.normals[i] = {c * n[0] - s * n[1], s * n[0] + c * n[1], n[2]};
    }
    return out;
}

inline PointCloud augment_pointcloud(const PointCloud& pc, const CloudAugmentConfig& cfg, Rng rng) {
    return apply_cloud_augment(pc, draw_cloud_augment(cfg, rng));
}

}  // namespace dentalign
