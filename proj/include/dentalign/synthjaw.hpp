#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dentalign/fdi.hpp"
#include "dentalign/pointcloud.hpp"
#include "dentalign/rng.hpp"
#include "dentalign/tokenize.hpp"
#include "dentalign/volume.hpp"

namespace dentalign {

// HU palette. Values keep their real-tissue ordering inside the [0, 2500]
// clip window used downstream.
namespace hu {
constexpr double kCrown = 2000.0;
constexpr double kRoot = 1400.0;
constexpr double kBone = 700.0;
constexpr double kSoftTissue = 100.0;
constexpr double kMetal = 2500.0;
}  // namespace hu

struct ArchParams {
    double apex_y_frac = 0.78;      // parabola apex, fraction of the y extent
    double curvature = 0.045;       // 1/mm, y drop = curvature * x^2
    double half_width_mm = 26.0;    // arch extent to each side of the midline
    double lower_gum_frac = 0.36;   // gum planes as fractions of the z extent
    double upper_gum_frac = 0.67;
};

struct ToothSize {
    double rx = 2.0, ry = 2.0, rz = 3.6;  // superellipsoid radii, mm
};

using ToothSizeTable = std::map<int, ToothSize>;  // keyed by position digit 1..8

inline ToothSizeTable default_tooth_sizes() {
    return {{1, {1.6, 1.7, 4.0}}, {2, {1.5, 1.6, 3.8}}, {3, {1.7, 1.8, 4.4}},
            {4, {1.9, 2.0, 3.8}}, {5, {2.0, 2.1, 3.6}}, {6, {2.3, 2.4, 3.4}},
            {7, {2.2, 2.3, 3.2}}, {8, {2.1, 2.2, 3.0}}};
}

struct JawSpec {
    std::uint64_t seed = 0;
    std::vector<int> teeth_present;  // FDI codes
    ArchParams arch;
    ToothSizeTable tooth_size_table = default_tooth_sizes();
    double noise_level = 0.0;  // HU stddev
    bool metal_artifact = false;

    void validate() const {
        for (int code : teeth_present) {
            if (!fdi::is_tooth_code(code)) {
                throw DataError("invalid FDI code in teeth_present: " + std::to_string(code), "jaw spec");
            }
        }
        for (const auto& [group, size] : tooth_size_table) {
            if (group < 1 || group > 8) throw DataError("tooth size group out of range", "jaw spec");
            if (size.rx <= 0 || size.ry <= 0 || size.rz <= 0) {
                throw DataError("tooth radii must be strictly positive", "jaw spec");
            }
        }
    }
};

struct GeneratorConfig {
    std::array<std::int64_t, 3> dims{64, 64, 64};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::int64_t cloud_points = 2048;  // FPS target after surface sampling
    std::int64_t surface_samples_per_tooth = 200;
    std::int64_t gum_samples = 700;
    Tokenization tokenization;  // granularity used for the region map
};

struct RegionPatches {
    std::vector<std::int64_t> volume_patches;
    std::vector<std::int64_t> cloud_patches;
};

using RegionMap = std::map<int, RegionPatches>;  // FDI code -> matched patches

struct PairedSample {
    VoxelVolume volume;  // labeled
    PointCloud cloud;    // labeled
    RegionMap region_map;
};

namespace detail {

struct ToothPlacement {
    int code = 0;
    Vec3 center{};      // mm; z sits on the gum plane
    ToothSize size;
    double exponent = 2.0;
    double occlusal = 1.0;  // +1 crown grows toward +z (lower jaw), -1 upper
};

inline double group_exponent(int position) {
    static const std::array<double, 8> kExp = {2.0, 2.0, 2.2, 2.6, 2.6, 3.2, 3.2, 3.0};
    return kExp[static_cast<std::size_t>(position - 1)];
}

// u = signed crown-relative height in [-1, 1]; the root side tapers.
inline double tooth_implicit(const ToothPlacement& t, const Vec3& p) {
    const double dz = (p[2] - t.center[2]) * t.occlusal;
    const double u = dz / t.size.rz;
    const double taper = u < 0 ? 1.0 / (1.0 + 0.5 * (-u)) : 1.0;
    const double ax = std::abs((p[0] - t.center[0]) / (t.size.rx * taper));
    const double ay = std::abs((p[1] - t.center[1]) / (t.size.ry * taper));
    return std::pow(ax, t.exponent) + std::pow(ay, t.exponent) + std::pow(std::abs(u), t.exponent);
}

inline Vec3 tooth_surface_normal(const ToothPlacement& t, const Vec3& p) {
    const double h = 1e-4;
    Vec3 g;
    for (int a = 0; a < 3; ++a) {
        Vec3 lo = p, hi = p;
        lo[static_cast<std::size_t>(a)] -= h;
        hi[static_cast<std::size_t>(a)] += h;
        g[static_cast<std::size_t>(a)] = (tooth_implicit(t, hi) - tooth_implicit(t, lo)) / (2 * h);
    }
    const double n = norm(g);
    return n > 0 ? (1.0 / n) * g : Vec3{0, 0, 1};
}

// Arc-length march along y = apex - curvature x^2, returning x at arc s.
inline double x_at_arc_length(double s, double curvature) {
    const double dx = 0.02;
    double x = 0.0, acc = 0.0;
    while (acc < s) {
        const double slope = 2.0 * curvature * x;
        acc += std::sqrt(1.0 + slope * slope) * dx;
        x += dx;
    }
    return x;
}

inline double arch_half_length(const ArchParams& a) {
    const double dx = 0.02;
    double acc = 0.0;
    for (double x = 0.0; x < a.half_width_mm; x += dx) {
        const double slope = 2.0 * a.curvature * x;
        acc += std::sqrt(1.0 + slope * slope) * dx;
    }
    return acc;
}

}  // namespace detail

// Deterministic procedural jaw: full teeth (crown + root) rasterized into the
// volume, only the supra-gingival crown surface sampled into the cloud, plus
// the ground-truth patch correspondence between the two.
inline PairedSample generate(const JawSpec& spec, const GeneratorConfig& cfg = {}) {
    spec.validate();
    Rng rng(spec.seed);

    const std::array<double, 3> extent = {static_cast<double>(cfg.dims[0]) * cfg.spacing[0],
                                          static_cast<double>(cfg.dims[1]) * cfg.spacing[1],
                                          static_cast<double>(cfg.dims[2]) * cfg.spacing[2]};
    const double mid_x = 0.5 * extent[0];
    const double apex_y = spec.arch.apex_y_frac * extent[1];
    const double gum_lower = spec.arch.lower_gum_frac * extent[2];
    const double gum_upper = spec.arch.upper_gum_frac * extent[2];
    const double half_len = detail::arch_half_length(spec.arch);

    // ---- tooth placement along the arch -----------------------------------
    std::vector<int> codes = spec.teeth_present;
    std::sort(codes.begin(), codes.end());
    codes.erase(std::unique(codes.begin(), codes.end()), codes.end());

    std::vector<detail::ToothPlacement> teeth;
    for (int code : codes) {
        const int quadrant = code / 10, position = code % 10;
        detail::ToothPlacement t;
        t.code = code;
        auto it = spec.tooth_size_table.find(position);
        t.size = it != spec.tooth_size_table.end() ? it->second : ToothSize{};
        t.exponent = detail::group_exponent(position);
        const double s = half_len * (static_cast<double>(position) - 0.5) / 8.0;
        const double xa = detail::x_at_arc_length(s, spec.arch.curvature);
        const double side = (quadrant == 1 || quadrant == 4) ? 1.0 : -1.0;  // +x is patient right
        const bool upper = quadrant <= 2;
        t.center = {mid_x + side * xa, apex_y - spec.arch.curvature * xa * xa,
                    upper ? gum_upper : gum_lower};
        t.occlusal = upper ? -1.0 : 1.0;
        teeth.push_back(t);
    }

    // resolve overlaps by jittering along x; give up after 100 attempts
    for (std::size_t i = 0; i < teeth.size(); ++i) {
        int attempts = 0;
        while (true) {
            bool clash = false;
            for (std::size_t j = 0; j < i; ++j) {
                if (teeth[i].occlusal != teeth[j].occlusal) continue;
                const double d = norm(teeth[i].center - teeth[j].center);
                const double need = 0.9 * (std::max(teeth[i].size.rx, teeth[i].size.ry) +
                                           std::max(teeth[j].size.rx, teeth[j].size.ry));
                if (d < need) {
                    clash = true;
                    break;
                }
            }
            if (!clash) break;
            if (++attempts > 100) {
                throw GenerationError("cannot place tooth " + std::to_string(teeth[i].code) +
                                      " without overlap");
            }
            teeth[i].center[0] += rng.uniform(-0.4, 0.4);
            teeth[i].center[1] += rng.uniform(-0.4, 0.4);
        }
    }

    // ---- rasterize the volume ----------------------------------------------
    PairedSample out;
    VoxelVolume& vol = out.volume;
    vol.dims = cfg.dims;
    vol.spacing = cfg.spacing;
    vol.values.assign(static_cast<std::size_t>(vol.voxel_count()), hu::kSoftTissue);
    vol.labels = std::vector<std::uint16_t>(vol.values.size(), fdi::kBackground);

    auto voxel_pos = [&](std::int64_t i, std::int64_t j, std::int64_t k) -> Vec3 {
        return {static_cast<double>(i) * cfg.spacing[0], static_cast<double>(j) * cfg.spacing[1],
                static_cast<double>(k) * cfg.spacing[2]};
    };

    // bone slabs behind each gum plane
    for (std::int64_t k = 0; k < vol.dims[2]; ++k) {
        const double z = static_cast<double>(k) * cfg.spacing[2];
        const bool lower_bone = z > gum_lower - 14.0 && z < gum_lower - 1.0;
        const bool upper_bone = z > gum_upper + 1.0 && z < gum_upper + 14.0;
        if (!lower_bone && !upper_bone) continue;
        for (std::int64_t i = 0; i < vol.dims[0]; ++i)
            for (std::int64_t j = 0; j < vol.dims[1]; ++j) vol.at(i, j, k) = hu::kBone;
    }

    for (const auto& t : teeth) {
        const double rmax = std::max({t.size.rx, t.size.ry, t.size.rz}) * 1.6;
        std::array<std::int64_t, 3> lo{}, hi{};
        for (int a = 0; a < 3; ++a) {
            lo[static_cast<std::size_t>(a)] = std::max<std::int64_t>(
                0, static_cast<std::int64_t>(std::floor((t.center[static_cast<std::size_t>(a)] - rmax) /
                                                        cfg.spacing[static_cast<std::size_t>(a)])));
            hi[static_cast<std::size_t>(a)] = std::min<std::int64_t>(
                cfg.dims[static_cast<std::size_t>(a)] - 1,
                static_cast<std::int64_t>(std::ceil((t.center[static_cast<std::size_t>(a)] + rmax) /
                                                    cfg.spacing[static_cast<std::size_t>(a)])));
        }
        std::int64_t voxels = 0;
        for (std::int64_t i = lo[0]; i <= hi[0]; ++i)
            for (std::int64_t j = lo[1]; j <= hi[1]; ++j)
                for (std::int64_t k = lo[2]; k <= hi[2]; ++k) {
                    const Vec3 p = voxel_pos(i, j, k);
                    if (detail::tooth_implicit(t, p) > 1.0) continue;
                    const bool crown = (p[2] - t.center[2]) * t.occlusal >= 0.0;
                    vol.at(i, j, k) = crown ? hu::kCrown : hu::kRoot;
                    (*vol.labels)[static_cast<std::size_t>(vol.flat(i, j, k))] =
                        static_cast<std::uint16_t>(t.code);
                    ++voxels;
                }
        if (voxels == 0) {
            throw GenerationError("tooth " + std::to_string(t.code) +
                                  " produced no labeled voxels at this resolution");
        }
    }

    // metal streaks through one crown, overwriting unlabeled voxels only
    if (spec.metal_artifact && !teeth.empty()) {
        const auto& t = teeth[rng.uniform_index(teeth.size())];
        const double z0 = t.center[2] + t.occlusal * 0.5 * t.size.rz;
        for (int streak = 0; streak < 3; ++streak) {
            const double ang = rng.uniform(0, M_PI);
            const Vec3 dir{std::cos(ang), std::sin(ang), 0};
            for (std::int64_t i = 0; i < vol.dims[0]; ++i)
                for (std::int64_t j = 0; j < vol.dims[1]; ++j)
                    for (std::int64_t k = 0; k < vol.dims[2]; ++k) {
                        const Vec3 p = voxel_pos(i, j, k);
                        if (std::abs(p[2] - z0) > 1.0) continue;
                        const Vec3 rel = p - t.center;
                        const double along = dot(rel, dir);
                        if (std::abs(along) > 25.0) continue;
                        const Vec3 off = rel - along * dir;
                        if (std::abs(off[0]) + std::abs(off[1]) > 0.9) continue;
                        const auto flat = static_cast<std::size_t>(vol.flat(i, j, k));
                        if ((*vol.labels)[flat] == fdi::kBackground) {
                            vol.values[flat] = hu::kMetal;
                            (*vol.labels)[flat] = fdi::kMetal;
                        }
                    }
        }
    }

    if (spec.noise_level > 0) {
        for (auto& v : vol.values) v += rng.gaussian(0.0, spec.noise_level);
    }

    // ---- sample the cloud: crown surfaces + gum band ------------------------
    PointCloud cloud;
    auto near_matching_voxel = [&](const Vec3& p, std::uint16_t code) {
        const double tol = 0.5 * std::max({cfg.spacing[0], cfg.spacing[1], cfg.spacing[2]});
        std::array<std::int64_t, 3> c{};
        for (int a = 0; a < 3; ++a) {
            c[static_cast<std::size_t>(a)] = static_cast<std::int64_t>(
                std::llround(p[static_cast<std::size_t>(a)] / cfg.spacing[static_cast<std::size_t>(a)]));
        }
        for (std::int64_t di = -1; di <= 1; ++di)
            for (std::int64_t dj = -1; dj <= 1; ++dj)
                for (std::int64_t dk = -1; dk <= 1; ++dk) {
                    const std::int64_t i = c[0] + di, j = c[1] + dj, k = c[2] + dk;
                    if (i < 0 || j < 0 || k < 0 || i >= vol.dims[0] || j >= vol.dims[1] || k >= vol.dims[2])
                        continue;
                    if (vol.label_at(i, j, k) != code) continue;
                    // distance from p to this voxel's cube
                    double d2 = 0;
                    const Vec3 vc = voxel_pos(i, j, k);
                    for (int a = 0; a < 3; ++a) {
                        const double half = 0.5 * cfg.spacing[static_cast<std::size_t>(a)];
                        const double gap = std::max(
                            0.0, std::abs(p[static_cast<std::size_t>(a)] - vc[static_cast<std::size_t>(a)]) - half);
                        d2 += gap * gap;
                    }
                    if (d2 <= tol * tol) return true;
                }
        return false;
    };

    std::vector<std::uint16_t> labels;
    for (const auto& t : teeth) {
        std::int64_t kept = 0;
        const std::int64_t max_attempts = cfg.surface_samples_per_tooth * 20;
        for (std::int64_t a = 0; a < max_attempts && kept < cfg.surface_samples_per_tooth; ++a) {
            const double theta = rng.uniform(0, 2 * M_PI);
            const double sz = rng.uniform(-1.0, 1.0);
            const double cz = std::sqrt(std::max(0.0, 1.0 - sz * sz));
            const Vec3 dir{std::cos(theta) * cz, std::sin(theta) * cz, sz};
            // bisect tooth_implicit along the ray for the surface crossing
            double r_lo = 0.0, r_hi = std::max({t.size.rx, t.size.ry, t.size.rz}) * 1.8;
            if (detail::tooth_implicit(t, t.center + r_hi * dir) < 1.0) continue;
            for (int it = 0; it < 48; ++it) {
                const double mid = 0.5 * (r_lo + r_hi);
                (detail::tooth_implicit(t, t.center + mid * dir) < 1.0 ? r_lo : r_hi) = mid;
            }
            const Vec3 p = t.center + (0.5 * (r_lo + r_hi)) * dir;
            if ((p[2] - t.center[2]) * t.occlusal < 0.25) continue;  // supra-gingival crown only
            if (!near_matching_voxel(p, static_cast<std::uint16_t>(t.code))) continue;
            cloud.points.push_back(p);
            cloud.normals.push_back(detail::tooth_surface_normal(t, p));
            labels.push_back(static_cast<std::uint16_t>(t.code));
            ++kept;
        }
        if (kept == 0) {
            throw GenerationError("tooth " + std::to_string(t.code) + " produced no surface points");
        }
    }

    // gum band on both arches
    for (std::int64_t g = 0; g < cfg.gum_samples; ++g) {
        const double s = rng.uniform(0, half_len);
        const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const bool upper = rng.uniform() < 0.5;
        const double xa = detail::x_at_arc_length(s, spec.arch.curvature);
        const double lateral = rng.uniform(-2.6, 2.6);
        const double occl = upper ? -1.0 : 1.0;
        Vec3 p{mid_x + side * xa + lateral * 0.4, apex_y - spec.arch.curvature * xa * xa + lateral,
               (upper ? gum_upper : gum_lower) + occl * rng.uniform(0.0, 0.35)};
        bool inside_tooth = false;
        for (const auto& t : teeth) {
            if (detail::tooth_implicit(t, p) <= 1.0) {
                inside_tooth = true;
                break;
            }
        }
        if (inside_tooth) continue;
        cloud.points.push_back(p);
        cloud.normals.push_back({0, 0, occl});
        labels.push_back(fdi::kBackground);
    }
    cloud.labels = std::move(labels);

    // FPS down to the configured budget, preserving global structure
    if (static_cast<std::int64_t>(cloud.size()) > cfg.cloud_points) {
        auto keep = farthest_point_sampling(cloud, cfg.cloud_points, 0);
        PointCloud sub;
        sub.labels = std::vector<std::uint16_t>();
        for (auto idx : keep) {
            sub.points.push_back(cloud.points[static_cast<std::size_t>(idx)]);
            sub.normals.push_back(cloud.normals[static_cast<std::size_t>(idx)]);
            sub.labels->push_back((*cloud.labels)[static_cast<std::size_t>(idx)]);
        }
        cloud = std::move(sub);
    }
    out.cloud = std::move(cloud);

    for (int code : codes) {
        const auto& lab = *out.cloud.labels;
        if (std::find(lab.begin(), lab.end(), static_cast<std::uint16_t>(code)) == lab.end()) {
            throw GenerationError("tooth " + std::to_string(code) + " lost all surface points");
        }
    }

    // ---- ground-truth region map at the configured tokenization -------------
    const auto& tok = cfg.tokenization;
    const std::array<std::int64_t, 3> grid = {(vol.dims[0] + tok.patch_edge - 1) / tok.patch_edge,
                                              (vol.dims[1] + tok.patch_edge - 1) / tok.patch_edge,
                                              (vol.dims[2] + tok.patch_edge - 1) / tok.patch_edge};
    std::map<int, std::vector<char>> vox_hit;
    for (int code : codes) {
        vox_hit[code].assign(static_cast<std::size_t>(grid[0] * grid[1] * grid[2]), 0);
    }
    for (std::int64_t i = 0; i < vol.dims[0]; ++i)
        for (std::int64_t j = 0; j < vol.dims[1]; ++j)
            for (std::int64_t k = 0; k < vol.dims[2]; ++k) {
                const auto lab = vol.label_at(i, j, k);
                if (lab == fdi::kBackground || lab == fdi::kMetal) continue;
                vox_hit[lab][static_cast<std::size_t>(
                    volume_patch_of_voxel(grid, tok.patch_edge, i, j, k))] = 1;
            }

    const auto n_cloud = static_cast<std::int64_t>(out.cloud.size());
    CloudTokens ct = tokenize_cloud(out.cloud, std::min(tok.num_centroids, n_cloud),
                                    std::min(tok.neighbors, n_cloud), 0);
    std::map<int, std::vector<char>> pt_hit;
    for (int code : codes) pt_hit[code].assign(ct.members.size(), 0);
    for (std::size_t patch = 0; patch < ct.members.size(); ++patch) {
        for (auto idx : ct.members[patch]) {
            const auto lab = (*out.cloud.labels)[static_cast<std::size_t>(idx)];
            if (lab == fdi::kBackground || lab == fdi::kMetal) continue;
            pt_hit[lab][patch] = 1;
        }
    }

    for (int code : codes) {
        RegionPatches rp;
        const auto& vh = vox_hit[code];
        for (std::size_t p = 0; p < vh.size(); ++p)
            if (vh[p]) rp.volume_patches.push_back(static_cast<std::int64_t>(p));
        const auto& ph = pt_hit[code];
        for (std::size_t p = 0; p < ph.size(); ++p)
            if (ph[p]) rp.cloud_patches.push_back(static_cast<std::int64_t>(p));
        out.region_map.emplace(code, std::move(rp));
    }
    return out;
}

// Patch-id -> tooth-code sets derived from a region map, the form consumed by
// the correspondence builder.
inline std::vector<std::vector<int>> volume_patch_codes(const RegionMap& rm, std::int64_t num_patches) {
    std::vector<std::vector<int>> codes(static_cast<std::size_t>(num_patches));
    for (const auto& [code, rp] : rm) {
        for (auto p : rp.volume_patches) codes[static_cast<std::size_t>(p)].push_back(code);
    }
    return codes;
}

inline std::vector<std::vector<int>> cloud_patch_codes(const RegionMap& rm, std::int64_t num_patches) {
    std::vector<std::vector<int>> codes(static_cast<std::size_t>(num_patches));
    for (const auto& [code, rp] : rm) {
        for (auto p : rp.cloud_patches) codes[static_cast<std::size_t>(p)].push_back(code);
    }
    return codes;
}

}  // namespace dentalign
