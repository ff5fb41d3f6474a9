#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "dentalign/pointcloud.hpp"
#include "dentalign/preprocess.hpp"
#include "dentalign/tensor.hpp"
#include "dentalign/volume.hpp"

namespace dentalign {

struct Tokenization {
    std::int64_t patch_edge = 8;      // voxels per cubic patch side
    std::int64_t num_centroids = 32;  // point patches per cloud
    std::int64_t neighbors = 64;      // points per point patch
};

// Non-overlapping cubic blocks; volumes whose dims are not divisible by the
// edge are zero-padded. Patch centers are physical (mm).
struct VolumeTokens {
    ad::Tensor blocks;                       // (r, edge^3)
    std::vector<Vec3> centers;               // mm
    std::array<std::int64_t, 3> grid{};      // patches per axis
    std::int64_t patch_edge = 0;
    std::vector<std::int64_t> valid_counts;  // unpadded voxels per patch
};

inline std::int64_t volume_patch_of_voxel(const std::array<std::int64_t, 3>& grid,
                                          std::int64_t patch_edge, std::int64_t i, std::int64_t j,
                                          std::int64_t k) {
    return ((i / patch_edge) * grid[1] + (j / patch_edge)) * grid[2] + (k / patch_edge);
}

inline VolumeTokens tokenize_volume(const VoxelVolume& v, std::int64_t patch_edge) {
    if (patch_edge <= 0) throw ConfigError("patch_edge must be positive");
    if (v.voxel_count() == 0) throw EmptyInputError("tokenize of an empty volume");

    VolumeTokens out;
    out.patch_edge = patch_edge;
    for (int d = 0; d < 3; ++d) out.grid[static_cast<std::size_t>(d)] = (v.dims[static_cast<std::size_t>(d)] + patch_edge - 1) / patch_edge;
    const std::int64_t r = out.grid[0] * out.grid[1] * out.grid[2];
    const std::int64_t w = patch_edge * patch_edge * patch_edge;
    out.blocks = ad::Tensor::zeros({r, w});
    out.centers.resize(static_cast<std::size_t>(r));
    out.valid_counts.assign(static_cast<std::size_t>(r), 0);

    for (std::int64_t pi = 0; pi < out.grid[0]; ++pi) {
        for (std::int64_t pj = 0; pj < out.grid[1]; ++pj) {
            for (std::int64_t pk = 0; pk < out.grid[2]; ++pk) {
                const std::int64_t p = (pi * out.grid[1] + pj) * out.grid[2] + pk;
                out.centers[static_cast<std::size_t>(p)] = {
                    (static_cast<double>(pi * patch_edge) + (patch_edge - 1) / 2.0) * v.spacing[0],
                    (static_cast<double>(pj * patch_edge) + (patch_edge - 1) / 2.0) * v.spacing[1],
                    (static_cast<double>(pk * patch_edge) + (patch_edge - 1) / 2.0) * v.spacing[2]};
                double* block = out.blocks.data.data() + p * w;
                std::int64_t valid = 0;
                for (std::int64_t a = 0; a < patch_edge; ++a) {
                    const std::int64_t i = pi * patch_edge + a;
                    for (std::int64_t b = 0; b < patch_edge; ++b) {
                        const std::int64_t j = pj * patch_edge + b;
                        for (std::int64_t c = 0; c < patch_edge; ++c) {
                            const std::int64_t k = pk * patch_edge + c;
                            if (i < v.dims[0] && j < v.dims[1] && k < v.dims[2]) {
                                block[(a * patch_edge + b) * patch_edge + c] = v.at(i, j, k);
                                ++valid;
                            }
                        }
                    }
                }
                out.valid_counts[static_cast<std::size_t>(p)] = valid;
            }
        }
    }
    return out;
}

// FPS centroids with k nearest neighbors each, coordinates relative to the
// centroid. Token features per neighbor: relative xyz plus the unit normal.
struct CloudTokens {
    ad::Tensor blocks;  // (s, neighbors*6)
    std::vector<Vec3> centers;
    std::vector<std::int64_t> centroid_indices;
    std::vector<std::vector<std::int64_t>> members;
    std::vector<std::int64_t> point_patch;  // nearest centroid per cloud point
    std::int64_t neighbors = 0;
};

inline CloudTokens tokenize_cloud(const PointCloud& pc, std::int64_t num_centroids,
                                  std::int64_t neighbors, std::int64_t fps_seed = 0) {
    const auto n = static_cast<std::int64_t>(pc.size());
    if (num_centroids < 1 || num_centroids > n) {
        throw CardinalityError("tokenize_cloud: " + std::to_string(num_centroids) + " centroids for " +
                               std::to_string(n) + " points");
    }
    if (neighbors < 1 || neighbors > n) {
        throw CardinalityError("tokenize_cloud: " + std::to_string(neighbors) + " neighbors for " +
                               std::to_string(n) + " points");
    }

    CloudTokens out;
    out.neighbors = neighbors;
    out.centroid_indices = farthest_point_sampling(pc, num_centroids, fps_seed);
    out.centers.resize(static_cast<std::size_t>(num_centroids));
    out.members.resize(static_cast<std::size_t>(num_centroids));
    out.blocks = ad::Tensor::zeros({num_centroids, neighbors * 6});

    std::vector<std::pair<double, std::int64_t>> order(static_cast<std::size_t>(n));
    for (std::int64_t c = 0; c < num_centroids; ++c) {
        const Vec3 ctr = pc.points[static_cast<std::size_t>(out.centroid_indices[static_cast<std::size_t>(c)])];
        out.centers[static_cast<std::size_t>(c)] = ctr;
        for (std::int64_t i = 0; i < n; ++i) {
            order[static_cast<std::size_t>(i)] = {dist2(pc.points[static_cast<std::size_t>(i)], ctr), i};
        }
        std::partial_sort(order.begin(), order.begin() + neighbors, order.end());
        auto& mem = out.members[static_cast<std::size_t>(c)];
        mem.resize(static_cast<std::size_t>(neighbors));
        double* block = out.blocks.data.data() + c * neighbors * 6;
        for (std::int64_t m = 0; m < neighbors; ++m) {
            const std::int64_t idx = order[static_cast<std::size_t>(m)].second;
            mem[static_cast<std::size_t>(m)] = idx;
            const Vec3 rel = pc.points[static_cast<std::size_t>(idx)] - ctr;
            const Vec3& nr = pc.normals[static_cast<std::size_t>(idx)];
            double* f = block + m * 6;
            f[0] = rel[0];
            f[1] = rel[1];
            f[2] = rel[2];
            f[3] = nr[0];
            f[4] = nr[1];
            f[5] = nr[2];
        }
    }

    out.point_patch.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t best = 0;
        double best_d = dist2(pc.points[static_cast<std::size_t>(i)], out.centers[0]);
        for (std::int64_t c = 1; c < num_centroids; ++c) {
            const double d = dist2(pc.points[static_cast<std::size_t>(i)], out.centers[static_cast<std::size_t>(c)]);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        out.point_patch[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

}  // namespace dentalign
