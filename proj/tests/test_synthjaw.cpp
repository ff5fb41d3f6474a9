#include <gtest/gtest.h>

#include <set>

#include "dentalign/synthjaw.hpp"

using namespace dentalign;

namespace {

GeneratorConfig small_config() {
    GeneratorConfig cfg;
    cfg.dims = {48, 48, 48};
    cfg.spacing = {4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0};
    cfg.cloud_points = 768;
    cfg.surface_samples_per_tooth = 90;
    cfg.gum_samples = 320;
    cfg.tokenization.patch_edge = 8;
    cfg.tokenization.num_centroids = 24;
    cfg.tokenization.neighbors = 24;
    return cfg;
}

JawSpec spec_with(std::vector<int> teeth, std::uint64_t seed = 1) {
    JawSpec s;
    s.seed = seed;
    s.teeth_present = std::move(teeth);
    return s;
}

}  // namespace

TEST(SynthJaw, EmptyDentition) {
    PairedSample s = generate(spec_with({}), small_config());
    for (auto l : *s.volume.labels) EXPECT_EQ(l, fdi::kBackground);
    for (auto l : *s.cloud.labels) EXPECT_EQ(l, fdi::kBackground);
    EXPECT_GT(s.cloud.size(), 0u);  // gum points remain
    EXPECT_TRUE(s.region_map.empty());
}

TEST(SynthJaw, DeterministicGivenSeed) {
    JawSpec spec = spec_with({11, 16, 26, 31, 36, 46}, 77);
    spec.noise_level = 30.0;
    spec.metal_artifact = true;
    GeneratorConfig cfg = small_config();
    PairedSample a = generate(spec, cfg);
    PairedSample b = generate(spec, cfg);
    EXPECT_EQ(a.volume.values, b.volume.values);
    EXPECT_EQ(a.volume.labels, b.volume.labels);
    EXPECT_EQ(a.cloud.points, b.cloud.points);
    EXPECT_EQ(a.cloud.labels, b.cloud.labels);
    ASSERT_EQ(a.region_map.size(), b.region_map.size());
    for (const auto& [code, rp] : a.region_map) {
        EXPECT_EQ(rp.volume_patches, b.region_map.at(code).volume_patches);
        EXPECT_EQ(rp.cloud_patches, b.region_map.at(code).cloud_patches);
    }
}

TEST(SynthJaw, FullDentitionHasAll32CodesInBothModalities) {
    GeneratorConfig cfg = small_config();
    cfg.cloud_points = 1400;
    PairedSample s = generate(spec_with(fdi::all_tooth_codes(), 5), cfg);

    std::set<int> vol_codes, cloud_codes;
    for (auto l : *s.volume.labels) {
        if (fdi::is_tooth_code(l)) vol_codes.insert(l);
    }
    for (auto l : *s.cloud.labels) {
        if (fdi::is_tooth_code(l)) cloud_codes.insert(l);
    }
    EXPECT_EQ(vol_codes.size(), 32u);
    EXPECT_EQ(cloud_codes.size(), 32u);
}

TEST(SynthJaw, ToothPointsLieNearMatchingVoxels) {
    GeneratorConfig cfg = small_config();
    PairedSample s = generate(spec_with({21, 34, 47}, 9), cfg);
    const double tol = 0.5 * cfg.spacing[0] + 1e-12;
    for (std::size_t i = 0; i < s.cloud.size(); ++i) {
        const auto code = (*s.cloud.labels)[i];
        if (!fdi::is_tooth_code(code)) continue;
        const Vec3& p = s.cloud.points[i];
        // nearest voxel cube with the same label must be within half a spacing
        double best = 1e30;
        for (std::int64_t x = 0; x < s.volume.dims[0]; ++x)
            for (std::int64_t y = 0; y < s.volume.dims[1]; ++y)
                for (std::int64_t z = 0; z < s.volume.dims[2]; ++z) {
                    if (s.volume.label_at(x, y, z) != code) continue;
                    double d2 = 0;
                    const Vec3 vc{static_cast<double>(x) * cfg.spacing[0],
                                  static_cast<double>(y) * cfg.spacing[1],
                                  static_cast<double>(z) * cfg.spacing[2]};
                    for (int a = 0; a < 3; ++a) {
                        const double gap = std::max(
                            0.0, std::abs(p[static_cast<std::size_t>(a)] - vc[static_cast<std::size_t>(a)]) -
                                     0.5 * cfg.spacing[static_cast<std::size_t>(a)]);
                        d2 += gap * gap;
                    }
                    best = std::min(best, d2);
                }
        EXPECT_LE(std::sqrt(best), tol) << "point " << i << " code " << code;
    }
}

TEST(SynthJaw, RegionMapMatchesLabelSets) {
    GeneratorConfig cfg = small_config();
    PairedSample s = generate(spec_with({11, 12, 36}, 13), cfg);
    ASSERT_EQ(s.region_map.size(), 3u);
    for (const auto& [code, rp] : s.region_map) {
        EXPECT_FALSE(rp.volume_patches.empty()) << code;
        EXPECT_FALSE(rp.cloud_patches.empty()) << code;
    }
    // correspondence is symmetric by construction: same code <-> matched
    auto vox = volume_patch_codes(s.region_map, 6 * 6 * 6);
    auto pts = cloud_patch_codes(s.region_map, cfg.tokenization.num_centroids);
    for (const auto& [code, rp] : s.region_map) {
        for (auto p : rp.volume_patches) {
            EXPECT_NE(std::find(vox[static_cast<std::size_t>(p)].begin(),
                                vox[static_cast<std::size_t>(p)].end(), code),
                      vox[static_cast<std::size_t>(p)].end());
        }
        for (auto p : rp.cloud_patches) {
            EXPECT_NE(std::find(pts[static_cast<std::size_t>(p)].begin(),
                                pts[static_cast<std::size_t>(p)].end(), code),
                      pts[static_cast<std::size_t>(p)].end());
        }
    }
}

TEST(SynthJaw, MetalStreaksLabeled) {
    JawSpec spec = spec_with({16, 26, 36, 46}, 21);
    spec.metal_artifact = true;
    PairedSample s = generate(spec, small_config());
    std::int64_t metal = 0;
    for (std::size_t i = 0; i < s.volume.values.size(); ++i) {
        if ((*s.volume.labels)[i] == fdi::kMetal) {
            ++metal;
            EXPECT_DOUBLE_EQ(s.volume.values[i], hu::kMetal);
        }
    }
    EXPECT_GT(metal, 0);
}

TEST(SynthJaw, ImpossiblePlacementRaises) {
    JawSpec spec = spec_with({11, 12, 13, 14, 15, 16, 17, 18}, 3);
    for (auto& [g, size] : spec.tooth_size_table) size = {9.0, 9.0, 5.0};
    EXPECT_THROW(generate(spec, small_config()), GenerationError);
}

TEST(SynthJaw, InvalidSpecRejected) {
    EXPECT_THROW(generate(spec_with({10}), small_config()), DataError);
    JawSpec bad = spec_with({11});
    bad.tooth_size_table[3] = {0.0, 1.0, 1.0};
    EXPECT_THROW(generate(bad, small_config()), DataError);
}

TEST(SynthJaw, CrownAndRootIntensities) {
    GeneratorConfig cfg = small_config();
    PairedSample s = generate(spec_with({31}, 2), cfg);
    const double gum_z = 0.36 * static_cast<double>(cfg.dims[2]) * cfg.spacing[2];
    bool saw_crown = false, saw_root = false;
    for (std::int64_t i = 0; i < s.volume.dims[0]; ++i)
        for (std::int64_t j = 0; j < s.volume.dims[1]; ++j)
            for (std::int64_t k = 0; k < s.volume.dims[2]; ++k) {
                if (s.volume.label_at(i, j, k) != 31) continue;
                const double z = static_cast<double>(k) * cfg.spacing[2];
                const double v = s.volume.at(i, j, k);
                if (z >= gum_z) {
                    EXPECT_DOUBLE_EQ(v, hu::kCrown);
                    saw_crown = true;
                } else {
                    EXPECT_DOUBLE_EQ(v, hu::kRoot);
                    saw_root = true;
                }
            }
    EXPECT_TRUE(saw_crown);
    EXPECT_TRUE(saw_root);
}
