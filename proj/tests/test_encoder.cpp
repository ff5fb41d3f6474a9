#include <gtest/gtest.h>

#include <cmath>

#include "dentalign/encoder.hpp"
#include "dentalign/gradcheck.hpp"

using namespace dentalign;

namespace {

EncoderArch tiny_arch() { return EncoderArch{12, 8, 2, 16}; }

PointCloud grid_cloud(std::int64_t n, Rng& rng) {
    PointCloud pc;
    for (std::int64_t i = 0; i < n; ++i) {
        pc.points.push_back({rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(0, 40)});
        pc.normals.push_back({0, 0, 1});
    }
    return pc;
}

}  // namespace

TEST(TokenizeVolume, PatchCounts) {
    VoxelVolume v = VoxelVolume::filled({64, 64, 64}, {1, 1, 1}, 0.25);
    EXPECT_EQ(tokenize_volume(v, 8).blocks.shape[0], 512);

    VoxelVolume w = VoxelVolume::filled({65, 65, 65}, {1, 1, 1}, 0.25);
    VolumeTokens t = tokenize_volume(w, 8);  // padded to 72^3
    EXPECT_EQ(t.blocks.shape[0], 729);
    EXPECT_EQ(t.blocks.shape[1], 512);
}

TEST(TokenizeVolume, ConstantVolumeGivesIdenticalInteriorBlocks) {
    VoxelVolume v = VoxelVolume::filled({16, 16, 16}, {1, 1, 1}, 0.7);
    VolumeTokens t = tokenize_volume(v, 8);
    ASSERT_EQ(t.blocks.shape[0], 8);
    for (std::int64_t p = 1; p < 8; ++p) {
        for (std::int64_t j = 0; j < t.blocks.shape[1]; ++j) {
            EXPECT_EQ(t.blocks.at2(p, j), t.blocks.at2(0, j));
        }
    }
    EXPECT_EQ(t.valid_counts[0], 512);
}

TEST(TokenizeVolume, CentersAreInMm) {
    VoxelVolume v = VoxelVolume::filled({8, 8, 8}, {2, 2, 2}, 0.0);
    VolumeTokens t = tokenize_volume(v, 8);
    ASSERT_EQ(t.blocks.shape[0], 1);
    EXPECT_DOUBLE_EQ(t.centers[0][0], 7.0);  // (0 + 3.5) * 2mm
    EXPECT_THROW(tokenize_volume(v, 0), ConfigError);
}

TEST(TokenizeCloud, CountsAndDegenerateGrouping) {
    Rng rng(1);
    PointCloud pc = grid_cloud(64, rng);
    CloudTokens t = tokenize_cloud(pc, 16, 8);
    EXPECT_EQ(t.blocks.shape[0], 16);
    EXPECT_EQ(t.blocks.shape[1], 8 * 6);

    CloudTokens d = tokenize_cloud(pc, 64, 1);
    for (std::int64_t c = 0; c < 64; ++c) {
        // each patch is one point at its own local origin
        EXPECT_EQ(d.members[static_cast<std::size_t>(c)].size(), 1u);
        EXPECT_EQ(d.members[static_cast<std::size_t>(c)][0], d.centroid_indices[static_cast<std::size_t>(c)]);
        for (int a = 0; a < 3; ++a) EXPECT_EQ(d.blocks.at2(c, a), 0.0);
    }

    EXPECT_THROW(tokenize_cloud(pc, 65, 4), CardinalityError);
    EXPECT_THROW(tokenize_cloud(pc, 4, 65), CardinalityError);
}

TEST(TokenizeCloud, DuplicatePointsTakeLowestIndexFirst) {
    PointCloud pc;
    for (int i = 0; i < 6; ++i) {
        pc.points.push_back({1, 1, 1});
        pc.normals.push_back({0, 0, 1});
    }
    pc.points[5] = {9, 9, 9};
    CloudTokens t = tokenize_cloud(pc, 1, 3, 0);
    EXPECT_EQ(t.members[0], (std::vector<std::int64_t>{0, 1, 2}));
}

TEST(TokenizeCloud, TranslationCovariance) {
    Rng rng(2);
    PointCloud pc = grid_cloud(48, rng);
    PointCloud moved = pc;
    const Vec3 t{8.0, -16.0, 4.0};
    for (auto& p : moved.points) p = p + t;

    CloudTokens a = tokenize_cloud(pc, 12, 6);
    CloudTokens b = tokenize_cloud(moved, 12, 6);
    ASSERT_EQ(a.centroid_indices, b.centroid_indices);
    for (std::size_t c = 0; c < a.centers.size(); ++c) {
        for (int i = 0; i < 3; ++i) {
            EXPECT_NEAR(b.centers[c][static_cast<std::size_t>(i)],
                        a.centers[c][static_cast<std::size_t>(i)] + t[static_cast<std::size_t>(i)], 1e-9);
        }
    }
    for (std::size_t i = 0; i < a.blocks.data.size(); ++i) {
        EXPECT_NEAR(a.blocks.data[i], b.blocks.data[i], 1e-9);
    }
}

TEST(Encoder, OutputShapeAndUnitRows) {
    Rng rng(3);
    EncoderArch arch = tiny_arch();
    NamedTensors params = init_encoder_params(arch, rng, "enc.");
    ad::Tensor tokens = ad::Tensor::uniform({5, arch.token_width}, 1.0, rng);
    std::vector<Vec3> centers;
    for (int i = 0; i < 5; ++i) centers.push_back({i * 4.0, 2.0, 8.0});

    ad::Graph g;
    ad::Var out = encode_tokens(g, arch, bind_params(g, params), "enc.", tokens, centers);
    const ad::Tensor& e = g.value(out);
    ASSERT_EQ(e.shape, (ad::Shape{5, arch.hidden}));
    for (std::int64_t i = 0; i < 5; ++i) {
        double s = 0;
        for (std::int64_t j = 0; j < arch.hidden; ++j) s += e.at2(i, j) * e.at2(i, j);
        EXPECT_NEAR(std::sqrt(s), 1.0, 1e-9);
    }

    PatchEmbeddingSet set{e, Modality::kVoxel, centers, "s0", true};
    EXPECT_NO_THROW(set.validate());
}

TEST(Encoder, DeterministicBitwise) {
    Rng rng(4);
    EncoderArch arch = tiny_arch();
    NamedTensors params = init_encoder_params(arch, rng, "enc.");
    ad::Tensor tokens = ad::Tensor::uniform({4, arch.token_width}, 1.0, rng);
    std::vector<Vec3> centers(4, Vec3{1, 2, 3});

    ad::Graph g1, g2;
    const ad::Tensor& a = g1.value(encode_tokens(g1, arch, bind_params(g1, params), "enc.", tokens, centers));
    const ad::Tensor& b = g2.value(encode_tokens(g2, arch, bind_params(g2, params), "enc.", tokens, centers));
    EXPECT_EQ(a.data, b.data);
}

TEST(Encoder, PermutingPatchesPermutesRows) {
    Rng rng(5);
    EncoderArch arch = tiny_arch();
    NamedTensors params = init_encoder_params(arch, rng, "enc.");
    const std::int64_t n = 6;
    ad::Tensor tokens = ad::Tensor::uniform({n, arch.token_width}, 1.0, rng);
    std::vector<Vec3> centers;
    for (std::int64_t i = 0; i < n; ++i) centers.push_back({rng.uniform(0, 30), rng.uniform(0, 30), 5.0});

    const std::vector<std::int64_t> perm{3, 0, 5, 1, 4, 2};
    ad::Tensor ptokens = ad::Tensor::zeros({n, arch.token_width});
    std::vector<Vec3> pcenters(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        pcenters[static_cast<std::size_t>(i)] = centers[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        for (std::int64_t j = 0; j < arch.token_width; ++j) {
            ptokens.at2(i, j) = tokens.at2(perm[static_cast<std::size_t>(i)], j);
        }
    }

    ad::Graph g1, g2;
    const ad::Tensor& base = g1.value(encode_tokens(g1, arch, bind_params(g1, params), "enc.", tokens, centers));
    const ad::Tensor& permuted =
        g2.value(encode_tokens(g2, arch, bind_params(g2, params), "enc.", ptokens, pcenters));
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < arch.hidden; ++j) {
            EXPECT_NEAR(permuted.at2(i, j), base.at2(perm[static_cast<std::size_t>(i)], j), 1e-12);
        }
    }
}

TEST(Encoder, DifferentiableThroughEveryParameter) {
    Rng rng(6);
    EncoderArch arch = tiny_arch();
    NamedTensors params = init_encoder_params(arch, rng, "enc.");
    ad::Tensor tokens = ad::Tensor::uniform({4, arch.token_width}, 1.0, rng);
    std::vector<Vec3> centers{{0, 0, 0}, {8, 0, 0}, {0, 8, 0}, {8, 8, 8}};
    ad::Tensor probe = ad::Tensor::uniform({4, arch.hidden}, 1.0, rng);

    for (const auto& [name, tensor] : params) {
        auto f = [&, pname = name](ad::Graph& g, ad::Var x) {
            NamedTensors rest = params;
            rest.erase(pname);
            VarMap vars = bind_params(g, rest);
            vars.emplace(pname, x);
            ad::Var out = encode_tokens(g, arch, vars, "enc.", tokens, centers);
            return g.reduce_sum(g.mul(out, g.constant(probe)));
        };
        EXPECT_LT(ad::finite_difference_check(f, tensor, 1e-5), 1e-5) << name;
    }
}

TEST(Encoder, ValueLevelEncodeTagsModality) {
    Rng rng(7);
    VoxelVolume v = VoxelVolume::filled({8, 8, 8}, {1, 1, 1}, 0.3);
    VolumeTokens vt = tokenize_volume(v, 4);
    EncoderArch arch{vt.blocks.shape[1], 8, 1, 16};
    NamedTensors params = init_encoder_params(arch, rng, "vox.");
    PatchEmbeddingSet set = encode(arch, params, "vox.", vt, "sample-1");
    EXPECT_EQ(set.modality, Modality::kVoxel);
    EXPECT_EQ(set.num_patches(), 8);
    EXPECT_EQ(set.sample_id, "sample-1");
    EXPECT_NO_THROW(set.validate());
}

TEST(Encoder, ShapeMismatchRejected) {
    Rng rng(8);
    EncoderArch arch = tiny_arch();
    NamedTensors params = init_encoder_params(arch, rng, "enc.");
    ad::Tensor bad = ad::Tensor::uniform({4, arch.token_width + 1}, 1.0, rng);
    ad::Graph g;
    VarMap vars = bind_params(g, params);
    EXPECT_THROW(encode_tokens(g, arch, vars, "enc.", bad, std::vector<Vec3>(4)), ShapeError);
}
