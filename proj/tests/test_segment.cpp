#include <gtest/gtest.h>

#include <cmath>

#include "dentalign/gradcheck.hpp"
#include "dentalign/segment.hpp"

using namespace dentalign;

namespace {

// 3 patches x 4 classes, small item counts
PatchTargets tiny_targets() {
    PatchTargets t = make_patch_targets(3, 4);
    t.class_counts.at2(0, 1) = 3;
    t.class_counts.at2(0, 0) = 1;
    t.class_counts.at2(1, 2) = 4;
    t.class_counts.at2(2, 0) = 2;
    t.patch_item_counts.at2(0, 0) = 4;
    t.patch_item_counts.at2(0, 1) = 4;
    t.patch_item_counts.at2(0, 2) = 2;
    t.total_items = 10;
    t.target_classes = {0, 1, 2};
    return t;
}

}  // namespace

TEST(PatchTargets, VoxelCountsAndLabelValidation) {
    VoxelVolume v = VoxelVolume::filled({4, 4, 4}, {1, 1, 1}, 0.2, true);
    (*v.labels)[0] = 11;
    (*v.labels)[1] = 99;
    VolumeTokens tok = tokenize_volume(v, 2);
    PatchTargets t = voxel_patch_targets(v, tok);
    EXPECT_EQ(t.total_items, 64);
    EXPECT_DOUBLE_EQ(t.class_counts.at2(0, fdi::class_index(11)), 1.0);
    EXPECT_DOUBLE_EQ(t.class_counts.at2(0, 33), 1.0);
    EXPECT_DOUBLE_EQ(t.class_counts.at2(0, 0), 6.0);
    EXPECT_EQ(t.target_classes, (std::vector<int>{0, 1, 33}));

    (*v.labels)[5] = 77;  // not a valid FDI label
    EXPECT_THROW(voxel_patch_targets(v, tok), LabelError);
}

TEST(CeLoss, UniformLogitsGiveLogK) {
    // one item, uniform logits over 4 classes -> CE = ln 4 exactly
    PatchTargets t = make_patch_targets(1, 4);
    t.class_counts.at2(0, 2) = 1;
    t.patch_item_counts.at2(0, 0) = 1;
    t.total_items = 1;
    t.target_classes = {2};
    ad::Graph g;
    ad::Var logits = g.leaf(ad::Tensor::full({1, 4}, 0.7));
    EXPECT_DOUBLE_EQ(g.value(ce_loss_on(g, logits, t)).data[0], std::log(4.0));
}

TEST(CeLoss, Uniform34ClassesGiveLog34) {
    PatchTargets t = make_patch_targets(1, 34);
    t.class_counts.at2(0, 7) = 1;
    t.patch_item_counts.at2(0, 0) = 1;
    t.total_items = 1;
    t.target_classes = {7};
    ad::Graph g;
    ad::Var logits = g.leaf(ad::Tensor::zeros({1, 34}));
    const double ce = g.value(point_ce_loss_on(g, logits, t)).data[0];
    EXPECT_DOUBLE_EQ(ce, std::log(34.0));
    EXPECT_NEAR(ce, 3.5264, 1e-4);
}

TEST(CeLoss, PerfectPredictionIsZero) {
    PatchTargets t = tiny_targets();
    ad::Tensor logits = ad::Tensor::full({3, 4}, -50.0);
    logits.at2(0, 1) = 50.0;  // argmax matches the dominant class per patch
    logits.at2(1, 2) = 50.0;
    logits.at2(2, 0) = 50.0;
    // patch 0 contains one background item; its CE term is 100 * 1/10
    ad::Graph g;
    const double ce = g.value(ce_loss_on(g, g.leaf(logits), t)).data[0];
    EXPECT_NEAR(ce, 10.0, 1e-9);  // the one mislabeled item costs -log p = 100 / N
}

TEST(DiceCe, PerfectOneHotPrediction) {
    PatchTargets t = make_patch_targets(2, 3);
    t.class_counts.at2(0, 1) = 4;
    t.class_counts.at2(1, 2) = 4;
    t.patch_item_counts.at2(0, 0) = 4;
    t.patch_item_counts.at2(0, 1) = 4;
    t.total_items = 8;
    t.target_classes = {1, 2};

    ad::Tensor logits = ad::Tensor::full({2, 3}, -50.0);
    logits.at2(0, 1) = 50.0;
    logits.at2(1, 2) = 50.0;
    ad::Graph g;
    DiceCeParts parts = dice_ce_loss_on(g, g.leaf(logits), t);
    EXPECT_LT(g.value(parts.total).data[0], 1e-6);
    EXPECT_LT(g.value(parts.dice).data[0], 1e-6);
    EXPECT_LT(g.value(parts.ce).data[0], 1e-12);
}

TEST(DiceCe, DecompositionAndNonNegativity) {
    Rng rng(3);
    PatchTargets t = tiny_targets();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        ad::Tensor logits = ad::Tensor::uniform({3, 4}, 2.0, rng);
        ad::Graph g;
        DiceCeParts parts = dice_ce_loss_on(g, g.leaf(logits), t);
        const double total = g.value(parts.total).data[0];
        EXPECT_DOUBLE_EQ(total, g.value(parts.dice).data[0] + g.value(parts.ce).data[0]);
        EXPECT_GE(total, 0.0);
    }
}

TEST(DiceCe, SoftDiceOfIdenticalPairNearOne) {
    // prediction mass == target mass per class -> dice within eps-tolerance of 1
    PatchTargets t = make_patch_targets(1, 2);
    t.class_counts.at2(0, 0) = 6;
    t.patch_item_counts.at2(0, 0) = 6;
    t.total_items = 6;
    t.target_classes = {0};
    ad::Tensor logits({1, 2}, {60.0, -60.0});
    ad::Graph g;
    DiceCeParts parts = dice_ce_loss_on(g, g.leaf(logits), t);
    EXPECT_NEAR(g.value(parts.dice).data[0], 0.0, 1e-5);
}

TEST(DiceCe, GradientMatchesFiniteDifferences) {
    Rng rng(4);
    PatchTargets t = tiny_targets();
    ad::Tensor logits = ad::Tensor::uniform({3, 4}, 1.5, rng);
    auto f_total = [&](ad::Graph& g, ad::Var x) { return dice_ce_loss_on(g, x, t).total; };
    EXPECT_LT(ad::finite_difference_check(f_total, logits, 1e-5), 1e-5);
    auto f_ce = [&](ad::Graph& g, ad::Var x) { return ce_loss_on(g, x, t); };
    EXPECT_LT(ad::finite_difference_check(f_ce, logits, 1e-5), 1e-5);
}

TEST(DiceCe, ClassPermutationEquivariance) {
    Rng rng(5);
    PatchTargets t = tiny_targets();
    ad::Tensor logits = ad::Tensor::uniform({3, 4}, 1.5, rng);

    const std::vector<std::int64_t> perm{2, 0, 3, 1};
    PatchTargets tp = make_patch_targets(3, 4);
    tp.patch_item_counts = t.patch_item_counts;
    tp.total_items = t.total_items;
    ad::Tensor plogits = ad::Tensor::zeros({3, 4});
    for (std::int64_t p = 0; p < 3; ++p) {
        for (std::int64_t c = 0; c < 4; ++c) {
            plogits.at2(p, c) = logits.at2(p, perm[static_cast<std::size_t>(c)]);
            tp.class_counts.at2(p, c) = t.class_counts.at2(p, perm[static_cast<std::size_t>(c)]);
        }
    }
    for (int c = 0; c < 4; ++c) {
        if (std::find(t.target_classes.begin(), t.target_classes.end(),
                      static_cast<int>(perm[static_cast<std::size_t>(c)])) != t.target_classes.end()) {
            tp.target_classes.push_back(c);
        }
    }

    ad::Graph g1, g2;
    const double base = g1.value(dice_ce_loss_on(g1, g1.leaf(logits), t).total).data[0];
    const double permuted = g2.value(dice_ce_loss_on(g2, g2.leaf(plogits), tp).total).data[0];
    EXPECT_NEAR(base, permuted, 1e-12);
}

TEST(Predict, ArgmaxTiesAndSingleClass) {
    ad::Tensor tied({2, 3}, {1.0, 1.0, 0.5, 0.2, 0.9, 0.9});
    auto cls = patch_argmax_classes(tied);
    EXPECT_EQ(cls, (std::vector<int>{0, 1}));  // lowest class wins ties

    ad::Tensor single({2, 1}, {0.3, -4.0});
    EXPECT_EQ(patch_argmax_classes(single), (std::vector<int>{0, 0}));
}

TEST(Predict, UnpoolCoversEveryVoxelOnce) {
    VoxelVolume v = VoxelVolume::filled({5, 4, 4}, {1, 1, 1}, 0.1, true);
    VolumeTokens tok = tokenize_volume(v, 4);  // padded to 8x4x4 -> 2 patches
    ASSERT_EQ(tok.blocks.shape[0], 2);
    std::vector<int> classes{fdi::class_index(11), fdi::class_index(48)};
    auto mask = unpool_voxel_mask(classes, tok, v.dims);
    ASSERT_EQ(mask.size(), static_cast<std::size_t>(v.voxel_count()));
    for (std::int64_t i = 0; i < v.dims[0]; ++i)
        for (std::int64_t j = 0; j < v.dims[1]; ++j)
            for (std::int64_t k = 0; k < v.dims[2]; ++k) {
                const auto want = i < 4 ? 11 : 48;
                EXPECT_EQ(mask[static_cast<std::size_t>((i * 4 + j) * 4 + k)], want);
            }
}

TEST(Predict, PointMaskFollowsNearestCentroid) {
    PointCloud pc;
    for (double x : {0.0, 0.1, 10.0, 10.1}) {
        pc.points.push_back({x, 0, 0});
        pc.normals.push_back({0, 0, 1});
    }
    CloudTokens tok = tokenize_cloud(pc, 2, 2, 0);
    std::vector<int> classes{fdi::class_index(21), fdi::class_index(31)};
    auto mask = unpool_point_mask(classes, tok);
    // centroid 0 is point 0, centroid 1 is the far point
    EXPECT_EQ(mask[0], 21);
    EXPECT_EQ(mask[1], 21);
    EXPECT_EQ(mask[2], 31);
    EXPECT_EQ(mask[3], 31);
}

TEST(Heads, LogitShapeAndBias) {
    Rng rng(6);
    NamedTensors head = init_head_params(8, 34, rng, "head.vox.");
    ad::Graph g;
    VarMap vars = bind_params(g, head);
    ad::Var emb = g.leaf(ad::Tensor::uniform({5, 8}, 1.0, rng));
    ad::Var logits = head_logits_on(g, vars, "head.vox.", emb);
    EXPECT_EQ(g.value(logits).shape, (ad::Shape{5, 34}));
}
