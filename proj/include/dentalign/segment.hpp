#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "dentalign/encoder.hpp"
#include "dentalign/fdi.hpp"
#include "dentalign/graph.hpp"
#include "dentalign/tokenize.hpp"

namespace dentalign {

// Supervised targets folded to patch granularity. Every carrier item (voxel
// or point) belongs to exactly one patch, so patch-level class counts give
// the same CE and soft-Dice sums as item-level logits would.
struct PatchTargets {
    ad::Tensor class_counts;       // (num_patches, num_classes)
    ad::Tensor patch_item_counts;  // (1, num_patches)
    std::int64_t total_items = 0;
    std::vector<int> target_classes;  // distinct class indices present
};

inline PatchTargets make_patch_targets(std::int64_t num_patches, int num_classes) {
    PatchTargets t;
    t.class_counts = ad::Tensor::zeros({num_patches, num_classes});
    t.patch_item_counts = ad::Tensor::zeros({1, num_patches});
    return t;
}

namespace detail {

inline void count_item(PatchTargets& t, std::int64_t patch, int label_code, int num_classes) {
    if (!fdi::is_valid_label(label_code)) {
        throw LabelError("label " + std::to_string(label_code) + " outside the FDI label space");
    }
    const int cls = fdi::class_index(label_code);
    if (cls >= num_classes) {
        throw LabelError("class index " + std::to_string(cls) + " out of range for head with " +
                         std::to_string(num_classes) + " classes");
    }
    t.class_counts.at2(patch, cls) += 1.0;
    t.patch_item_counts.at2(0, patch) += 1.0;
    ++t.total_items;
}

inline void finalize_targets(PatchTargets& t) {
    const auto k = t.class_counts.shape[1];
    std::vector<char> seen(static_cast<std::size_t>(k), 0);
    for (std::int64_t p = 0; p < t.class_counts.shape[0]; ++p) {
        for (std::int64_t c = 0; c < k; ++c) {
            if (t.class_counts.at2(p, c) > 0) seen[static_cast<std::size_t>(c)] = 1;
        }
    }
    for (std::int64_t c = 0; c < k; ++c) {
        if (seen[static_cast<std::size_t>(c)]) t.target_classes.push_back(static_cast<int>(c));
    }
}

}  // namespace detail

inline PatchTargets voxel_patch_targets(const VoxelVolume& v, const VolumeTokens& tok,
                                        int num_classes = fdi::kNumClasses) {
    if (!v.labels) throw LabelError("voxel targets require a labeled volume");
    PatchTargets t = make_patch_targets(tok.blocks.shape[0], num_classes);
    for (std::int64_t i = 0; i < v.dims[0]; ++i)
        for (std::int64_t j = 0; j < v.dims[1]; ++j)
            for (std::int64_t k = 0; k < v.dims[2]; ++k) {
                const auto patch = volume_patch_of_voxel(tok.grid, tok.patch_edge, i, j, k);
                detail::count_item(t, patch, v.label_at(i, j, k), num_classes);
            }
    detail::finalize_targets(t);
    return t;
}

inline PatchTargets point_patch_targets(const PointCloud& pc, const CloudTokens& tok,
                                        int num_classes = fdi::kNumClasses) {
    if (!pc.labels) throw LabelError("point targets require a labeled cloud");
    PatchTargets t = make_patch_targets(static_cast<std::int64_t>(tok.centers.size()), num_classes);
    for (std::size_t i = 0; i < pc.size(); ++i) {
        detail::count_item(t, tok.point_patch[i], (*pc.labels)[i], num_classes);
    }
    detail::finalize_targets(t);
    return t;
}

// ---- losses -----------------------------------------------------------------

namespace detail {

// numerically stable log softmax over rows, composed from primitive ops
inline ad::Var log_softmax_rows(ad::Graph& g, ad::Var logits) {
    const ad::Tensor& x = g.value(logits);
    const auto m = x.shape[0], k = x.shape[1];
    ad::Var ones_row = g.constant(ad::Tensor::full({1, k}, 1.0));
    ad::Var ones_col = g.constant(ad::Tensor::full({k, 1}, 1.0));
    ad::Var rowmax = g.reshape(g.reduce_max(logits, 1), {m, 1});
    ad::Var shifted = g.sub(logits, g.matmul(rowmax, ones_row));
    ad::Var logsum = g.log(g.matmul(g.exp(shifted), ones_col));
    return g.sub(shifted, g.matmul(logsum, ones_row));
}

inline ad::Tensor weighted_counts(const PatchTargets& t, const std::vector<double>& class_weights) {
    ad::Tensor cw = t.class_counts;
    if (!class_weights.empty()) {
        const auto k = cw.shape[1];
        if (static_cast<std::int64_t>(class_weights.size()) != k) {
            throw ShapeError("class_weights length " + std::to_string(class_weights.size()) +
                             " does not match " + std::to_string(k) + " classes");
        }
        for (std::int64_t p = 0; p < cw.shape[0]; ++p)
            for (std::int64_t c = 0; c < k; ++c) cw.at2(p, c) *= class_weights[static_cast<std::size_t>(c)];
    }
    return cw;
}

}  // namespace detail

// Mean cross-entropy over carrier items, computed from patch logits and
// per-patch class counts.
inline ad::Var ce_loss_on(ad::Graph& g, ad::Var logits, const PatchTargets& targets,
                          const std::vector<double>& class_weights = {}) {
    const ad::Tensor& x = g.value(logits);
    if (x.rank() != 2 || x.shape != targets.class_counts.shape) {
        throw ShapeError("logits " + ad::shape_str(x.shape) + " do not match targets " +
                         ad::shape_str(targets.class_counts.shape));
    }
    if (targets.total_items == 0) throw DegenerateBatchError("loss over zero items");
    ad::Var logsm = detail::log_softmax_rows(g, logits);
    ad::Var weighted = g.mul(logsm, g.constant(detail::weighted_counts(targets, class_weights)));
    return g.scalar_mul(g.reduce_sum(weighted), -1.0 / static_cast<double>(targets.total_items));
}

inline ad::Var point_ce_loss_on(ad::Graph& g, ad::Var logits, const PatchTargets& targets,
                                const std::vector<double>& class_weights = {}) {
    return ce_loss_on(g, logits, targets, class_weights);
}

struct DiceCeParts {
    ad::Var total, dice, ce;
};

// (1 - mean soft Dice over present classes) + mean cross-entropy. A class is
// "present" if it appears in the targets or wins the argmax of some patch.
inline DiceCeParts dice_ce_loss_on(ad::Graph& g, ad::Var logits, const PatchTargets& targets,
                                   const std::vector<double>& class_weights = {}, double eps = 1e-5) {
    const ad::Tensor& x = g.value(logits);
    if (x.rank() != 2 || x.shape != targets.class_counts.shape) {
        throw ShapeError("logits " + ad::shape_str(x.shape) + " do not match targets " +
                         ad::shape_str(targets.class_counts.shape));
    }
    const auto m = x.shape[0], k = x.shape[1];

    ad::Var ce = ce_loss_on(g, logits, targets, class_weights);

    ad::Var probs = g.softmax_lastdim(logits);
    ad::Var ones_m = g.constant(ad::Tensor::full({1, m}, 1.0));
    ad::Var inter = g.matmul(ones_m, g.mul(probs, g.constant(targets.class_counts)));  // (1,K)
    ad::Var pred_mass = g.matmul(g.constant(targets.patch_item_counts), probs);        // (1,K)

    ad::Tensor target_mass = ad::Tensor::zeros({1, k});
    for (std::int64_t p = 0; p < m; ++p)
        for (std::int64_t c = 0; c < k; ++c) target_mass.at2(0, c) += targets.class_counts.at2(p, c);

    ad::Var eps_s = g.scalar_const(eps);
    ad::Var num = g.add(g.scalar_mul(inter, 2.0), eps_s);
    ad::Var den = g.add(g.add(pred_mass, g.constant(target_mass)), eps_s);
    ad::Var dice_per_class = g.mul(num, g.exp(g.scalar_mul(g.log(den), -1.0)));  // (1,K)

    // presence: target classes plus argmax winners of non-empty patches
    std::vector<char> present(static_cast<std::size_t>(k), 0);
    for (int c : targets.target_classes) present[static_cast<std::size_t>(c)] = 1;
    for (std::int64_t p = 0; p < m; ++p) {
        if (targets.patch_item_counts.at2(0, p) == 0.0) continue;
        std::int64_t arg = 0;
        for (std::int64_t c = 1; c < k; ++c) {
            if (x.at2(p, c) > x.at2(p, arg)) arg = c;  // ties keep the lowest class
        }
        present[static_cast<std::size_t>(arg)] = 1;
    }
    std::vector<std::int64_t> idx;
    for (std::int64_t c = 0; c < k; ++c) {
        if (present[static_cast<std::size_t>(c)]) idx.push_back(c);
    }

    ad::Var mean_dice = g.reduce_mean(g.gather_rows(g.reshape(dice_per_class, {k, 1}), idx));
    ad::Var dice_part = g.sub(g.scalar_const(1.0), mean_dice);
    return DiceCeParts{g.add(dice_part, ce), dice_part, ce};
}

// ---- heads & prediction ------------------------------------------------------

inline NamedTensors init_head_params(std::int64_t hidden, int num_classes, Rng& rng,
                                     const std::string& prefix) {
    NamedTensors p;
    p[prefix + "w"] = ad::Tensor::uniform({hidden, num_classes}, 1.0 / std::sqrt(static_cast<double>(hidden)),
                                          rng, true);
    p[prefix + "b"] = ad::Tensor::full({num_classes}, 0.0, true);
    return p;
}

inline ad::Var head_logits_on(ad::Graph& g, const VarMap& vars, const std::string& prefix,
                              ad::Var embeddings) {
    auto at = [&](const std::string& key) {
        auto it = vars.find(prefix + key);
        if (it == vars.end()) throw ContractError("missing head parameter " + prefix + key);
        return it->second;
    };
    const auto n = g.value(embeddings).shape[0];
    return detail::add_bias_rows(g, g.matmul(embeddings, at("w")), at("b"), n);
}

// argmax per patch, ties to the lowest class code
inline std::vector<int> patch_argmax_classes(const ad::Tensor& logits) {
    std::vector<int> out(static_cast<std::size_t>(logits.shape[0]));
    for (std::int64_t p = 0; p < logits.shape[0]; ++p) {
        std::int64_t arg = 0;
        for (std::int64_t c = 1; c < logits.shape[1]; ++c) {
            if (logits.at2(p, c) > logits.at2(p, arg)) arg = c;
        }
        out[static_cast<std::size_t>(p)] = static_cast<int>(arg);
    }
    return out;
}

// Every voxel inherits its patch's argmax class.
inline std::vector<std::uint16_t> unpool_voxel_mask(const std::vector<int>& patch_classes,
                                                    const VolumeTokens& tok,
                                                    const std::array<std::int64_t, 3>& dims) {
    std::vector<std::uint16_t> mask(static_cast<std::size_t>(dims[0] * dims[1] * dims[2]));
    for (std::int64_t i = 0; i < dims[0]; ++i)
        for (std::int64_t j = 0; j < dims[1]; ++j)
            for (std::int64_t k = 0; k < dims[2]; ++k) {
                const auto patch = volume_patch_of_voxel(tok.grid, tok.patch_edge, i, j, k);
                mask[static_cast<std::size_t>((i * dims[1] + j) * dims[2] + k)] = static_cast<std::uint16_t>(
                    fdi::code_of_class(patch_classes[static_cast<std::size_t>(patch)]));
            }
    return mask;
}

inline std::vector<std::uint16_t> unpool_point_mask(const std::vector<int>& patch_classes,
                                                    const CloudTokens& tok) {
    std::vector<std::uint16_t> mask(tok.point_patch.size());
    for (std::size_t i = 0; i < tok.point_patch.size(); ++i) {
        mask[i] = static_cast<std::uint16_t>(
            fdi::code_of_class(patch_classes[static_cast<std::size_t>(tok.point_patch[i])]));
    }
    return mask;
}

}  // namespace dentalign
