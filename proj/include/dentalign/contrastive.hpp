#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "dentalign/encoder.hpp"
#include "dentalign/graph.hpp"
#include "dentalign/synthjaw.hpp"

namespace dentalign {

// Dense +1/-1 matching matrix. Rows index one patch set, columns the other.
struct CorrespondenceMatrix {
    std::int64_t rows = 0, cols = 0;
    std::vector<std::int8_t> z;  // +1 or -1
    std::int64_t positives = 0;  // |B|, the batch pair count

    std::int8_t at(std::int64_t i, std::int64_t j) const {
        return z[static_cast<std::size_t>(i * cols + j)];
    }

    ad::Tensor as_tensor() const {
        ad::Tensor t = ad::Tensor::zeros({rows, cols});
        for (std::size_t i = 0; i < z.size(); ++i) t.data[i] = static_cast<double>(z[i]);
        return t;
    }

    static CorrespondenceMatrix from_sign_matrix(std::int64_t rows, std::int64_t cols,
                                                 std::vector<std::int8_t> z) {
        CorrespondenceMatrix m;
        m.rows = rows;
        m.cols = cols;
        m.z = std::move(z);
        m.positives = static_cast<std::int64_t>(std::count(m.z.begin(), m.z.end(), std::int8_t{1}));
        if (m.positives == 0) throw DegenerateBatchError("correspondence has no positive pairs");
        return m;
    }
};

// Matched iff the two patches reference a common tooth code.
inline CorrespondenceMatrix correspondence_from_codes(const std::vector<std::vector<int>>& row_codes,
                                                      const std::vector<std::vector<int>>& col_codes) {
    const auto r = static_cast<std::int64_t>(row_codes.size());
    const auto c = static_cast<std::int64_t>(col_codes.size());
    std::vector<std::int8_t> z(static_cast<std::size_t>(r * c), -1);
    for (std::int64_t i = 0; i < r; ++i) {
        const auto& rc = row_codes[static_cast<std::size_t>(i)];
        if (rc.empty()) continue;
        for (std::int64_t j = 0; j < c; ++j) {
            for (int code : col_codes[static_cast<std::size_t>(j)]) {
                if (std::find(rc.begin(), rc.end(), code) != rc.end()) {
                    z[static_cast<std::size_t>(i * c + j)] = 1;
                    break;
                }
            }
        }
    }
    return CorrespondenceMatrix::from_sign_matrix(r, c, std::move(z));
}

inline CorrespondenceMatrix build_cross_correspondence(const PatchEmbeddingSet& voxel_set,
                                                       const PatchEmbeddingSet& point_set,
                                                       const RegionMap& region_map) {
    return correspondence_from_codes(volume_patch_codes(region_map, voxel_set.num_patches()),
                                     cloud_patch_codes(region_map, point_set.num_patches()));
}

// Generic path: matched iff patch centers lie within tau (mm).
inline CorrespondenceMatrix build_cross_correspondence(const PatchEmbeddingSet& voxel_set,
                                                       const PatchEmbeddingSet& point_set,
                                                       double tau_mm) {
    const auto r = voxel_set.num_patches(), c = point_set.num_patches();
    std::vector<std::int8_t> z(static_cast<std::size_t>(r * c), -1);
    for (std::int64_t i = 0; i < r; ++i) {
        for (std::int64_t j = 0; j < c; ++j) {
            const double d = norm(voxel_set.patch_centers[static_cast<std::size_t>(i)] -
                                  point_set.patch_centers[static_cast<std::size_t>(j)]);
            if (d <= tau_mm) z[static_cast<std::size_t>(i * c + j)] = 1;
        }
    }
    return CorrespondenceMatrix::from_sign_matrix(r, c, std::move(z));
}

// Learnable scale/bias pairs for both alignment heads. Scales live as
// log-parameters so t stays positive; alpha is a fixed hyperparameter.
struct ContrastiveInit {
    double t_g = 10.0;
    double b_g = -10.0;
    double t_l = 10.0;
    double b_l = -10.0;
    double alpha = 1.0;
};

inline NamedTensors init_contrastive_params(const ContrastiveInit& init, const std::string& prefix) {
    if (init.t_g <= 0 || init.t_l <= 0) throw ConfigError("logit scales must be positive");
    NamedTensors p;
    p[prefix + "t_log_g"] = ad::Tensor::scalar(std::log(init.t_g), true);
    p[prefix + "b_g"] = ad::Tensor::scalar(init.b_g, true);
    p[prefix + "t_log_l"] = ad::Tensor::scalar(std::log(init.t_l), true);
    p[prefix + "b_l"] = ad::Tensor::scalar(init.b_l, true);
    return p;
}

struct BoundContrastive {
    ad::Var t_g, b_g, t_l, b_l;  // t_* already exponentiated
};

inline BoundContrastive bind_contrastive(ad::Graph& g, const VarMap& vars, const std::string& prefix) {
    auto at = [&](const std::string& key) {
        auto it = vars.find(prefix + key);
        if (it == vars.end()) throw ContractError("missing contrastive parameter " + prefix + key);
        return it->second;
    };
    return BoundContrastive{g.exp(at("t_log_g")), at("b_g"), g.exp(at("t_log_l")), at("b_l")};
}

namespace detail {

// Reduce a matrix by summing entries in ascending value order. The sorted
// order makes the sum (and so the loss) bitwise invariant under simultaneous
// row/column permutations and under transposition.
inline ad::Var sorted_sum(ad::Graph& g, ad::Var matrix) {
    const ad::Tensor& m = g.value(matrix);
    std::vector<std::int64_t> order(static_cast<std::size_t>(m.numel()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        return m.data[static_cast<std::size_t>(a)] < m.data[static_cast<std::size_t>(b)];
    });
    ad::Var flat = g.reshape(matrix, {m.numel(), 1});
    return g.reduce_sum(g.gather_rows(flat, std::move(order)));
}

inline void check_normalized_or_zero(const ad::Tensor& rows, const char* which) {
    const auto h = rows.shape[1];
    for (std::int64_t i = 0; i < rows.shape[0]; ++i) {
        double s = 0;
        for (std::int64_t j = 0; j < h; ++j) s += rows.at2(i, j) * rows.at2(i, j);
        const double n = std::sqrt(s);
        // zero rows are tolerated as uninformative embeddings; anything else
        // must be unit length
        if (n > 1e-6 && std::abs(n - 1.0) > 1e-6) {
            throw ContractError(std::string(which) + " row " + std::to_string(i) +
                                " is neither unit nor zero (norm " + std::to_string(n) + ")");
        }
    }
}

}  // namespace detail

// L_Cross = -(1/|B|) sum_ij log sigmoid(z_ij (t_g c_i.p_j - b_g)), |B| = positive pair count.
inline ad::Var cross_modal_loss_on(ad::Graph& g, ad::Var c_rows, ad::Var p_rows,
                                   const CorrespondenceMatrix& z, ad::Var t_g, ad::Var b_g,
                                   bool check_normalization = true) {
    const ad::Tensor& c = g.value(c_rows);
    const ad::Tensor& p = g.value(p_rows);
    if (c.rank() != 2 || p.rank() != 2 || c.shape[1] != p.shape[1]) {
        throw ShapeError("cross_modal_loss: embedding shapes " + ad::shape_str(c.shape) + " vs " +
                         ad::shape_str(p.shape));
    }
    if (z.rows != c.shape[0] || z.cols != p.shape[0]) {
        throw ShapeError("cross_modal_loss: z is " + std::to_string(z.rows) + "x" + std::to_string(z.cols) +
                         " for " + std::to_string(c.shape[0]) + "x" + std::to_string(p.shape[0]) + " pairs");
    }
    if (check_normalization) {
        detail::check_normalized_or_zero(c, "CBCT embedding");
        detail::check_normalized_or_zero(p, "IOS embedding");
    }

    ad::Var sim = g.matmul(c_rows, g.transpose(p_rows));
    ad::Var logits = g.sub(g.mul(sim, t_g), b_g);
    ad::Var matched = g.mul(logits, g.constant(z.as_tensor()));
    ad::Var log_sig = g.log(g.sigmoid(matched));
    return g.scalar_mul(detail::sorted_sum(g, log_sig), -1.0 / static_cast<double>(z.positives));
}

// Cosine similarities and per-entry log-sigmoid scores between two views.
struct SimilarityMatrix {
    ad::Tensor a;       // cosine similarities
    ad::Tensor scores;  // (A)_ij = log sigmoid(z_ij (t_l a_ij - b_l))
    std::int64_t w = 0;  // column count, the averaging width in the intra loss
};

namespace detail {

inline ad::Var cosine_matrix_on(ad::Graph& g, ad::Var a_rows, ad::Var b_rows) {
    const ad::Tensor& a = g.value(a_rows);
    const ad::Tensor& b = g.value(b_rows);
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[1]) {
        throw ShapeError("cosine: embedding shapes " + ad::shape_str(a.shape) + " vs " +
                         ad::shape_str(b.shape));
    }
    for (const ad::Tensor* t : {&a, &b}) {
        for (std::int64_t i = 0; i < t->shape[0]; ++i) {
            double s = 0;
            for (std::int64_t j = 0; j < t->shape[1]; ++j) s += t->at2(i, j) * t->at2(i, j);
            if (s == 0.0) throw ContractError("zero-norm patch row " + std::to_string(i));
        }
    }
    const auto h = a.shape[1];
    ad::Var ones_h = g.constant(ad::Tensor::full({h, 1}, 1.0));
    ad::Var dots = g.matmul(a_rows, g.transpose(b_rows));
    ad::Var na = g.exp(g.scalar_mul(g.log(g.matmul(g.mul(a_rows, a_rows), ones_h)), 0.5));
    ad::Var nb = g.exp(g.scalar_mul(g.log(g.matmul(g.mul(b_rows, b_rows), ones_h)), 0.5));
    ad::Var nn = g.matmul(na, g.transpose(nb));
    return g.mul(dots, g.exp(g.scalar_mul(g.log(nn), -1.0)));
}

inline ad::Var intra_scores_on(ad::Graph& g, ad::Var a_rows, ad::Var b_rows,
                               const CorrespondenceMatrix& z, ad::Var t_l, ad::Var b_l) {
    ad::Var cos = cosine_matrix_on(g, a_rows, b_rows);
    const ad::Tensor& a = g.value(a_rows);
    const ad::Tensor& b = g.value(b_rows);
    if (z.rows != a.shape[0] || z.cols != b.shape[0]) {
        throw ShapeError("intra z dims do not match the two views");
    }
    ad::Var logits = g.sub(g.mul(cos, t_l), b_l);
    return g.log(g.sigmoid(g.mul(logits, g.constant(z.as_tensor()))));
}

}  // namespace detail

inline SimilarityMatrix intra_similarity(const PatchEmbeddingSet& view_a, const PatchEmbeddingSet& view_b,
                                         const CorrespondenceMatrix& z, double t_l, double b_l) {
    if (view_a.modality != view_b.modality) {
        throw ContractError("intra_similarity requires views of the same modality");
    }
    if (!view_a.sample_id.empty() && view_a.sample_id != view_b.sample_id) {
        throw ContractError("intra_similarity requires views of the same sample");
    }
    ad::Graph g;
    ad::Var a = g.constant(view_a.embeddings);
    ad::Var b = g.constant(view_b.embeddings);
    ad::Var cos = detail::cosine_matrix_on(g, a, b);
    ad::Var scores = g.log(g.sigmoid(
        g.mul(g.sub(g.scalar_mul(cos, t_l), g.scalar_const(b_l)), g.constant(z.as_tensor()))));
    return SimilarityMatrix{g.value(cos), g.value(scores), z.cols};
}

// One entry per augmented view pair already bound into the graph.
struct BoundViewPair {
    ad::Var view_a, view_b;  // (n_patches, hidden) each
    const CorrespondenceMatrix* z;
};

// L_Intra = -(1/|B|) sum_pairs (1/w) sum_j max_i (A)_ij, |B| = number of view pairs.
inline ad::Var intra_modal_loss_on(ad::Graph& g, const std::vector<BoundViewPair>& pairs, ad::Var t_l,
                                   ad::Var b_l) {
    if (pairs.empty()) throw DegenerateBatchError("intra loss over an empty batch");
    ad::Var acc;
    for (std::size_t s = 0; s < pairs.size(); ++s) {
        const auto& vp = pairs[s];
        if (vp.z->cols == 0) throw DegenerateBatchError("intra view pair with w = 0");
        ad::Var scores = detail::intra_scores_on(g, vp.view_a, vp.view_b, *vp.z, t_l, b_l);
        ad::Var col_max = g.reduce_max(scores, 0);
        ad::Var term = g.reduce_mean(col_max);  // (1/w) sum_j
        acc = s == 0 ? term : g.add(acc, term);
    }
    return g.scalar_mul(acc, -1.0 / static_cast<double>(pairs.size()));
}

inline ad::Var total_loss_on(ad::Graph& g, ad::Var intra, ad::Var cross, double alpha) {
    return g.add(intra, g.scalar_mul(cross, alpha));
}

// ---- value-level wrappers (inference/tests) ---------------------------------

inline double cross_modal_loss(const PatchEmbeddingSet& c_set, const PatchEmbeddingSet& p_set,
                               const CorrespondenceMatrix& z, double t_g, double b_g) {
    ad::Graph g;
    ad::Var loss = cross_modal_loss_on(g, g.constant(c_set.embeddings), g.constant(p_set.embeddings), z,
                                       g.scalar_const(t_g), g.scalar_const(b_g));
    return g.value(loss).data[0];
}

// Identity-matched two-view correspondence: z = +1 exactly on the diagonal.
inline CorrespondenceMatrix two_view_correspondence(std::int64_t n) {
    std::vector<std::int8_t> z(static_cast<std::size_t>(n * n), -1);
    for (std::int64_t i = 0; i < n; ++i) z[static_cast<std::size_t>(i * n + i)] = 1;
    return CorrespondenceMatrix::from_sign_matrix(n, n, std::move(z));
}

struct ViewPair {
    const PatchEmbeddingSet* view_a;
    const PatchEmbeddingSet* view_b;
    const CorrespondenceMatrix* z;
};

inline double intra_modal_loss(const std::vector<ViewPair>& batch, double t_l, double b_l) {
    ad::Graph g;
    std::vector<CorrespondenceMatrix> defaults;
    defaults.reserve(batch.size());
    std::vector<BoundViewPair> bound;
    for (const auto& vp : batch) {
        const CorrespondenceMatrix* z = vp.z;
        if (z == nullptr) {
            defaults.push_back(two_view_correspondence(vp.view_a->num_patches()));
            z = &defaults.back();
        }
        bound.push_back({g.constant(vp.view_a->embeddings), g.constant(vp.view_b->embeddings), z});
    }
    ad::Var loss = intra_modal_loss_on(g, bound, g.scalar_const(t_l), g.scalar_const(b_l));
    return g.value(loss).data[0];
}

inline double total_loss(double intra, double cross, double alpha) { return intra + alpha * cross; }

}  // namespace dentalign
