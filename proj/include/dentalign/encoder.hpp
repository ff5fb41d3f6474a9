#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dentalign/checkpoint.hpp"
#include "dentalign/graph.hpp"
#include "dentalign/pointcloud.hpp"
#include "dentalign/rng.hpp"
#include "dentalign/tokenize.hpp"

namespace dentalign {

enum class Modality { kVoxel, kPoint };

inline const char* modality_name(Modality m) { return m == Modality::kVoxel ? "voxel" : "point"; }

// Toy stand-in for the full-scale encoders: linear token projection, additive
// sinusoidal position encoding of the physical patch centers, then
// pre-norm single-head attention blocks, then L2 row normalization. Both
// modalities share the hidden width so their embeddings live in one space.
struct EncoderArch {
    std::int64_t token_width = 0;
    std::int64_t hidden = 64;
    std::int64_t num_blocks = 2;
    std::int64_t ff_hidden = 128;
};

using VarMap = std::map<std::string, ad::Var>;

// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init, layer norms at identity
inline NamedTensors init_encoder_params(const EncoderArch& arch, Rng& rng, const std::string& prefix) {
    NamedTensors p;
    auto mat = [&](std::int64_t rows, std::int64_t cols) {
        return ad::Tensor::uniform({rows, cols}, 1.0 / std::sqrt(static_cast<double>(rows)), rng, true);
    };
    auto vec = [&](std::int64_t n, double v) {
        auto t = ad::Tensor::full({n}, v, true);
        return t;
    };
    p[prefix + "proj_w"] = mat(arch.token_width, arch.hidden);
    p[prefix + "proj_b"] = vec(arch.hidden, 0.0);
    for (std::int64_t b = 0; b < arch.num_blocks; ++b) {
        const std::string bp = prefix + "b" + std::to_string(b) + ".";
        p[bp + "ln1_g"] = vec(arch.hidden, 1.0);
        p[bp + "ln1_b"] = vec(arch.hidden, 0.0);
        p[bp + "wq"] = mat(arch.hidden, arch.hidden);
        p[bp + "wk"] = mat(arch.hidden, arch.hidden);
        p[bp + "wv"] = mat(arch.hidden, arch.hidden);
        p[bp + "wo"] = mat(arch.hidden, arch.hidden);
        p[bp + "ln2_g"] = vec(arch.hidden, 1.0);
        p[bp + "ln2_b"] = vec(arch.hidden, 0.0);
        p[bp + "ff1_w"] = mat(arch.hidden, arch.ff_hidden);
        p[bp + "ff1_b"] = vec(arch.ff_hidden, 0.0);
        p[bp + "ff2_w"] = mat(arch.ff_hidden, arch.hidden);
        p[bp + "ff2_b"] = vec(arch.hidden, 0.0);
    }
    return p;
}

inline VarMap bind_params(ad::Graph& g, const NamedTensors& params) {
    VarMap vars;
    for (const auto& [name, t] : params) vars.emplace(name, g.leaf(t));
    return vars;
}

// Sinusoidal encoding of physical centers; wavelengths sweep 4mm..256mm so
// nearby patches differ in the fine dims and distant ones in the coarse dims.
inline ad::Tensor position_encoding(const std::vector<Vec3>& centers, std::int64_t hidden) {
    const auto n = static_cast<std::int64_t>(centers.size());
    ad::Tensor pe = ad::Tensor::zeros({n, hidden});
    const std::int64_t levels = (hidden + 2) / 3;
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t d = 0; d < hidden; ++d) {
            const auto coord = centers[static_cast<std::size_t>(i)][static_cast<std::size_t>(d % 3)];
            const std::int64_t level = d / 3;
            const double frac = levels > 1 ? static_cast<double>(level) / static_cast<double>(levels - 1) : 0.0;
            const double wavelength = 4.0 * std::pow(64.0, frac);
            const double phase = 2.0 * M_PI * coord / wavelength;
            pe.at2(i, d) = (level % 2 == 0) ? std::sin(phase) : std::cos(phase);
        }
    }
    return pe;
}

namespace detail {

// bias row-broadcast via ones(n,1) * b(1,h)
inline ad::Var add_bias_rows(ad::Graph& g, ad::Var x, ad::Var bias_vec, std::int64_t rows) {
    const auto h = g.value(bias_vec).numel();
    ad::Var ones = g.constant(ad::Tensor::full({rows, 1}, 1.0));
    return g.add(x, g.matmul(ones, g.reshape(bias_vec, {1, h})));
}

}  // namespace detail

inline ad::Var encode_tokens(ad::Graph& g, const EncoderArch& arch, const VarMap& vars,
                             const std::string& prefix, const ad::Tensor& tokens,
                             const std::vector<Vec3>& centers) {
    if (tokens.rank() != 2 || tokens.shape[1] != arch.token_width) {
        throw ShapeError("encoder " + prefix + " expects token width " + std::to_string(arch.token_width) +
                         ", got " + ad::shape_str(tokens.shape));
    }
    if (static_cast<std::int64_t>(centers.size()) != tokens.shape[0]) {
        throw ShapeError("token/center count mismatch in encoder " + prefix);
    }
    const auto n = tokens.shape[0];
    auto at = [&](const std::string& key) -> ad::Var {
        auto it = vars.find(prefix + key);
        if (it == vars.end()) throw ContractError("missing encoder parameter " + prefix + key);
        return it->second;
    };

    ad::Var x = g.constant(tokens);
    ad::Var h = detail::add_bias_rows(g, g.matmul(x, at("proj_w")), at("proj_b"), n);
    h = g.add(h, g.constant(position_encoding(centers, arch.hidden)));

    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(arch.hidden));
    for (std::int64_t b = 0; b < arch.num_blocks; ++b) {
        const std::string bp = "b" + std::to_string(b) + ".";
        ad::Var y = g.layer_norm(h, at(bp + "ln1_g"), at(bp + "ln1_b"));
        ad::Var q = g.matmul(y, at(bp + "wq"));
        ad::Var k = g.matmul(y, at(bp + "wk"));
        ad::Var v = g.matmul(y, at(bp + "wv"));
        ad::Var scores = g.softmax_lastdim(g.scalar_mul(g.matmul(q, g.transpose(k)), attn_scale));
        ad::Var attn = g.matmul(g.matmul(scores, v), at(bp + "wo"));
        h = g.add(h, attn);

        ad::Var z = g.layer_norm(h, at(bp + "ln2_g"), at(bp + "ln2_b"));
        ad::Var f1 = g.relu(detail::add_bias_rows(g, g.matmul(z, at(bp + "ff1_w")), at(bp + "ff1_b"), n));
        ad::Var f2 = detail::add_bias_rows(g, g.matmul(f1, at(bp + "ff2_w")), at(bp + "ff2_b"), n);
        h = g.add(h, f2);
    }
    return g.l2_normalize_lastdim(h);
}

// Patch embeddings with their physical centers; rows are unit-norm.
struct PatchEmbeddingSet {
    ad::Tensor embeddings;  // (num_patches, hidden)
    Modality modality = Modality::kVoxel;
    std::vector<Vec3> patch_centers;
    std::string sample_id;
    bool normalized = true;

    std::int64_t num_patches() const { return embeddings.shape.empty() ? 0 : embeddings.shape[0]; }

    void validate() const {
        if (embeddings.rank() != 2) throw ShapeError("embedding matrix must be rank 2");
        if (static_cast<std::int64_t>(patch_centers.size()) != embeddings.shape[0]) {
            throw ShapeError("patch center count mismatch");
        }
        if (normalized) {
            const auto h = embeddings.shape[1];
            for (std::int64_t i = 0; i < embeddings.shape[0]; ++i) {
                double s = 0;
                for (std::int64_t j = 0; j < h; ++j) s += embeddings.at2(i, j) * embeddings.at2(i, j);
                if (std::abs(std::sqrt(s) - 1.0) > 1e-9) {
                    throw ContractError("row " + std::to_string(i) + " is not unit norm");
                }
            }
        }
    }
};

inline PatchEmbeddingSet encode(const EncoderArch& arch, const NamedTensors& params,
                                const std::string& prefix, const VolumeTokens& tokens,
                                const std::string& sample_id = "") {
    ad::Graph g;
    VarMap vars = bind_params(g, params);
    ad::Var out = encode_tokens(g, arch, vars, prefix, tokens.blocks, tokens.centers);
    return PatchEmbeddingSet{g.value(out), Modality::kVoxel, tokens.centers, sample_id, true};
}

inline PatchEmbeddingSet encode(const EncoderArch& arch, const NamedTensors& params,
                                const std::string& prefix, const CloudTokens& tokens,
                                const std::string& sample_id = "") {
    ad::Graph g;
    VarMap vars = bind_params(g, params);
    ad::Var out = encode_tokens(g, arch, vars, prefix, tokens.blocks, tokens.centers);
    return PatchEmbeddingSet{g.value(out), Modality::kPoint, tokens.centers, sample_id, true};
}

}  // namespace dentalign
