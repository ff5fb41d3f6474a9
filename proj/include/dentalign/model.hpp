#pragma once

#include <cstdint>
#include <string>

#include "dentalign/checkpoint.hpp"
#include "dentalign/config.hpp"
#include "dentalign/contrastive.hpp"
#include "dentalign/encoder.hpp"
#include "dentalign/segment.hpp"

namespace dentalign {

// Parameter bundle: both encoders, contrastive scales, and one linear head
// per modality. Heads are always freshly seeded; pretraining only ever hands
// encoder weights forward.
struct Model {
    std::int64_t hidden = 64, num_blocks = 2, ff_hidden = 128;
    Tokenization tok;
    int num_classes = fdi::kNumClasses;
    NamedTensors params;

    EncoderArch vox_arch() const {
        return EncoderArch{tok.patch_edge * tok.patch_edge * tok.patch_edge, hidden, num_blocks, ff_hidden};
    }
    EncoderArch pt_arch() const { return EncoderArch{tok.neighbors * 6, hidden, num_blocks, ff_hidden}; }

    static Model init(const RunConfig& cfg, std::uint64_t seed) {
        Model m;
        m.hidden = cfg.hidden;
        m.num_blocks = cfg.num_blocks;
        m.ff_hidden = cfg.ff_hidden;
        m.tok = cfg.tok;
        Rng rng(seed ^ 0xD15EA5E0DEADBEEFull);
        NamedTensors p = init_encoder_params(m.vox_arch(), rng, "vox.");
        p.merge(init_encoder_params(m.pt_arch(), rng, "pt."));
        p.merge(init_contrastive_params(cfg.contrastive, "con."));
        p.merge(init_head_params(m.hidden, m.num_classes, rng, "head.vox."));
        p.merge(init_head_params(m.hidden, m.num_classes, rng, "head.pt."));
        m.params = std::move(p);
        return m;
    }

    // Checkpoints are self-describing via scalar meta entries.
    NamedTensors with_meta(int modality_tag) const {
        NamedTensors out = params;
        out["meta.hidden"] = ad::Tensor::scalar(static_cast<double>(hidden));
        out["meta.blocks"] = ad::Tensor::scalar(static_cast<double>(num_blocks));
        out["meta.ff_hidden"] = ad::Tensor::scalar(static_cast<double>(ff_hidden));
        out["meta.patch_edge"] = ad::Tensor::scalar(static_cast<double>(tok.patch_edge));
        out["meta.centroids"] = ad::Tensor::scalar(static_cast<double>(tok.num_centroids));
        out["meta.neighbors"] = ad::Tensor::scalar(static_cast<double>(tok.neighbors));
        out["meta.num_classes"] = ad::Tensor::scalar(static_cast<double>(num_classes));
        out["meta.modality"] = ad::Tensor::scalar(static_cast<double>(modality_tag));  // 0 vox, 1 pt, 2 none
        return out;
    }

    void save(const std::string& path, int modality_tag = 2) const {
        save_checkpoint(with_meta(modality_tag), path);
    }
};

inline Model model_from_checkpoint(const std::string& path, int* modality_tag = nullptr) {
    NamedTensors loaded = load_checkpoint(path);
    auto meta = [&](const char* key) {
        auto it = loaded.find(key);
        if (it == loaded.end()) throw CheckpointError(std::string("checkpoint missing ") + key);
        return it->second.data[0];
    };
    Model m;
    m.hidden = static_cast<std::int64_t>(meta("meta.hidden"));
    m.num_blocks = static_cast<std::int64_t>(meta("meta.blocks"));
    m.ff_hidden = static_cast<std::int64_t>(meta("meta.ff_hidden"));
    m.tok.patch_edge = static_cast<std::int64_t>(meta("meta.patch_edge"));
    m.tok.num_centroids = static_cast<std::int64_t>(meta("meta.centroids"));
    m.tok.neighbors = static_cast<std::int64_t>(meta("meta.neighbors"));
    m.num_classes = static_cast<int>(meta("meta.num_classes"));
    if (modality_tag) *modality_tag = static_cast<int>(meta("meta.modality"));
    for (auto& [name, t] : loaded) {
        if (name.rfind("meta.", 0) == 0) continue;
        t.requires_grad = true;
        m.params[name] = std::move(t);
    }
    return m;
}

enum class InitMode { kPretrained, kScratch };

inline InitMode parse_init_mode(const std::string& s) {
    if (s == "pretrained") return InitMode::kPretrained;
    if (s == "scratch") return InitMode::kScratch;
    throw ConfigError("init mode must be 'pretrained' or 'scratch', got '" + s + "'");
}

// Encoder weights come from the checkpoint in pretrained mode; heads (and in
// scratch mode everything) come from the seed.
inline Model init_from_pretrained(const RunConfig& cfg, std::uint64_t seed, InitMode mode,
                                  const std::string& checkpoint_path) {
    Model m = Model::init(cfg, seed);
    if (mode == InitMode::kScratch) return m;
    NamedTensors loaded = load_checkpoint(checkpoint_path);
    NamedTensors encoder_subset;
    for (auto& [name, t] : m.params) {
        if (name.rfind("vox.", 0) == 0 || name.rfind("pt.", 0) == 0) encoder_subset[name] = t;
    }
    apply_checkpoint(encoder_subset, loaded);
    for (auto& [name, t] : encoder_subset) m.params[name] = std::move(t);
    return m;
}

// ---- inference ----------------------------------------------------------------

inline std::vector<std::uint16_t> predict_voxel(const Model& m, const VoxelVolume& normalized) {
    VolumeTokens tok = tokenize_volume(normalized, m.tok.patch_edge);
    ad::Graph g;
    VarMap vars = bind_params(g, m.params);
    ad::Var emb = encode_tokens(g, m.vox_arch(), vars, "vox.", tok.blocks, tok.centers);
    ad::Var logits = head_logits_on(g, vars, "head.vox.", emb);
    return unpool_voxel_mask(patch_argmax_classes(g.value(logits)), tok, normalized.dims);
}

inline std::vector<std::uint16_t> predict_point(const Model& m, const PointCloud& cloud) {
    const auto n = static_cast<std::int64_t>(cloud.size());
    // the token width is fixed by the encoder, so only the centroid count may shrink
    CloudTokens tok = tokenize_cloud(cloud, std::min(m.tok.num_centroids, n), m.tok.neighbors);
    ad::Graph g;
    VarMap vars = bind_params(g, m.params);
    ad::Var emb = encode_tokens(g, m.pt_arch(), vars, "pt.", tok.blocks, tok.centers);
    ad::Var logits = head_logits_on(g, vars, "head.pt.", emb);
    return unpool_point_mask(patch_argmax_classes(g.value(logits)), tok);
}

}  // namespace dentalign
