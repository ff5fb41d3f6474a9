#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dentalign/contrastive.hpp"
#include "dentalign/preprocess.hpp"
#include "dentalign/tokenize.hpp"

namespace dentalign {

// Dataset generation settings consumed by the gen-data stage.
struct DataConfig {
    std::int64_t pretrain_samples = 64;
    std::int64_t finetune_train = 12;
    std::int64_t finetune_val = 4;
    std::array<std::int64_t, 3> dims{64, 64, 64};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::int64_t cloud_points = 2048;
    std::int64_t surface_samples_per_tooth = 200;
    std::int64_t gum_samples = 700;
    double noise_level_hu = 25.0;
    double metal_probability = 0.15;
    std::int64_t min_teeth = 8;
    std::int64_t max_teeth = 20;
    double tooth_scale = 1.0;   // scales the superellipsoid radii
    bool spaced_teeth = false;  // draw only alternating FDI positions per sample
    bool single_arch = false;   // one randomly chosen arch per sample
};

struct StageConfig {
    std::int64_t epochs = 50;
    std::int64_t batch_size = 4;
    double lr = 1e-4;
    double weight_decay = 1e-5;
    double warmup_fraction = 0.05;
    double min_lr_fraction = 0.01;
};

// One JSON document drives every stage; every field has a schema-checked
// default. Unknown keys are rejected.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string manifest;
    std::string out_dir = ".";

    std::int64_t hidden = 64;
    std::int64_t num_blocks = 2;
    std::int64_t ff_hidden = 128;
    Tokenization tok;

    StageConfig pretrain{50, 4, 1e-4, 1e-5, 0.05, 0.01};
    StageConfig finetune{150, 1, 3e-4, 1e-5, 0.05, 0.01};
    double alpha = 1.0;
    ContrastiveInit contrastive;

    VolumeAugmentConfig volume_aug;
    CloudAugmentConfig cloud_aug;

    double clip_lo = 0.0;
    double clip_hi = 2500.0;
    bool roi_crop_enabled = false;  // threshold-plus-bounding-box crop surrogate
    double roi_threshold = 0.3;

    double background_weight = 1.0;  // CE class weight for the background class

    std::string init_mode = "pretrained";  // pretrained | scratch
    std::string modality = "voxel";        // voxel | point
    std::string init_checkpoint;

    DataConfig data;
    std::vector<std::uint64_t> ablate_seeds{1, 2, 3};
    std::vector<double> ablate_fractions{0.0, 0.25, 0.5, 0.75, 1.0};
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                       const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void get_field(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad value for '" + std::string(key) + "' in " + where + ": " + e.what());
    }
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    RunConfig cfg;
    detail::check_keys(j, {"seed", "manifest", "out_dir", "encoder", "tokenization", "pretrain",
                           "finetune", "alpha", "contrastive", "augment", "preprocess", "data",
                           "ablate"},
                       "config");
    detail::get_field(j, "seed", cfg.seed, "config");
    detail::get_field(j, "manifest", cfg.manifest, "config");
    detail::get_field(j, "out_dir", cfg.out_dir, "config");
    detail::get_field(j, "alpha", cfg.alpha, "config");

    if (j.contains("encoder")) {
        const auto& e = j.at("encoder");
        detail::check_keys(e, {"hidden", "blocks", "ff_hidden"}, "encoder");
        detail::get_field(e, "hidden", cfg.hidden, "encoder");
        detail::get_field(e, "blocks", cfg.num_blocks, "encoder");
        detail::get_field(e, "ff_hidden", cfg.ff_hidden, "encoder");
        if (cfg.hidden < 3 || cfg.num_blocks < 1 || cfg.ff_hidden < 1) {
            throw ConfigError("encoder sizes must be positive (hidden >= 3)");
        }
    }
    if (j.contains("tokenization")) {
        const auto& t = j.at("tokenization");
        detail::check_keys(t, {"patch_edge", "centroids", "neighbors"}, "tokenization");
        detail::get_field(t, "patch_edge", cfg.tok.patch_edge, "tokenization");
        detail::get_field(t, "centroids", cfg.tok.num_centroids, "tokenization");
        detail::get_field(t, "neighbors", cfg.tok.neighbors, "tokenization");
        if (cfg.tok.patch_edge < 1 || cfg.tok.num_centroids < 1 || cfg.tok.neighbors < 1) {
            throw ConfigError("tokenization sizes must be positive");
        }
    }
    auto parse_stage = [](const nlohmann::json& s, StageConfig& out, const std::string& where) {
        detail::check_keys(s, {"epochs", "batch_size", "lr", "weight_decay", "warmup_fraction",
                               "min_lr_fraction", "init", "modality", "checkpoint",
                               "background_weight"},
                           where);
        detail::get_field(s, "epochs", out.epochs, where);
        detail::get_field(s, "batch_size", out.batch_size, where);
        detail::get_field(s, "lr", out.lr, where);
        detail::get_field(s, "weight_decay", out.weight_decay, where);
        detail::get_field(s, "warmup_fraction", out.warmup_fraction, where);
        detail::get_field(s, "min_lr_fraction", out.min_lr_fraction, where);
        if (out.epochs < 0 || out.batch_size < 1 || out.lr < 0 || out.weight_decay < 0) {
            throw ConfigError("invalid optimization values in " + where);
        }
        if (out.warmup_fraction < 0 || out.warmup_fraction >= 1 || out.min_lr_fraction < 0 ||
            out.min_lr_fraction > 1) {
            throw ConfigError("fractions out of range in " + where);
        }
    };
    if (j.contains("pretrain")) parse_stage(j.at("pretrain"), cfg.pretrain, "pretrain");
    if (j.contains("finetune")) {
        parse_stage(j.at("finetune"), cfg.finetune, "finetune");
        detail::get_field(j.at("finetune"), "init", cfg.init_mode, "finetune");
        detail::get_field(j.at("finetune"), "modality", cfg.modality, "finetune");
        detail::get_field(j.at("finetune"), "checkpoint", cfg.init_checkpoint, "finetune");
        detail::get_field(j.at("finetune"), "background_weight", cfg.background_weight, "finetune");
        if (cfg.background_weight < 0) throw ConfigError("background_weight must be non-negative");
    }
    if (cfg.init_mode != "pretrained" && cfg.init_mode != "scratch") {
        throw ConfigError("finetune.init must be 'pretrained' or 'scratch'");
    }
    if (cfg.modality != "voxel" && cfg.modality != "point") {
        throw ConfigError("finetune.modality must be 'voxel' or 'point'");
    }

    if (j.contains("contrastive")) {
        const auto& c = j.at("contrastive");
        detail::check_keys(c, {"t_g", "b_g", "t_l", "b_l"}, "contrastive");
        detail::get_field(c, "t_g", cfg.contrastive.t_g, "contrastive");
        detail::get_field(c, "b_g", cfg.contrastive.b_g, "contrastive");
        detail::get_field(c, "t_l", cfg.contrastive.t_l, "contrastive");
        detail::get_field(c, "b_l", cfg.contrastive.b_l, "contrastive");
        if (cfg.contrastive.t_g <= 0 || cfg.contrastive.t_l <= 0) {
            throw ConfigError("logit scales must be positive");
        }
    }

    if (j.contains("augment")) {
        const auto& a = j.at("augment");
        detail::check_keys(a, {"volume", "cloud"}, "augment");
        if (a.contains("volume")) {
            const auto& v = a.at("volume");
            detail::check_keys(v, {"crop", "rotation", "noise_sigma", "intensity_shift"}, "augment.volume");
            detail::get_field(v, "crop", cfg.volume_aug.crop_dims, "augment.volume");
            detail::get_field(v, "rotation", cfg.volume_aug.max_rotation_rad, "augment.volume");
            detail::get_field(v, "noise_sigma", cfg.volume_aug.noise_sigma, "augment.volume");
            detail::get_field(v, "intensity_shift", cfg.volume_aug.max_intensity_shift, "augment.volume");
            cfg.volume_aug.validate();
        }
        if (a.contains("cloud")) {
            const auto& c = a.at("cloud");
            detail::check_keys(c, {"rotation", "shift", "scale_min", "scale_max"}, "augment.cloud");
            detail::get_field(c, "rotation", cfg.cloud_aug.max_rotation_rad, "augment.cloud");
            detail::get_field(c, "shift", cfg.cloud_aug.max_shift_mm, "augment.cloud");
            detail::get_field(c, "scale_min", cfg.cloud_aug.min_scale, "augment.cloud");
            detail::get_field(c, "scale_max", cfg.cloud_aug.max_scale, "augment.cloud");
            cfg.cloud_aug.validate();
        }
    }

    if (j.contains("preprocess")) {
        const auto& p = j.at("preprocess");
        detail::check_keys(p, {"clip_lo", "clip_hi", "roi_crop", "roi_threshold"}, "preprocess");
        detail::get_field(p, "clip_lo", cfg.clip_lo, "preprocess");
        detail::get_field(p, "clip_hi", cfg.clip_hi, "preprocess");
        detail::get_field(p, "roi_crop", cfg.roi_crop_enabled, "preprocess");
        detail::get_field(p, "roi_threshold", cfg.roi_threshold, "preprocess");
        if (cfg.clip_lo >= cfg.clip_hi) throw ConfigError("preprocess requires clip_lo < clip_hi");
        if (cfg.roi_threshold < 0 || cfg.roi_threshold >= 1) {
            throw ConfigError("preprocess.roi_threshold must lie in [0, 1)");
        }
    }

    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::check_keys(d, {"pretrain_samples", "finetune_train", "finetune_val", "dims", "spacing",
                               "cloud_points", "surface_samples_per_tooth", "gum_samples",
                               "noise_level_hu", "metal_probability", "min_teeth", "max_teeth",
                               "tooth_scale", "spaced_teeth", "single_arch"},
                           "data");
        detail::get_field(d, "pretrain_samples", cfg.data.pretrain_samples, "data");
        detail::get_field(d, "finetune_train", cfg.data.finetune_train, "data");
        detail::get_field(d, "finetune_val", cfg.data.finetune_val, "data");
        detail::get_field(d, "dims", cfg.data.dims, "data");
        detail::get_field(d, "spacing", cfg.data.spacing, "data");
        detail::get_field(d, "cloud_points", cfg.data.cloud_points, "data");
        detail::get_field(d, "surface_samples_per_tooth", cfg.data.surface_samples_per_tooth, "data");
        detail::get_field(d, "gum_samples", cfg.data.gum_samples, "data");
        detail::get_field(d, "noise_level_hu", cfg.data.noise_level_hu, "data");
        detail::get_field(d, "metal_probability", cfg.data.metal_probability, "data");
        detail::get_field(d, "min_teeth", cfg.data.min_teeth, "data");
        detail::get_field(d, "max_teeth", cfg.data.max_teeth, "data");
        detail::get_field(d, "tooth_scale", cfg.data.tooth_scale, "data");
        detail::get_field(d, "spaced_teeth", cfg.data.spaced_teeth, "data");
        detail::get_field(d, "single_arch", cfg.data.single_arch, "data");
        if (cfg.data.tooth_scale <= 0) throw ConfigError("data.tooth_scale must be positive");
        for (auto v : cfg.data.dims) {
            if (v < 1) throw ConfigError("data.dims must be positive");
        }
        for (auto v : cfg.data.spacing) {
            if (v <= 0) throw ConfigError("data.spacing must be positive");
        }
        if (cfg.data.min_teeth < 0 || cfg.data.max_teeth > 32 || cfg.data.min_teeth > cfg.data.max_teeth) {
            throw ConfigError("data tooth-count bounds invalid");
        }
        if (cfg.data.metal_probability < 0 || cfg.data.metal_probability > 1) {
            throw ConfigError("data.metal_probability outside [0,1]");
        }
    }

    if (j.contains("ablate")) {
        const auto& a = j.at("ablate");
        detail::check_keys(a, {"seeds", "fractions"}, "ablate");
        detail::get_field(a, "seeds", cfg.ablate_seeds, "ablate");
        detail::get_field(a, "fractions", cfg.ablate_fractions, "ablate");
        if (cfg.ablate_seeds.empty()) throw ConfigError("ablate.seeds must not be empty");
        for (double f : cfg.ablate_fractions) {
            if (f < 0 || f > 1) throw ConfigError("ablate fractions must lie in [0,1]");
        }
    }
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    RunConfig cfg = parse_run_config(j);
    if (!cfg.manifest.empty()) {
        std::filesystem::path m(cfg.manifest);
        if (m.is_relative()) m = std::filesystem::path(path).parent_path() / m;
        cfg.manifest = m.string();
    }
    return cfg;
}

// Stages that consume data call this; gen-data creates the manifest instead.
inline void require_manifest(const RunConfig& cfg) {
    if (cfg.manifest.empty()) throw ConfigError("config is missing the manifest path");
    if (!std::filesystem::exists(cfg.manifest)) {
        throw ConfigError("manifest path does not exist: " + cfg.manifest);
    }
}

}  // namespace dentalign
