#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "dentalign/config.hpp"
#include "dentalign/contrastive.hpp"
#include "dentalign/evalstats.hpp"
#include "dentalign/io.hpp"
#include "dentalign/model.hpp"
#include "dentalign/optim.hpp"
#include "dentalign/preprocess.hpp"
#include "dentalign/synthjaw.hpp"

namespace dentalign {

inline int env_thread_count() {
    const char* s = std::getenv("DENTALIGN_THREADS");
    if (!s) return 1;
    const int n = std::atoi(s);
    return n < 1 ? 1 : n;
}

// Data fan-out for generation/evaluation only; training math stays on one
// thread for reproducibility.
template <typename F>
void parallel_for(std::int64_t n, F body) {
    const int threads = std::min<std::int64_t>(env_thread_count(), n);
    if (threads <= 1) {
        for (std::int64_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<std::int64_t> next{0};
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::int64_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

// ---- dataset generation -----------------------------------------------------

inline std::vector<int> draw_tooth_subset(Rng& rng, std::int64_t min_teeth, std::int64_t max_teeth,
                                          bool spaced, bool single_arch) {
    // draw the arch choice first so the stream layout stays fixed
    const bool upper = single_arch && rng.uniform_index(2) == 0;
    const int parity = spaced ? static_cast<int>(rng.uniform_index(2)) : -1;
    std::vector<int> codes;
    for (int code : fdi::all_tooth_codes()) {
        if (single_arch && (code / 10 <= 2) != upper) continue;
        if (spaced) {
            // alternating positions leave room for enlarged desk-scale teeth;
            // the odd pattern skips position 1, whose mirror pair sits on the
            // midline
            const int d = code % 10;
            if (parity == 0 ? d % 2 != 0 : (d % 2 != 1 || d == 1)) continue;
        }
        codes.push_back(code);
    }
    // Fisher-Yates with our deterministic stream
    for (std::size_t i = codes.size(); i > 1; --i) {
        const auto j = rng.uniform_index(i);
        std::swap(codes[i - 1], codes[static_cast<std::size_t>(j)]);
    }
    const auto hi = std::min<std::int64_t>(max_teeth, static_cast<std::int64_t>(codes.size()));
    const auto lo = std::min<std::int64_t>(min_teeth, hi);
    const auto count = lo + static_cast<std::int64_t>(rng.uniform_index(
                                static_cast<std::uint64_t>(hi - lo + 1)));
    codes.resize(static_cast<std::size_t>(count));
    std::sort(codes.begin(), codes.end());
    return codes;
}

inline std::string generate_dataset(const RunConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    Rng rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);

    GeneratorConfig gen;
    gen.dims = cfg.data.dims;
    gen.spacing = cfg.data.spacing;
    gen.cloud_points = cfg.data.cloud_points;
    gen.surface_samples_per_tooth = cfg.data.surface_samples_per_tooth;
    gen.gum_samples = cfg.data.gum_samples;
    gen.tokenization = cfg.tok;

    struct Planned {
        std::string id, role;
        JawSpec spec;
    };
    std::vector<Planned> plan;
    auto add = [&](std::int64_t n, const char* role, char tag) {
        for (std::int64_t i = 0; i < n; ++i) {
            Planned p;
            char buf[32];
            std::snprintf(buf, sizeof buf, "%c%04lld", tag, static_cast<long long>(i));
            p.id = buf;
            p.role = role;
            p.spec.seed = rng.next_u64();
            p.spec.teeth_present = draw_tooth_subset(rng, cfg.data.min_teeth, cfg.data.max_teeth,
                                                     cfg.data.spaced_teeth, cfg.data.single_arch);
            if (cfg.data.tooth_scale != 1.0) {
                for (auto& [group, size] : p.spec.tooth_size_table) {
                    size.rx *= cfg.data.tooth_scale;
                    size.ry *= cfg.data.tooth_scale;
                    size.rz *= cfg.data.tooth_scale;
                }
            }
            p.spec.noise_level = cfg.data.noise_level_hu;
            p.spec.metal_artifact = rng.uniform() < cfg.data.metal_probability;
            plan.push_back(std::move(p));
        }
    };
    add(cfg.data.pretrain_samples, "pretrain", 'p');
    add(cfg.data.finetune_train, "train", 't');
    add(cfg.data.finetune_val, "val", 'v');

    Manifest manifest;
    for (const auto& p : plan) {
        manifest.samples.push_back({p.id, p.id + ".vol", p.id + ".ply", p.spec.seed, p.role});
    }

    parallel_for(static_cast<std::int64_t>(plan.size()), [&](std::int64_t i) {
        const auto& p = plan[static_cast<std::size_t>(i)];
        PairedSample s = generate(p.spec, gen);
        write_volume(s.volume, (std::filesystem::path(out_dir) / (p.id + ".vol")).string());
        write_cloud(s.cloud, (std::filesystem::path(out_dir) / (p.id + ".ply")).string());
    });

    const std::string manifest_path = (std::filesystem::path(out_dir) / "manifest.json").string();
    write_manifest(manifest, manifest_path);
    return manifest_path;
}

// ---- sample loading -----------------------------------------------------------

struct Sample {
    std::string id;
    VoxelVolume volume;  // reoriented to RAS and intensity-normalized
    PointCloud cloud;
};

inline std::vector<Sample> load_samples(const RunConfig& cfg, const std::string& role) {
    require_manifest(cfg);
    Manifest manifest = read_manifest(cfg.manifest);
    std::vector<const ManifestEntry*> picked;
    for (const auto& e : manifest.samples) {
        if (e.role == role) picked.push_back(&e);
    }
    std::vector<Sample> out(picked.size());
    parallel_for(static_cast<std::int64_t>(picked.size()), [&](std::int64_t i) {
        const auto& e = *picked[static_cast<std::size_t>(i)];
        Sample s;
        s.id = e.id;
        s.volume = clip_normalize(reorient_to_ras(read_volume(manifest.resolve(e.volume_path))),
                                  cfg.clip_lo, cfg.clip_hi);
        if (cfg.roi_crop_enabled) s.volume = roi_crop(s.volume, cfg.roi_threshold);
        s.cloud = read_cloud(manifest.resolve(e.cloud_path));
        out[static_cast<std::size_t>(i)] = std::move(s);
    });
    return out;
}

// ---- correspondence helpers on live (possibly augmented) samples ---------------

inline std::vector<std::vector<int>> volume_patch_codes_from_labels(const VoxelVolume& v,
                                                                    const VolumeTokens& tok) {
    std::vector<std::vector<int>> codes(static_cast<std::size_t>(tok.blocks.shape[0]));
    if (!v.labels) return codes;
    for (std::int64_t i = 0; i < v.dims[0]; ++i)
        for (std::int64_t j = 0; j < v.dims[1]; ++j)
            for (std::int64_t k = 0; k < v.dims[2]; ++k) {
                const auto lab = v.label_at(i, j, k);
                if (!fdi::is_tooth_code(lab)) continue;
                auto& c = codes[static_cast<std::size_t>(
                    volume_patch_of_voxel(tok.grid, tok.patch_edge, i, j, k))];
                if (std::find(c.begin(), c.end(), lab) == c.end()) c.push_back(lab);
            }
    return codes;
}

inline std::vector<std::vector<int>> cloud_patch_codes_from_labels(const PointCloud& pc,
                                                                   const CloudTokens& tok) {
    std::vector<std::vector<int>> codes(tok.members.size());
    if (!pc.labels) return codes;
    for (std::size_t p = 0; p < tok.members.size(); ++p) {
        for (auto idx : tok.members[p]) {
            const auto lab = (*pc.labels)[static_cast<std::size_t>(idx)];
            if (!fdi::is_tooth_code(lab)) continue;
            auto& c = codes[p];
            if (std::find(c.begin(), c.end(), lab) == c.end()) c.push_back(lab);
        }
    }
    return codes;
}

// ---- pretraining ---------------------------------------------------------------

struct PretrainOutput {
    std::string checkpoint_path;
    std::string trace_path;
    std::int64_t steps = 0;
    std::int64_t skipped_batches = 0;
};

inline PretrainOutput pretrain(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    std::vector<Sample> samples = load_samples(cfg, "pretrain");
    if (samples.empty()) throw DataError("manifest has no pretrain samples");

    Model model = Model::init(cfg, cfg.seed);
    OptimState opt;
    opt.cfg.weight_decay = cfg.pretrain.weight_decay;

    const auto n = static_cast<std::int64_t>(samples.size());
    const std::int64_t steps_per_epoch = (n + cfg.pretrain.batch_size - 1) / cfg.pretrain.batch_size;
    const std::int64_t total_steps = cfg.pretrain.epochs * steps_per_epoch;

    ScheduleConfig sched;
    sched.total_steps = std::max<std::int64_t>(total_steps, 1);
    sched.warmup_steps = std::min<std::int64_t>(
        static_cast<std::int64_t>(std::llround(cfg.pretrain.warmup_fraction * static_cast<double>(total_steps))),
        sched.total_steps - 1);
    sched.base_lr = cfg.pretrain.lr;
    sched.min_lr = cfg.pretrain.lr * cfg.pretrain.min_lr_fraction;

    PretrainOutput out;
    out.trace_path = (std::filesystem::path(cfg.out_dir) / "pretrain_trace.csv").string();
    std::ofstream trace(out.trace_path);
    trace << "step,lr,intra,cross,total\n";

    Rng order_rng(cfg.seed ^ 0xC0FFEE0000000001ull);
    Rng aug_rng(cfg.seed ^ 0xC0FFEE0000000002ull);

    std::vector<std::int64_t> indices(static_cast<std::size_t>(n));
    std::iota(indices.begin(), indices.end(), 0);
    std::int64_t step = 0;

    for (std::int64_t epoch = 0; epoch < cfg.pretrain.epochs; ++epoch) {
        for (std::size_t i = indices.size(); i > 1; --i) {
            const auto j = order_rng.uniform_index(i);
            std::swap(indices[i - 1], indices[static_cast<std::size_t>(j)]);
        }
        for (std::int64_t b = 0; b < n; b += cfg.pretrain.batch_size) {
            const auto batch_end = std::min(n, b + cfg.pretrain.batch_size);

            ad::Graph g;
            VarMap vars = bind_params(g, model.params);
            BoundContrastive con = bind_contrastive(g, vars, "con.");

            std::deque<CorrespondenceMatrix> z_store;
            std::vector<BoundViewPair> intra_pairs;
            ad::Var pooled_c, pooled_p;
            std::vector<std::vector<int>> vox_codes, pt_codes;
            bool first = true;

            try {
                for (std::int64_t s = b; s < batch_end; ++s) {
                    const Sample& sample = samples[static_cast<std::size_t>(indices[static_cast<std::size_t>(s)])];

                    VoxelVolume v1 = augment_volume(sample.volume, cfg.volume_aug, aug_rng.fork(1));
                    VoxelVolume v2 = augment_volume(sample.volume, cfg.volume_aug, aug_rng.fork(2));
                    PointCloud q1 = augment_pointcloud(sample.cloud, cfg.cloud_aug, aug_rng.fork(3));
                    PointCloud q2 = augment_pointcloud(sample.cloud, cfg.cloud_aug, aug_rng.fork(4));

                    VolumeTokens vt1 = tokenize_volume(v1, cfg.tok.patch_edge);
                    VolumeTokens vt2 = tokenize_volume(v2, cfg.tok.patch_edge);
                    CloudTokens ct1 = tokenize_cloud(q1, cfg.tok.num_centroids, cfg.tok.neighbors);
                    CloudTokens ct2 = tokenize_cloud(q2, cfg.tok.num_centroids, cfg.tok.neighbors);

                    ad::Var ev1 = encode_tokens(g, model.vox_arch(), vars, "vox.", vt1.blocks, vt1.centers);
                    ad::Var ev2 = encode_tokens(g, model.vox_arch(), vars, "vox.", vt2.blocks, vt2.centers);
                    ad::Var eq1 = encode_tokens(g, model.pt_arch(), vars, "pt.", ct1.blocks, ct1.centers);
                    ad::Var eq2 = encode_tokens(g, model.pt_arch(), vars, "pt.", ct2.blocks, ct2.centers);

                    z_store.push_back(two_view_correspondence(vt1.blocks.shape[0]));
                    intra_pairs.push_back({ev1, ev2, &z_store.back()});
                    z_store.push_back(two_view_correspondence(static_cast<std::int64_t>(ct1.centers.size())));
                    intra_pairs.push_back({eq1, eq2, &z_store.back()});

                    pooled_c = first ? ev1 : g.concat(pooled_c, ev1, 0);
                    pooled_p = first ? eq1 : g.concat(pooled_p, eq1, 0);
                    first = false;

                    auto vc = volume_patch_codes_from_labels(v1, vt1);
                    auto pc = cloud_patch_codes_from_labels(q1, ct1);
                    vox_codes.insert(vox_codes.end(), vc.begin(), vc.end());
                    pt_codes.insert(pt_codes.end(), pc.begin(), pc.end());
                }

                CorrespondenceMatrix cross_z = correspondence_from_codes(vox_codes, pt_codes);
                ad::Var cross = cross_modal_loss_on(g, pooled_c, pooled_p, cross_z, con.t_g, con.b_g);
                ad::Var intra = intra_modal_loss_on(g, intra_pairs, con.t_l, con.b_l);
                ad::Var total = total_loss_on(g, intra, cross, cfg.alpha);

                ad::GradientMap grads = g.backward(total);
                NamedGrads named;
                for (const auto& [name, var] : vars) {
                    if (grads.contains(var)) named.emplace(name, grads.at(var));
                }
                const double lr = cosine_warmup_lr(step, sched);
                adamw_step(model.params, named, opt, lr);

                trace << step << "," << detail::fmt_double(lr) << ","
                      << detail::fmt_double(g.value(intra).data[0]) << ","
                      << detail::fmt_double(g.value(cross).data[0]) << ","
                      << detail::fmt_double(g.value(total).data[0]) << "\n";
            } catch (const DegenerateBatchError& e) {
                ++out.skipped_batches;
                std::cerr << "pretrain: skipping batch at step " << step << ": " << e.what() << "\n";
            }
            ++step;
        }
    }
    out.steps = step;

    out.checkpoint_path = (std::filesystem::path(cfg.out_dir) / "pretrain_checkpoint.bin").string();
    model.save(out.checkpoint_path, 2);
    return out;
}

// ---- evaluation ----------------------------------------------------------------

inline CaseDice case_dice(const std::vector<std::uint16_t>& pred, const std::vector<std::uint16_t>& gt) {
    CaseDice out;
    for (int code : fdi::all_tooth_codes()) out[code] = dice(pred, gt, code);
    return out;
}

// Pooled mean DSC over all non-absent (case, tooth-code) values, in [0,1].
inline double mean_dsc(const std::vector<CaseDice>& cases) {
    double acc = 0;
    std::int64_t n = 0;
    for (const auto& c : cases) {
        for (const auto& [code, value] : c) {
            if (value.has_value()) {
                acc += *value;
                ++n;
            }
        }
    }
    return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

inline std::vector<CaseDice> evaluate_cases(const Model& model, Modality modality,
                                            const std::vector<Sample>& samples) {
    std::vector<CaseDice> cases(samples.size());
    parallel_for(static_cast<std::int64_t>(samples.size()), [&](std::int64_t i) {
        const Sample& s = samples[static_cast<std::size_t>(i)];
        if (modality == Modality::kVoxel) {
            if (!s.volume.labels) throw LabelError("evaluation requires labeled volumes");
            cases[static_cast<std::size_t>(i)] = case_dice(predict_voxel(model, s.volume), *s.volume.labels);
        } else {
            if (!s.cloud.labels) throw LabelError("evaluation requires labeled clouds");
            cases[static_cast<std::size_t>(i)] = case_dice(predict_point(model, s.cloud), *s.cloud.labels);
        }
    });
    return cases;
}

// ---- fine-tuning ----------------------------------------------------------------

struct FinetuneOutput {
    std::string checkpoint_path;
    std::string csv_path;
    double best_dsc = 0;
    std::int64_t best_epoch = -1;
};

inline FinetuneOutput finetune(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    std::vector<Sample> train = load_samples(cfg, "train");
    std::vector<Sample> val = load_samples(cfg, "val");
    if (train.empty()) throw DataError("manifest has no train samples");
    const std::vector<Sample>& eval_set = val.empty() ? train : val;

    const InitMode mode = parse_init_mode(cfg.init_mode);
    if (mode == InitMode::kPretrained && cfg.init_checkpoint.empty()) {
        throw ConfigError("finetune.init=pretrained requires finetune.checkpoint");
    }
    Model model = init_from_pretrained(cfg, cfg.seed, mode, cfg.init_checkpoint);
    const Modality modality = cfg.modality == "voxel" ? Modality::kVoxel : Modality::kPoint;
    const std::string head_prefix = modality == Modality::kVoxel ? "head.vox." : "head.pt.";
    const std::string enc_prefix = modality == Modality::kVoxel ? "vox." : "pt.";

    OptimState opt;
    opt.cfg.weight_decay = cfg.finetune.weight_decay;
    const auto n = static_cast<std::int64_t>(train.size());
    const std::int64_t steps_per_epoch = (n + cfg.finetune.batch_size - 1) / cfg.finetune.batch_size;
    const std::int64_t total_steps = cfg.finetune.epochs * steps_per_epoch;
    ScheduleConfig sched;
    sched.total_steps = std::max<std::int64_t>(total_steps, 1);
    sched.warmup_steps = std::min<std::int64_t>(
        static_cast<std::int64_t>(std::llround(cfg.finetune.warmup_fraction * static_cast<double>(total_steps))),
        sched.total_steps - 1);
    sched.base_lr = cfg.finetune.lr;
    sched.min_lr = cfg.finetune.lr * cfg.finetune.min_lr_fraction;

    FinetuneOutput out;
    const std::string tag = cfg.modality + "_" + cfg.init_mode;
    out.csv_path = (std::filesystem::path(cfg.out_dir) / ("finetune_" + tag + ".csv")).string();
    out.checkpoint_path = (std::filesystem::path(cfg.out_dir) / ("finetune_" + tag + "_best.bin")).string();
    std::ofstream csv(out.csv_path);
    csv << "epoch,mean_loss,val_dsc\n";

    Rng order_rng(cfg.seed ^ 0xF1E57EED00000001ull);
    Rng aug_rng(cfg.seed ^ 0xF1E57EED00000002ull);
    std::vector<std::int64_t> indices(static_cast<std::size_t>(n));
    std::iota(indices.begin(), indices.end(), 0);

    std::vector<double> class_weights;
    if (cfg.background_weight != 1.0) {
        class_weights.assign(static_cast<std::size_t>(model.num_classes), 1.0);
        class_weights[0] = cfg.background_weight;
    }

    NamedTensors best_params = model.params;
    std::int64_t step = 0;

    for (std::int64_t epoch = 0; epoch < cfg.finetune.epochs; ++epoch) {
        for (std::size_t i = indices.size(); i > 1; --i) {
            const auto j = order_rng.uniform_index(i);
            std::swap(indices[i - 1], indices[static_cast<std::size_t>(j)]);
        }
        double loss_acc = 0;
        std::int64_t loss_count = 0;
        for (std::int64_t b = 0; b < n; b += cfg.finetune.batch_size) {
            const auto batch_end = std::min(n, b + cfg.finetune.batch_size);
            ad::Graph g;
            VarMap vars = bind_params(g, model.params);
            ad::Var batch_loss;
            bool first = true;
            for (std::int64_t s = b; s < batch_end; ++s) {
                const Sample& sample = train[static_cast<std::size_t>(indices[static_cast<std::size_t>(s)])];
                ad::Var loss;
                if (modality == Modality::kVoxel) {
                    VoxelVolume v = augment_volume(sample.volume, cfg.volume_aug, aug_rng.fork(1));
                    VolumeTokens vt = tokenize_volume(v, cfg.tok.patch_edge);
                    PatchTargets targets = voxel_patch_targets(v, vt, model.num_classes);
                    ad::Var emb = encode_tokens(g, model.vox_arch(), vars, enc_prefix, vt.blocks, vt.centers);
                    ad::Var logits = head_logits_on(g, vars, head_prefix, emb);
                    loss = dice_ce_loss_on(g, logits, targets, class_weights).total;
                } else {
                    PointCloud q = augment_pointcloud(sample.cloud, cfg.cloud_aug, aug_rng.fork(2));
                    CloudTokens ct = tokenize_cloud(q, cfg.tok.num_centroids, cfg.tok.neighbors);
                    PatchTargets targets = point_patch_targets(q, ct, model.num_classes);
                    ad::Var emb = encode_tokens(g, model.pt_arch(), vars, enc_prefix, ct.blocks, ct.centers);
                    ad::Var logits = head_logits_on(g, vars, head_prefix, emb);
                    loss = point_ce_loss_on(g, logits, targets, class_weights);
                }
                batch_loss = first ? loss : g.add(batch_loss, loss);
                first = false;
            }
            batch_loss = g.scalar_mul(batch_loss, 1.0 / static_cast<double>(batch_end - b));

            ad::GradientMap grads = g.backward(batch_loss);
            NamedGrads named;
            for (const auto& [name, var] : vars) {
                if (grads.contains(var)) named.emplace(name, grads.at(var));
            }
            const double lr = cosine_warmup_lr(step, sched);
            adamw_step(model.params, named, opt, lr);
            loss_acc += g.value(batch_loss).data[0];
            ++loss_count;
            ++step;
        }

        const double val_dsc = mean_dsc(evaluate_cases(model, modality, eval_set));
        csv << epoch << "," << detail::fmt_double(loss_acc / static_cast<double>(std::max<std::int64_t>(1, loss_count)))
            << "," << detail::fmt_double(val_dsc) << "\n";
        if (val_dsc > out.best_dsc || out.best_epoch < 0) {
            out.best_dsc = val_dsc;
            out.best_epoch = epoch;
            best_params = model.params;
        }
    }

    Model best = model;
    best.params = std::move(best_params);
    best.save(out.checkpoint_path, modality == Modality::kVoxel ? 0 : 1);
    return out;
}

// ---- eval stage -------------------------------------------------------------------

inline DiceReport evaluate_checkpoint(const std::string& checkpoint_path, const RunConfig& cfg,
                                      const std::string& report_csv) {
    int modality_tag = 2;
    Model model = model_from_checkpoint(checkpoint_path, &modality_tag);
    if (modality_tag != 0 && modality_tag != 1) {
        throw DataError("checkpoint has no fine-tuned head; run finetune first");
    }
    std::vector<Sample> samples = load_samples(cfg, "val");
    if (samples.empty()) samples = load_samples(cfg, "train");
    if (samples.empty()) throw DataError("manifest has no evaluable samples");

    const Modality modality = modality_tag == 0 ? Modality::kVoxel : Modality::kPoint;
    DiceReport report = build_report(evaluate_cases(model, modality, samples));
    if (!report_csv.empty()) write_report_csv(report, report_csv);
    return report;
}

// ---- ablation driver ----------------------------------------------------------------

// For each pretraining-set fraction and seed: pretrain on a prefix of a
// seeded shuffle, fine-tune both modalities from it, and record the val DSC.
inline std::string ablate(const RunConfig& cfg) {
    require_manifest(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    Manifest manifest = read_manifest(cfg.manifest);
    std::vector<ManifestEntry> pretrain_entries;
    for (const auto& e : manifest.samples) {
        if (e.role == "pretrain") pretrain_entries.push_back(e);
    }
    if (pretrain_entries.empty()) throw DataError("manifest has no pretrain samples");

    const std::string csv_path = (std::filesystem::path(cfg.out_dir) / "ablate.csv").string();
    std::ofstream csv(csv_path);
    csv << "fraction,seed,modality,dsc\n";

    for (std::uint64_t seed : cfg.ablate_seeds) {
        std::vector<ManifestEntry> shuffled = pretrain_entries;
        Rng shuffle_rng(seed ^ 0xAB1A7E0000000000ull);
        for (std::size_t i = shuffled.size(); i > 1; --i) {
            const auto j = shuffle_rng.uniform_index(i);
            std::swap(shuffled[i - 1], shuffled[static_cast<std::size_t>(j)]);
        }

        for (double fraction : cfg.ablate_fractions) {
            const auto take = static_cast<std::int64_t>(
                std::llround(fraction * static_cast<double>(shuffled.size())));
            char dirbuf[64];
            std::snprintf(dirbuf, sizeof dirbuf, "f%03d_s%llu", static_cast<int>(std::llround(fraction * 100)),
                          static_cast<unsigned long long>(seed));
            const std::string run_dir = (std::filesystem::path(cfg.out_dir) / dirbuf).string();
            std::filesystem::create_directories(run_dir);

            std::string ckpt;
            if (take > 0) {
                // subset manifest lives besides the ablation outputs
                Manifest sub;
                sub.samples.assign(shuffled.begin(), shuffled.begin() + take);
                for (const auto& e : manifest.samples) {
                    if (e.role != "pretrain") sub.samples.push_back(e);
                }
                // keep paths valid relative to the original manifest directory
                const std::string sub_path = (std::filesystem::path(run_dir) / "subset_manifest.json").string();
                Manifest rebased = sub;
                for (auto& e : rebased.samples) {
                    e.volume_path = (std::filesystem::path(manifest.base_dir) / e.volume_path).string();
                    e.cloud_path = (std::filesystem::path(manifest.base_dir) / e.cloud_path).string();
                }
                write_manifest(rebased, sub_path);

                RunConfig pre = cfg;
                pre.seed = seed;
                pre.manifest = sub_path;
                pre.out_dir = run_dir;
                ckpt = pretrain(pre).checkpoint_path;
            }

            for (const char* modality : {"voxel", "point"}) {
                RunConfig ft = cfg;
                ft.seed = seed;
                ft.out_dir = run_dir;
                ft.modality = modality;
                if (take > 0) {
                    ft.init_mode = "pretrained";
                    ft.init_checkpoint = ckpt;
                } else {
                    ft.init_mode = "scratch";  // fraction 0 is the scratch baseline by construction
                    ft.init_checkpoint.clear();
                }
                FinetuneOutput res = finetune(ft);
                csv << detail::fmt_double(fraction) << "," << seed << "," << modality << ","
                    << detail::fmt_double(res.best_dsc) << "\n";
            }
        }
    }
    return csv_path;
}

}  // namespace dentalign
