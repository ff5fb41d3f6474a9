// Command-line entry point: data generation, pretraining, fine-tuning,
// evaluation, the ablation sweep, and SVG plotting. Exit codes: 0 success,
// 2 configuration error, 3 data error, 4 numerical error.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dentalign/config.hpp"
#include "dentalign/svgplot.hpp"
#include "dentalign/trainer.hpp"

using namespace dentalign;

int main(int argc, char** argv) {
    CLI::App app{"desk-scale multimodal contrastive pretraining for tooth segmentation"};
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint, manifest, report, csv_path, kind, svg_out;
    std::string init_mode, modality;

    auto* gen = app.add_subcommand("gen-data", "generate a paired synthetic dataset");
    gen->add_option("--config", config_path, "run configuration (JSON)")->required();
    gen->add_option("--out", out_dir, "output directory")->required();

    auto* pre = app.add_subcommand("pretrain", "contrastive pretraining");
    pre->add_option("--config", config_path)->required();

    auto* fin = app.add_subcommand("finetune", "supervised segmentation fine-tuning");
    fin->add_option("--config", config_path)->required();
    fin->add_option("--init", init_mode, "pretrained|scratch");
    fin->add_option("--modality", modality, "voxel|point");

    auto* ev = app.add_subcommand("eval", "evaluate a fine-tuned checkpoint");
    ev->add_option("--checkpoint", checkpoint)->required();
    ev->add_option("--manifest", manifest)->required();
    ev->add_option("--report", report, "report CSV path")->required();
    ev->add_option("--config", config_path, "optional config for preprocessing values");

    auto* ab = app.add_subcommand("ablate", "pretraining-fraction ablation sweep");
    ab->add_option("--config", config_path)->required();

    auto* plot = app.add_subcommand("plot", "render a CSV as a deterministic SVG");
    plot->add_option("--csv", csv_path)->required();
    plot->add_option("--kind", kind, "loss-curve|scale-curve|group-bars")->required();
    plot->add_option("--out", svg_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            RunConfig cfg = load_run_config(config_path);
            const std::string path = generate_dataset(cfg, out_dir);
            std::cout << "wrote " << path << "\n";
        } else if (pre->parsed()) {
            RunConfig cfg = load_run_config(config_path);
            PretrainOutput out = pretrain(cfg);
            std::cout << "checkpoint: " << out.checkpoint_path << "\n"
                      << "trace: " << out.trace_path << "\n"
                      << "steps: " << out.steps << " (skipped batches: " << out.skipped_batches << ")\n";
        } else if (fin->parsed()) {
            RunConfig cfg = load_run_config(config_path);
            if (!init_mode.empty()) cfg.init_mode = init_mode;
            if (!modality.empty()) cfg.modality = modality;
            parse_init_mode(cfg.init_mode);
            if (cfg.modality != "voxel" && cfg.modality != "point") {
                throw ConfigError("--modality must be voxel or point");
            }
            FinetuneOutput out = finetune(cfg);
            std::cout << "best checkpoint: " << out.checkpoint_path << "\n"
                      << "per-epoch csv: " << out.csv_path << "\n"
                      << "best val dsc: " << out.best_dsc << " (epoch " << out.best_epoch << ")\n";
        } else if (ev->parsed()) {
            RunConfig cfg;
            if (!config_path.empty()) {
                cfg = load_run_config(config_path);
            }
            cfg.manifest = manifest;
            DiceReport rep = evaluate_checkpoint(checkpoint, cfg, report);
            std::cout << format_report_table(rep);
            for (const auto& w : rep.warnings) std::cout << "warning: " << w << "\n";
            std::cout << "report: " << report << "\n";
        } else if (ab->parsed()) {
            RunConfig cfg = load_run_config(config_path);
            const std::string path = ablate(cfg);
            std::cout << "ablation table: " << path << "\n";
        } else if (plot->parsed()) {
            emit_plot(csv_path, parse_plot_kind(kind), svg_out);
            std::cout << "wrote " << svg_out << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
