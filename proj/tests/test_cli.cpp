#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#ifndef DENTALIGN_CLI_PATH
#define DENTALIGN_CLI_PATH "dentalign"
#endif

namespace {

std::string work_dir() {
    auto dir = std::filesystem::temp_directory_path() / "dentalign_cli_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

int run(const std::string& args) {
    const std::string cmd = std::string(DENTALIGN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

const char* kTinyConfig = R"({
  "seed": 3,
  "encoder": {"hidden": 16, "blocks": 1, "ff_hidden": 32},
  "tokenization": {"patch_edge": 8, "centroids": 10, "neighbors": 12},
  "pretrain": {"epochs": 1, "batch_size": 2, "lr": 3e-4},
  "finetune": {"epochs": 1, "batch_size": 1, "lr": 1e-3, "init": "scratch", "modality": "voxel"},
  "data": {"pretrain_samples": 2, "finetune_train": 2, "finetune_val": 2,
           "dims": [24, 24, 24], "spacing": [2.6666666666666665, 2.6666666666666665, 2.6666666666666665],
           "cloud_points": 96, "surface_samples_per_tooth": 24, "gum_samples": 60,
           "noise_level_hu": 10.0, "min_teeth": 4, "max_teeth": 6}
})";

}  // namespace

TEST(Cli, EndToEndFlowAndExitCodes) {
    const std::string dir = work_dir();
    const std::string cfg_path = dir + "/config.json";
    {
        std::ofstream os(cfg_path);
        os << kTinyConfig;
    }

    // config errors exit with 2
    EXPECT_EQ(run("pretrain --config " + dir + "/missing.json"), 2);
    {
        std::ofstream os(dir + "/bad.json");
        os << "{\"sed\": 1}";
    }
    EXPECT_EQ(run("pretrain --config " + dir + "/bad.json"), 2);
    EXPECT_EQ(run("definitely-not-a-subcommand"), 2);

    // gen-data succeeds
    ASSERT_EQ(run("gen-data --config " + cfg_path + " --out " + dir + "/data"), 0);
    ASSERT_TRUE(std::filesystem::exists(dir + "/data/manifest.json"));

    // stages need the manifest wired into the config
    {
        std::ofstream os(cfg_path);
        std::string body = kTinyConfig;
        body.insert(body.rfind('}'), ", \"manifest\": \"data/manifest.json\", \"out_dir\": \"" + dir +
                                         "/run\"");
        os << body;
    }
    ASSERT_EQ(run("pretrain --config " + cfg_path), 0);
    ASSERT_TRUE(std::filesystem::exists(dir + "/run/pretrain_checkpoint.bin"));

    ASSERT_EQ(run("finetune --config " + cfg_path + " --init scratch --modality voxel"), 0);
    const std::string best = dir + "/run/finetune_voxel_scratch_best.bin";
    ASSERT_TRUE(std::filesystem::exists(best));

    EXPECT_EQ(run("eval --checkpoint " + best + " --manifest " + dir + "/data/manifest.json --report " +
                  dir + "/run/report.csv"),
              0);
    EXPECT_TRUE(std::filesystem::exists(dir + "/run/report.csv"));

    // a pretraining checkpoint has no head: data error exits with 3
    EXPECT_EQ(run("eval --checkpoint " + dir + "/run/pretrain_checkpoint.bin --manifest " + dir +
                  "/data/manifest.json --report " + dir + "/run/r2.csv"),
              3);

    // plotting: success then malformed CSV -> 3
    EXPECT_EQ(run("plot --csv " + dir + "/run/report.csv --kind group-bars --out " + dir + "/run/r.svg"), 0);
    {
        std::ofstream os(dir + "/broken.csv");
        os << "a,b\n1\n";
    }
    EXPECT_EQ(run("plot --csv " + dir + "/broken.csv --kind loss-curve --out " + dir + "/x.svg"), 3);
    EXPECT_EQ(run("plot --csv " + dir + "/run/report.csv --kind nope --out " + dir + "/x.svg"), 2);
}
