#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "voxcur/cli/commands.hpp"

using namespace voxcur;

namespace {

cli::ExperimentConfig tiny_experiment(const std::filesystem::path& out_dir) {
    cli::ExperimentConfig cfg;
    cfg.phantom = testutil::desk_phantom(31, 8);
    cfg.model = testutil::desk_model(31);
    cfg.train = testutil::desk_train(31);
    cfg.train.epochs_stage1 = 2;
    cfg.train.epochs_stage2 = 2;
    cfg.train.patches_per_breast = 2;
    cfg.eval.k = 2;
    cfg.eval.seed = 31;
    cfg.eval.methods = {"curriculum", "naive"};
    cfg.output_dir = out_dir;
    return cfg;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("commands fail cleanly before gen-data, naming the remedy") {
    testutil::TempDir tmp("cli_nodata");
    auto cfg = tiny_experiment(tmp.path / "out");
    std::ostringstream out;
    try {
        cli::cmd_train(cfg, "curriculum", 0, out);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("gen-data") != std::string::npos);
    }
    CHECK_THROWS_AS(cli::cmd_eval(cfg, false, out), ConfigError);
    CHECK_THROWS_AS(cli::cmd_cam(cfg, "patient_0000", "left", 0, "curriculum", out),
                    ConfigError);
}

TEST_CASE("end-to-end CLI flow: gen-data, train, eval, cam") {
    testutil::TempDir tmp("cli_e2e");
    auto cfg = tiny_experiment(tmp.path / "out");
    std::ostringstream out;

    // gen-data
    CHECK(cli::cmd_gen_data(cfg, false, out) == 0);
    CHECK(out.str().find("wrote 8 patients") != std::string::npos);
    int case_dirs = 0;
    for (const auto& e : std::filesystem::directory_iterator(cfg.dataset_dir()))
        if (e.is_directory()) ++case_dirs;
    CHECK(case_dirs == 8);
    CHECK(std::filesystem::exists(cfg.dataset_dir() / "config.json"));

    // refuses to overwrite without --force; --force regenerates identically
    CHECK_THROWS_AS(cli::cmd_gen_data(cfg, false, out), ConfigError);
    auto sample_raw = cfg.dataset_dir() / "patient_0000" / "volume.raw";
    std::string before = slurp(sample_raw);
    CHECK(cli::cmd_gen_data(cfg, true, out) == 0);
    CHECK(slurp(sample_raw) == before);

    // invalid train arguments
    CHECK_THROWS_AS(cli::cmd_train(cfg, "mystery", 0, out), ArgumentError);
    CHECK_THROWS_AS(cli::cmd_train(cfg, "curriculum", 99, out), ArgumentError);

    // eval refuses while checkpoints are missing, and says which
    try {
        cli::cmd_eval(cfg, false, out);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("curriculum/fold_0") != std::string::npos);
        CHECK(msg.find("naive/fold_1") != std::string::npos);
    }

    // train fold 0 explicitly; history carries both curriculum stages
    out.str("");
    CHECK(cli::cmd_train(cfg, "curriculum", 0, out) == 0);
    auto run_dir = cfg.runs_dir() / "fold_0";
    CHECK(std::filesystem::exists(run_dir / "curriculum.ckpt"));
    CHECK(std::filesystem::exists(run_dir / "config.json"));
    {
        std::ifstream hf(run_dir / "curriculum_history.json");
        auto h = train::history_from_json(nlohmann::json::parse(hf));
        bool saw_s1 = false, saw_s2 = false;
        for (const auto& r : h.records) {
            saw_s1 |= r.stage == "stage1";
            saw_s2 |= r.stage == "stage2";
        }
        CHECK(saw_s1);
        CHECK(saw_s2);
    }
    CHECK(cli::cmd_train(cfg, "naive", 0, out) == 0);
    {
        std::ifstream hf(run_dir / "naive_history.json");
        auto h = train::history_from_json(nlohmann::json::parse(hf));
        REQUIRE_FALSE(h.records.empty());
        for (const auto& r : h.records) CHECK(r.stage == "naive");
    }

    // the curriculum checkpoint is stage-2 adapted and usable for CAM
    auto ck = train::read_checkpoint(run_dir / "curriculum.ckpt");
    CHECK(ck.stage_mode == nn::StageMode::WholeVolume);

    // eval --train-missing fills in the remaining fold and writes the report
    out.str("");
    CHECK(cli::cmd_eval(cfg, true, out) == 0);
    CHECK(out.str().find("Method") != std::string::npos);
    CHECK(out.str().find("curriculum") != std::string::npos);
    CHECK(out.str().find("naive") != std::string::npos);
    auto report_path = cfg.eval_dir() / "report.json";
    REQUIRE(std::filesystem::exists(report_path));
    CHECK(std::filesystem::exists(cfg.eval_dir() / "roc_curriculum.csv"));
    CHECK(std::filesystem::exists(cfg.eval_dir() / "roc_naive.csv"));
    {
        std::ifstream rf(report_path);
        auto j = nlohmann::json::parse(rf);
        CHECK(j.at("methods").size() == 2);
        CHECK(j.at("methods").at(0).at("folds").size() == 2);
        CHECK(j.at("config_echo").at("eval").at("k").get<int>() == 2);
    }

    // re-running eval from the same checkpoints is byte-identical
    std::string report_before = slurp(report_path);
    CHECK(cli::cmd_eval(cfg, false, out) == 0);
    CHECK(slurp(report_path) == report_before);

    // cam: argument validation, then outputs
    CHECK_THROWS_AS(cli::cmd_cam(cfg, "patient_0000", "sideways", 0, "curriculum", out),
                    ArgumentError);
    CHECK_THROWS_AS(cli::cmd_cam(cfg, "nobody", "left", 0, "curriculum", out), LookupError);
    CHECK_THROWS_AS(cli::cmd_cam(cfg, "patient_0000", "left", 0, "missing_method", out),
                    ConfigError);

    CHECK(cli::cmd_cam(cfg, "patient_0000", "left", 0, "curriculum", out) == 0);
    auto cam_dir = cfg.cam_dir() / "patient_0000_left";
    REQUIRE(std::filesystem::exists(cam_dir / "heatmap.raw"));
    REQUIRE(std::filesystem::exists(cam_dir / "meta.json"));
    {
        std::ifstream mf(cam_dir / "meta.json");
        auto meta = nlohmann::json::parse(mf);
        CHECK(meta.at("format_version").get<int>() == 1);
        auto sh = meta.at("shape");
        CHECK(sh.at(0).get<int>() == 1);
        std::size_t voxels = static_cast<std::size_t>(sh.at(1).get<int>()) *
                             sh.at(2).get<int>() * sh.at(3).get<int>();
        CHECK(std::filesystem::file_size(cam_dir / "heatmap.raw") == voxels * sizeof(float));
        CHECK(std::filesystem::exists(cam_dir / "heatmap_z00.pgm"));
        CHECK(std::filesystem::exists(cam_dir / "overlay_z00.pgm"));
        int z = sh.at(3).get<int>();
        char name[32];
        std::snprintf(name, sizeof(name), "heatmap_z%02d.pgm", z - 1);
        CHECK(std::filesystem::exists(cam_dir / name));
    }
}

TEST_CASE("training the same fold twice yields identical checkpoints") {
    testutil::TempDir tmp("cli_repro");
    auto cfg = tiny_experiment(tmp.path / "out");
    std::ostringstream out;
    cli::cmd_gen_data(cfg, false, out);
    cli::cmd_train(cfg, "naive", 0, out);
    auto path = cli::checkpoint_path(cfg, "naive", 0);
    auto first = train::read_checkpoint(path);
    std::filesystem::remove(path);
    cli::cmd_train(cfg, "naive", 0, out);
    auto second = train::read_checkpoint(path);
    REQUIRE(first.param_values.size() == second.param_values.size());
    for (std::size_t i = 0; i < first.param_values.size(); ++i)
        CHECK(first.param_values[i] == second.param_values[i]);
    REQUIRE(first.history.records.size() == second.history.records.size());
    for (std::size_t i = 0; i < first.history.records.size(); ++i)
        CHECK(first.history.records[i].train_loss == second.history.records[i].train_loss);
}
