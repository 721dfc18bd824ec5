#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "voxcur/cli/commands.hpp"

using namespace voxcur;

int main(int argc, char** argv) {
    CLI::App app{"Multi-scale curriculum training of a 3D residual CNN for "
                 "whole-volume malignancy classification on synthetic DCE-MRI phantoms"};
    app.require_subcommand(1);

    std::string config_path;
    bool force = false;
    std::string method = "curriculum";
    int fold = 0;
    bool train_missing = false;
    int jobs = 0;
    std::string patient_id, side;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "experiment config (JSON)")
            ->required()
            ->check(CLI::ExistingFile);
    };

    auto* gen = app.add_subcommand("gen-data", "generate the phantom dataset");
    add_config(gen);
    gen->add_flag("--force", force, "overwrite an existing non-empty dataset");

    auto* tr = app.add_subcommand("train", "train one method on one fold");
    add_config(tr);
    tr->add_option("--method", method, "curriculum | naive");
    tr->add_option("--fold", fold, "fold index");

    auto* ev = app.add_subcommand("eval", "score all folds and emit the report");
    add_config(ev);
    ev->add_flag("--train-missing", train_missing, "train folds whose checkpoints are missing");
    ev->add_option("--jobs", jobs, "cap on fold-level parallelism");

    auto* cam = app.add_subcommand("cam", "class activation map for one breast");
    add_config(cam);
    cam->add_option("--patient", patient_id, "patient id")->required();
    cam->add_option("--side", side, "left | right")->required();
    cam->add_option("--fold", fold, "fold whose checkpoint to use");
    cam->add_option("--method", method, "checkpoint method");

    CLI11_PARSE(app, argc, argv);

    try {
        cli::ExperimentConfig cfg = cli::load_experiment_config(config_path);
        if (jobs > 0) cfg.eval.jobs = jobs;
        if (gen->parsed()) return cli::cmd_gen_data(cfg, force);
        if (tr->parsed()) return cli::cmd_train(cfg, method, fold);
        if (ev->parsed()) return cli::cmd_eval(cfg, train_missing);
        if (cam->parsed()) return cli::cmd_cam(cfg, patient_id, side, fold, method);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
