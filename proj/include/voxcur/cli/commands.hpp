#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "voxcur/cli/config.hpp"
#include "voxcur/eval/evaluate.hpp"
#include "voxcur/phantom/dataset_io.hpp"
#include "voxcur/train/checkpoint.hpp"

namespace voxcur::cli {

namespace fs = std::filesystem;

inline fs::path checkpoint_path(const ExperimentConfig& cfg, const std::string& method,
                                int fold) {
    return cfg.runs_dir() / ("fold_" + std::to_string(fold)) / (method + ".ckpt");
}

/// Generate the phantom dataset and write it to <output_dir>/dataset.
inline int cmd_gen_data(const ExperimentConfig& cfg, bool force, std::ostream& out = std::cout) {
    fs::path dir = cfg.dataset_dir();
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!force)
            throw ConfigError("dataset directory " + dir.string() +
                              " is not empty; pass --force to overwrite");
        fs::remove_all(dir);
    }
    auto cases = phantom::generate_phantom(cfg.phantom);
    phantom::write_dataset(dir, cases, cfg.phantom);
    write_resolved_config(dir / "config.json", cfg);

    int breasts = 0, malignant_breasts = 0, malignant_patients = 0;
    for (const auto& pc : cases) {
        breasts += 2;
        malignant_breasts += pc.left_label + pc.right_label;
        malignant_patients += pc.left_label || pc.right_label;
    }
    out << "wrote " << cases.size() << " patients to " << dir.string() << "\n"
        << "  malignant patients: " << malignant_patients << " ("
        << 100.0 * malignant_patients / cases.size() << "%)\n"
        << "  breast-level malignant/benign: " << malignant_breasts << "/"
        << (breasts - malignant_breasts) << " ("
        << 100.0 * malignant_breasts / breasts << "%/"
        << 100.0 * (breasts - malignant_breasts) / breasts << "%)\n";
    return 0;
}

inline std::vector<phantom::PatientCase> load_dataset_or_fail(const ExperimentConfig& cfg) {
    fs::path dir = cfg.dataset_dir();
    if (!fs::exists(dir))
        throw ConfigError("no dataset at " + dir.string() + "; run `gen-data` first");
    auto cases = phantom::read_dataset(dir);
    if (cases.empty())
        throw ConfigError("dataset at " + dir.string() + " is empty; run `gen-data` first");
    return cases;
}

/// Train one method on one fold; writes checkpoint, history and the
/// resolved config under <output_dir>/runs/fold_<N>/.
inline int cmd_train(const ExperimentConfig& cfg, const std::string& method, int fold,
                     std::ostream& out = std::cout) {
    if (method != "curriculum" && method != "naive")
        throw ArgumentError("--method must be 'curriculum' or 'naive'");
    auto cases = load_dataset_or_fail(cfg);
    auto index = eval::prepare_dataset(cases);
    std::vector<std::string> ids;
    for (const auto& [id, _] : index) ids.push_back(id);
    auto folds = eval::make_folds(ids, cfg.eval.k, 0.2, cfg.eval.seed);
    if (fold < 0 || fold >= static_cast<int>(folds.size()))
        throw ArgumentError("--fold must lie in [0, " + std::to_string(folds.size() - 1) + "]");

    train::TrainHistory history;
    std::unique_ptr<nn::ResNet3d<float>> model;
    eval::FoldResult fr = eval::run_fold(index, folds[fold], method, cfg.model, cfg.train,
                                         &history, &model);

    fs::path run_dir = cfg.runs_dir() / ("fold_" + std::to_string(fold));
    fs::create_directories(run_dir);
    train::save_checkpoint(run_dir / (method + ".ckpt"), *model, history);
    {
        std::ofstream hf(run_dir / (method + "_history.json"));
        hf << train::history_to_json(history).dump(2) << "\n";
    }
    write_resolved_config(run_dir / "config.json", cfg);

    out << method << " fold " << fold << ": " << history.records.size() << " epochs";
    if (fr.metrics_defined) out << ", test AUROC " << fr.auroc;
    out << "\n";
    return 0;
}

/// Score every fold from its checkpoint and emit the Table-1-style summary.
inline int cmd_eval(const ExperimentConfig& cfg, bool train_missing,
                    std::ostream& out = std::cout) {
    auto cases = load_dataset_or_fail(cfg);
    auto index = eval::prepare_dataset(cases);
    std::vector<std::string> ids;
    for (const auto& [id, _] : index) ids.push_back(id);
    auto folds = eval::make_folds(ids, cfg.eval.k, 0.2, cfg.eval.seed);

    std::vector<std::string> missing;
    for (const auto& method : cfg.eval.methods)
        for (const auto& split : folds)
            if (!fs::exists(checkpoint_path(cfg, method, split.fold_index)))
                missing.push_back(method + "/fold_" + std::to_string(split.fold_index));
    if (!missing.empty() && !train_missing) {
        std::string list;
        for (const auto& m : missing) list += " " + m;
        throw ConfigError("missing checkpoints:" + list +
                          "; run `train` for them or pass --train-missing");
    }
    for (const auto& method : cfg.eval.methods)
        for (const auto& split : folds)
            if (!fs::exists(checkpoint_path(cfg, method, split.fold_index)))
                cmd_train(cfg, method, split.fold_index, out);

    eval::EvalReport report;
    report.config_echo = experiment_to_json(cfg);
    for (const auto& method : cfg.eval.methods) {
        eval::MethodReport mr;
        mr.method = method;
        for (const auto& split : folds) {
            auto model = train::load_checkpoint(checkpoint_path(cfg, method, split.fold_index));
            mr.parameter_count = model.count_parameters();
            auto test_b = eval::gather_breasts(index, split.test_patients);
            mr.folds.push_back(eval::score_breasts(model, test_b, split.fold_index));
        }
        eval::aggregate_method(mr);
        report.methods.push_back(std::move(mr));
    }

    fs::create_directories(cfg.eval_dir());
    {
        std::ofstream rf(cfg.eval_dir() / "report.json");
        rf << eval::report_to_json(report).dump(2) << "\n";
    }
    for (const auto& mr : report.methods)
        eval::write_roc_csv(cfg.eval_dir() / ("roc_" + mr.method + ".csv"), mr);

    char line[160];
    out << "Method        AUROC            Accuracy         #Parameters\n";
    for (const auto& mr : report.methods) {
        std::snprintf(line, sizeof(line), "%-12s  %.3f +/- %.3f  %.3f +/- %.3f  %zu\n",
                      mr.method.c_str(), mr.auroc_mean, mr.auroc_std, mr.accuracy_mean,
                      mr.accuracy_std, mr.parameter_count);
        out << line;
    }
    out << "report: " << (cfg.eval_dir() / "report.json").string() << "\n";
    return 0;
}

namespace detail {

inline void write_pgm(const fs::path& path, const std::vector<float>& img, int w, int h) {
    std::ofstream f(path, std::ios::binary);
    f << "P5\n" << w << " " << h << "\n255\n";
    for (int i = 0; i < w * h; ++i) {
        float v = std::clamp(img[i], 0.0f, 1.0f);
        f.put(static_cast<char>(v * 255.0f + 0.5f));
    }
}

}  // namespace detail

/// Class activation map for one breast, written as heatmap.raw + meta.json
/// plus per-slice grayscale images for inspection.
inline int cmd_cam(const ExperimentConfig& cfg, const std::string& patient_id,
                   const std::string& side, int fold = 0,
                   const std::string& method = "curriculum", std::ostream& out = std::cout) {
    if (side != "left" && side != "right")
        throw ArgumentError("--side must be 'left' or 'right'");
    auto cases = load_dataset_or_fail(cfg);
    const phantom::PatientCase* found = nullptr;
    for (const auto& pc : cases)
        if (pc.patient_id == patient_id) found = &pc;
    if (!found) throw LookupError("unknown patient id: " + patient_id);

    fs::path ckpt = checkpoint_path(cfg, method, fold);
    if (!fs::exists(ckpt))
        throw ConfigError("no checkpoint at " + ckpt.string() + "; run `train` first");
    auto model = train::load_checkpoint(ckpt);
    if (model.stage_mode() != nn::StageMode::WholeVolume)
        throw StageError("checkpoint " + ckpt.string() + " is not stage-2 adapted");

    auto [left, right] = pipeline::prepare_case(*found);
    const pipeline::BreastSample& breast = side == "left" ? left : right;
    Volume<float> heat = eval::class_activation_map(model, breast, 1);

    fs::path dir = cfg.cam_dir() / (patient_id + "_" + side);
    fs::create_directories(dir);
    {
        std::ofstream raw(dir / "heatmap.raw", std::ios::binary);
        raw.write(reinterpret_cast<const char*>(heat.data.data()),
                  static_cast<std::streamsize>(heat.size() * sizeof(float)));
    }
    {
        json lesions = json::array();
        for (const auto& l : breast.lesions)
            lesions.push_back({{"center", {l.center.x, l.center.y, l.center.z}},
                               {"malignant", l.malignant},
                               {"radius", l.radius}});
        json meta{{"format_version", 1},
                  {"patient_id", patient_id},
                  {"side", side},
                  {"shape", {heat.c, heat.x, heat.y, heat.z}},
                  {"channel_names", {"cam_malignant"}},
                  {"lesions", lesions},
                  {"checkpoint", ckpt.string()}};
        std::ofstream mf(dir / "meta.json");
        mf << meta.dump(2) << "\n";
    }
    // per-slice images: heatmap alone and a 50/50 overlay on the first channel
    for (int zi = 0; zi < heat.z; ++zi) {
        std::vector<float> heat_img(static_cast<std::size_t>(heat.x) * heat.y);
        std::vector<float> overlay(heat_img.size());
        for (int xi = 0; xi < heat.x; ++xi)
            for (int yi = 0; yi < heat.y; ++yi) {
                float h = heat.at(0, xi, yi, zi);
                heat_img[static_cast<std::size_t>(yi) * heat.x + xi] = h;
                overlay[static_cast<std::size_t>(yi) * heat.x + xi] =
                    0.5f * breast.volume.at(0, xi, yi, zi) + 0.5f * h;
            }
        char name[64];
        std::snprintf(name, sizeof(name), "heatmap_z%02d.pgm", zi);
        detail::write_pgm(dir / name, heat_img, heat.x, heat.y);
        std::snprintf(name, sizeof(name), "overlay_z%02d.pgm", zi);
        detail::write_pgm(dir / name, overlay, heat.x, heat.y);
    }
    out << "wrote CAM for " << patient_id << "/" << side << " to " << dir.string() << "\n";
    return 0;
}

}  // namespace voxcur::cli
