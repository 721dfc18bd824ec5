#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxcur/core/errors.hpp"
#include "voxcur/eval/evaluate.hpp"
#include "voxcur/phantom/dataset_io.hpp"
#include "voxcur/train/checkpoint.hpp"

namespace voxcur::cli {

using nlohmann::json;

inline json train_config_to_json(const train::TrainConfig& c) {
    return json{{"batch_size", c.batch_size},
                {"lr_stage1", c.lr_stage1},
                {"lr_stage2", c.lr_stage2},
                {"lr_naive", c.lr_naive},
                {"weight_decay", c.weight_decay},
                {"epochs_stage1", c.epochs_stage1},
                {"epochs_stage2", c.epochs_stage2},
                {"early_stop_patience", c.early_stop_patience},
                {"seed", c.seed},
                {"patch_shape", {c.patch_shape.x, c.patch_shape.y, c.patch_shape.z}},
                {"patches_per_breast", c.patches_per_breast},
                {"max_rot_degrees", c.max_rot_degrees},
                {"mirror", c.mirror},
                {"augment_enabled", c.augment_enabled}};
}

inline train::TrainConfig train_config_from_json(const json& j) {
    train::TrainConfig c;
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_stage1 = j.value("lr_stage1", c.lr_stage1);
    c.lr_stage2 = j.value("lr_stage2", c.lr_stage2);
    c.lr_naive = j.value("lr_naive", c.lr_naive);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.epochs_stage1 = j.value("epochs_stage1", c.epochs_stage1);
    c.epochs_stage2 = j.value("epochs_stage2", c.epochs_stage2);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.seed = j.value("seed", c.seed);
    if (j.contains("patch_shape")) {
        auto p = j.at("patch_shape");
        c.patch_shape = {p.at(0).get<int>(), p.at(1).get<int>(), p.at(2).get<int>()};
    }
    c.patches_per_breast = j.value("patches_per_breast", c.patches_per_breast);
    c.max_rot_degrees = j.value("max_rot_degrees", c.max_rot_degrees);
    c.mirror = j.value("mirror", c.mirror);
    c.augment_enabled = j.value("augment_enabled", c.augment_enabled);
    return c;
}

struct EvalSettings {
    int k = 5;
    std::uint64_t seed = 0;
    std::vector<std::string> methods{"curriculum"};
    int jobs = 1;
};

/// One config file drives the whole experiment.
struct ExperimentConfig {
    phantom::PhantomConfig phantom;
    nn::ModelConfig model;
    train::TrainConfig train;
    EvalSettings eval;
    std::filesystem::path output_dir;

    void validate() const {
        phantom.validate();
        model.validate();
        train.validate();
        if (eval.k < 2) throw ConfigError("eval.k must be >= 2");
        if (eval.methods.empty()) throw ConfigError("eval.methods must be non-empty");
        for (const auto& m : eval.methods)
            if (m != "curriculum" && m != "naive")
                throw ConfigError("eval.methods entries must be 'curriculum' or 'naive'");
        if (output_dir.empty())
            throw ConfigError("output_dir missing (set it in the config or via "
                              "VOXCUR_OUTPUT_ROOT)");
    }

    std::filesystem::path dataset_dir() const { return output_dir / "dataset"; }
    std::filesystem::path runs_dir() const { return output_dir / "runs"; }
    std::filesystem::path eval_dir() const { return output_dir / "eval"; }
    std::filesystem::path cam_dir() const { return output_dir / "cam"; }
};

inline json experiment_to_json(const ExperimentConfig& c) {
    json jm = train::model_config_to_json(c.model);
    return json{{"phantom", phantom::config_to_json(c.phantom)},
                {"model", jm},
                {"train", train_config_to_json(c.train)},
                {"eval",
                 {{"k", c.eval.k},
                  {"seed", c.eval.seed},
                  {"methods", c.eval.methods},
                  {"jobs", c.eval.jobs}}},
                {"output_dir", c.output_dir.string()}};
}

inline ExperimentConfig experiment_from_json(const json& j) {
    ExperimentConfig c;
    if (j.contains("phantom")) c.phantom = phantom::config_from_json(j.at("phantom"));
    if (j.contains("model")) c.model = train::model_config_from_json(j.at("model"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        c.eval.k = e.value("k", c.eval.k);
        c.eval.seed = e.value("seed", c.eval.seed);
        if (e.contains("methods"))
            c.eval.methods = e.at("methods").get<std::vector<std::string>>();
        c.eval.jobs = e.value("jobs", c.eval.jobs);
    }
    std::string out = j.value("output_dir", std::string{});
    if (out.empty()) {
        if (const char* root = std::getenv("VOXCUR_OUTPUT_ROOT")) out = root;
    }
    c.output_dir = out;
    return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path.string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    ExperimentConfig c = experiment_from_json(j);
    c.validate();
    return c;
}

inline void write_resolved_config(const std::filesystem::path& path,
                                  const ExperimentConfig& c) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path);
    f << experiment_to_json(c).dump(2) << "\n";
}

}  // namespace voxcur::cli
