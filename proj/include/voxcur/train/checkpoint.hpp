#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxcur/core/errors.hpp"
#include "voxcur/nn/resnet3d.hpp"
#include "voxcur/train/trainer.hpp"

namespace voxcur::train {

using nlohmann::json;

// Checkpoint archive, format_version 1:
//   8-byte magic "VXCKPT01", little-endian u64 JSON length, JSON metadata
//   (model config, stage_mode, history, parameter manifest), then the raw
//   parameter arrays as little-endian float32 in manifest order.

inline json model_config_to_json(const nn::ModelConfig& c) {
    return json{{"in_channels", c.in_channels},
                {"n_classes", c.n_classes},
                {"base_width", c.base_width},
                {"block_widths", {c.block_widths[0], c.block_widths[1], c.block_widths[2],
                                  c.block_widths[3]}},
                {"leaky_slope", c.leaky_slope},
                {"stage_strides",
                 {{c.stage_strides[0].x, c.stage_strides[0].y, c.stage_strides[0].z},
                  {c.stage_strides[1].x, c.stage_strides[1].y, c.stage_strides[1].z},
                  {c.stage_strides[2].x, c.stage_strides[2].y, c.stage_strides[2].z},
                  {c.stage_strides[3].x, c.stage_strides[3].y, c.stage_strides[3].z}}},
                {"pool_window", {c.pool_window.x, c.pool_window.y, c.pool_window.z}},
                {"init_seed", c.init_seed}};
}

inline nn::ModelConfig model_config_from_json(const json& j) {
    nn::ModelConfig c;
    c.in_channels = j.value("in_channels", c.in_channels);
    c.n_classes = j.value("n_classes", c.n_classes);
    c.base_width = j.value("base_width", c.base_width);
    if (j.contains("block_widths")) {
        auto w = j.at("block_widths");
        for (int i = 0; i < 4; ++i) c.block_widths[i] = w.at(i).get<int>();
    }
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    if (j.contains("stage_strides")) {
        auto ss = j.at("stage_strides");
        for (int i = 0; i < 4; ++i)
            c.stage_strides[i] = {ss.at(i).at(0).get<int>(), ss.at(i).at(1).get<int>(),
                                  ss.at(i).at(2).get<int>()};
    }
    if (j.contains("pool_window")) {
        auto p = j.at("pool_window");
        c.pool_window = {p.at(0).get<int>(), p.at(1).get<int>(), p.at(2).get<int>()};
    }
    c.init_seed = j.value("init_seed", c.init_seed);
    return c;
}

inline json history_to_json(const TrainHistory& h) {
    json recs = json::array();
    for (const auto& r : h.records) {
        json jr{{"stage", r.stage},
                {"epoch", r.epoch},
                {"train_loss", r.train_loss},
                {"lr", r.lr}};
        jr["val_loss"] = std::isfinite(r.val_loss) ? json(r.val_loss) : json(nullptr);
        jr["val_auroc"] = std::isfinite(r.val_auroc) ? json(r.val_auroc) : json(nullptr);
        recs.push_back(jr);
    }
    return json{{"records", recs},
                {"wall_time_seconds", h.wall_time_seconds},
                {"selected_epoch", h.selected_epoch},
                {"selection_metric", h.selection_metric}};
}

inline TrainHistory history_from_json(const json& j) {
    TrainHistory h;
    for (const auto& jr : j.value("records", json::array())) {
        EpochRecord r;
        r.stage = jr.at("stage").get<std::string>();
        r.epoch = jr.at("epoch").get<int>();
        r.train_loss = jr.at("train_loss").get<double>();
        r.lr = jr.at("lr").get<double>();
        r.val_loss = jr.at("val_loss").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                 : jr.at("val_loss").get<double>();
        r.val_auroc = jr.at("val_auroc").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                   : jr.at("val_auroc").get<double>();
        h.records.push_back(r);
    }
    h.wall_time_seconds = j.value("wall_time_seconds", 0.0);
    h.selected_epoch = j.value("selected_epoch", -1);
    h.selection_metric = j.value("selection_metric", "");
    return h;
}

inline void save_checkpoint(const std::filesystem::path& path, nn::ResNet3d<float>& model,
                            const TrainHistory& history) {
    auto params = model.params();
    json manifest = json::array();
    for (auto* p : params)
        manifest.push_back({{"name", p->name}, {"shape", p->shape}, {"count", p->size()}});
    json meta{{"format_version", 1},
              {"model_config", model_config_to_json(model.config())},
              {"stage_mode", nn::stage_mode_name(model.stage_mode())},
              {"history", history_to_json(history)},
              {"parameters", manifest}};
    std::string meta_str = meta.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint " + path.string());
    f.write("VXCKPT01", 8);
    std::uint64_t len = meta_str.size();
    f.write(reinterpret_cast<const char*>(&len), 8);
    f.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    for (auto* p : params)
        f.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->size() * sizeof(float)));
}

struct LoadedCheckpoint {
    nn::ModelConfig config;
    nn::StageMode stage_mode = nn::StageMode::Patch;
    TrainHistory history;
    std::vector<std::vector<float>> param_values;
};

inline LoadedCheckpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read checkpoint " + path.string());
    char magic[8];
    f.read(magic, 8);
    if (f.gcount() != 8 || std::memcmp(magic, "VXCKPT01", 8) != 0)
        throw IoError("not a checkpoint file: " + path.string());
    std::uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 8);
    std::string meta_str(len, '\0');
    f.read(meta_str.data(), static_cast<std::streamsize>(len));
    json meta = json::parse(meta_str);
    if (meta.value("format_version", 0) != 1)
        throw IoError("unsupported checkpoint format_version in " + path.string());

    LoadedCheckpoint ck;
    ck.config = model_config_from_json(meta.at("model_config"));
    ck.stage_mode = meta.at("stage_mode").get<std::string>() == "whole_volume"
                        ? nn::StageMode::WholeVolume
                        : nn::StageMode::Patch;
    ck.history = history_from_json(meta.at("history"));
    for (const auto& m : meta.at("parameters")) {
        std::vector<float> v(m.at("count").get<std::size_t>());
        f.read(reinterpret_cast<char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(float)));
        if (static_cast<std::size_t>(f.gcount()) != v.size() * sizeof(float))
            throw IoError("checkpoint truncated: " + path.string());
        ck.param_values.push_back(std::move(v));
    }
    return ck;
}

inline nn::ResNet3d<float> load_checkpoint(const std::filesystem::path& path,
                                           TrainHistory* history = nullptr) {
    LoadedCheckpoint ck = read_checkpoint(path);
    nn::ResNet3d<float> model(ck.config);
    if (ck.stage_mode == nn::StageMode::WholeVolume) model.adapt_for_stage2();
    auto params = model.params();
    if (params.size() != ck.param_values.size())
        throw IoError("checkpoint parameter count does not match the model: " + path.string());
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->size() != ck.param_values[i].size())
            throw IoError("checkpoint parameter " + params[i]->name + " has wrong size");
        params[i]->value = std::move(ck.param_values[i]);
    }
    if (history) *history = ck.history;
    return model;
}

}  // namespace voxcur::train
