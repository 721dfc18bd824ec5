#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include "voxcur/core/errors.hpp"
#include "voxcur/core/rng.hpp"
#include "voxcur/eval/metrics.hpp"
#include "voxcur/nn/adam.hpp"
#include "voxcur/nn/resnet3d.hpp"
#include "voxcur/pipeline/pipeline.hpp"

namespace voxcur::train {

using pipeline::BreastSample;
using pipeline::PatchSample;

struct TrainConfig {
    int batch_size = 4;
    double lr_stage1 = 1e-4;
    double lr_stage2 = 1e-5;
    double lr_naive = 1e-4;  // fresh whole-volume training, Stage-1 magnitude
    double weight_decay = 0.0;  // decoupled (AdamW-style), off by default
    int epochs_stage1 = 30;
    int epochs_stage2 = 30;
    int early_stop_patience = 10;
    std::uint64_t seed = 0;
    Vec3i patch_shape{64, 64, 4};
    int patches_per_breast = 4;
    double max_rot_degrees = 15.0;
    bool mirror = true;
    bool augment_enabled = true;

    void validate() const {
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (!(lr_stage2 < lr_stage1))
            throw ConfigError("lr_stage2 must be below lr_stage1");
        if (epochs_stage1 < 1 || epochs_stage2 < 1)
            throw ConfigError("epoch counts must be >= 1");
        if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
        if (patches_per_breast < 1) throw ConfigError("patches_per_breast must be >= 1");
        if (patch_shape.x < 1 || patch_shape.y < 1 || patch_shape.z < 1)
            throw ConfigError("patch_shape dims must be >= 1");
    }
};

struct EpochRecord {
    std::string stage;
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_auroc = 0.0;  // NaN when undefined on the validation set
    double lr = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> records;
    double wall_time_seconds = 0.0;
    int selected_epoch = -1;  // global index into records
    std::string selection_metric;  // "val_auroc" or "val_loss"

    void append(const TrainHistory& o) {
        records.insert(records.end(), o.records.begin(), o.records.end());
        wall_time_seconds += o.wall_time_seconds;
        selected_epoch = o.selected_epoch < 0
                             ? selected_epoch
                             : static_cast<int>(records.size() - o.records.size()) +
                                   o.selected_epoch;
        selection_metric = o.selection_metric;
    }
};

namespace detail {

struct Item {
    Volume<float> volume;
    int label;
};

template <typename T>
Batch<T> make_batch(const std::vector<const Item*>& items) {
    const auto& v0 = items.front()->volume;
    Batch<T> b(static_cast<int>(items.size()), v0.c, v0.x, v0.y, v0.z);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& v = items[i]->volume;
        if (v.c != v0.c || v.x != v0.x || v.y != v0.y || v.z != v0.z)
            throw ShapeError("training batch mixes sample shapes " +
                             shape_string(v0.c, v0.x, v0.y, v0.z) + " and " +
                             shape_string(v.c, v.x, v.y, v.z));
        if constexpr (std::is_same_v<T, float>) {
            std::copy(v.data.begin(), v.data.end(), b.sample(static_cast<int>(i)));
        } else {
            auto cast = v.template cast<T>();
            std::copy(cast.data.begin(), cast.data.end(), b.sample(static_cast<int>(i)));
        }
    }
    return b;
}

// Scores + mean loss over a fixed evaluation set, batched.
template <typename T>
void evaluate_items(nn::ResNet3d<T>& model, const std::vector<Item>& items, int batch_size,
                    std::vector<double>& scores, std::vector<bool>& labels,
                    double& mean_loss) {
    scores.clear();
    labels.clear();
    double loss_sum = 0.0;
    std::size_t i = 0;
    while (i < items.size()) {
        std::vector<const Item*> chunk;
        std::vector<int> ys;
        for (; i < items.size() && chunk.size() < static_cast<std::size_t>(batch_size); ++i) {
            chunk.push_back(&items[i]);
            ys.push_back(items[i].label);
        }
        Batch<T> in = make_batch<T>(chunk);
        Batch<T> logits = model.forward(in);
        loss_sum += static_cast<double>(nn::softmax_cross_entropy(logits, ys)) * chunk.size();
        for (int ni = 0; ni < logits.n; ++ni) {
            auto p = nn::softmax_row(logits.data.data() +
                                         static_cast<std::size_t>(ni) * logits.c,
                                     logits.c);
            scores.push_back(static_cast<double>(p[1]));
            labels.push_back(ys[ni] == 1);
        }
    }
    mean_loss = items.empty() ? 0.0 : loss_sum / static_cast<double>(items.size());
}

inline bool has_both_classes(const std::vector<bool>& labels) {
    bool pos = false, neg = false;
    for (bool l : labels) (l ? pos : neg) = true;
    return pos && neg;
}

/// Generic epoch-driven training loop with checkpoint selection and early
/// stopping. `make_epoch_items` produces the (already augmented) training
/// items for a given epoch.
template <typename T, typename MakeEpochItems>
TrainHistory run_training(nn::ResNet3d<T>& model, const std::string& stage_name, int epochs,
                          double lr, const TrainConfig& cfg,
                          MakeEpochItems&& make_epoch_items,
                          const std::vector<Item>& val_items) {
    auto t0 = std::chrono::steady_clock::now();
    TrainHistory hist;

    nn::Adam<T> opt(model.params(), lr, cfg.weight_decay);

    // Selection: best validation AUROC, ties broken by lower validation loss
    // (AUROC saturates early on small validation sets); loss when AUROC is
    // undefined.
    double best_metric = -std::numeric_limits<double>::infinity();
    double best_tiebreak = -std::numeric_limits<double>::infinity();
    std::vector<std::vector<T>> best_params;
    int epochs_since_best = 0;
    bool loss_fallback = false;
    {
        std::vector<bool> vl;
        for (const auto& it : val_items) vl.push_back(it.label == 1);
        loss_fallback = !has_both_classes(vl);
    }

    std::uint64_t stage_key = Rng::mix(std::hash<std::string>{}(stage_name));

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::vector<Item> items = make_epoch_items(epoch);
        if (items.empty()) throw TrainingError(stage_name + ": no training items");

        // deterministic epoch shuffle
        Rng srng = Rng::from_keys({cfg.seed, stage_key, static_cast<std::uint64_t>(epoch),
                                   0x7368756666ull});
        for (std::size_t i = items.size(); i > 1; --i)
            std::swap(items[i - 1], items[srng.uniform_index(i)]);

        double loss_sum = 0.0;
        std::size_t n_seen = 0, i = 0;
        while (i < items.size()) {
            std::vector<const Item*> chunk;
            std::vector<int> ys;
            for (; i < items.size() && chunk.size() < static_cast<std::size_t>(cfg.batch_size);
                 ++i) {
                chunk.push_back(&items[i]);
                ys.push_back(items[i].label);
            }
            Batch<T> in = make_batch<T>(chunk);
            model.zero_grad();
            Batch<T> logits = model.forward(in);
            Batch<T> dlogits;
            T loss = nn::softmax_cross_entropy(logits, ys, &dlogits);
            if (!std::isfinite(static_cast<double>(loss)))
                throw NumericalError(stage_name + ": non-finite loss at epoch " +
                                     std::to_string(epoch));
            model.backward(dlogits);
            opt.step();
            loss_sum += static_cast<double>(loss) * chunk.size();
            n_seen += chunk.size();
        }

        EpochRecord rec;
        rec.stage = stage_name;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train_loss = loss_sum / static_cast<double>(n_seen);

        double metric, tiebreak;
        if (!val_items.empty()) {
            std::vector<double> scores;
            std::vector<bool> labels;
            evaluate_items(model, val_items, cfg.batch_size, scores, labels, rec.val_loss);
            rec.val_auroc = loss_fallback ? std::numeric_limits<double>::quiet_NaN()
                                          : eval::auroc(scores, labels);
            metric = loss_fallback ? -rec.val_loss : rec.val_auroc;
            tiebreak = -rec.val_loss;
        } else {
            rec.val_loss = std::numeric_limits<double>::quiet_NaN();
            rec.val_auroc = std::numeric_limits<double>::quiet_NaN();
            metric = -rec.train_loss;
            tiebreak = metric;
        }
        hist.records.push_back(rec);

        if (metric > best_metric || (metric == best_metric && tiebreak > best_tiebreak)) {
            best_metric = metric;
            best_tiebreak = tiebreak;
            best_params.clear();
            for (auto* p : model.params()) best_params.push_back(p->value);
            hist.selected_epoch = epoch;
            epochs_since_best = 0;
        } else if (++epochs_since_best > cfg.early_stop_patience) {
            break;
        }
    }

    if (!best_params.empty()) {
        auto ps = model.params();
        for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = best_params[i];
    }
    hist.selection_metric =
        val_items.empty() ? "train_loss" : (loss_fallback ? "val_loss" : "val_auroc");
    hist.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return hist;
}

// Fixed validation patch set, drawn once with a dedicated stream.
template <typename T>
std::vector<Item> draw_val_patches(const std::vector<BreastSample>& breasts,
                                   const TrainConfig& cfg) {
    std::vector<Item> items;
    for (std::size_t bi = 0; bi < breasts.size(); ++bi) {
        if (!breasts[bi].has_lesions()) continue;
        for (int pi = 0; pi < cfg.patches_per_breast; ++pi) {
            Rng rng = Rng::from_keys({cfg.seed, 0x76616c70ull, static_cast<std::uint64_t>(bi),
                                      static_cast<std::uint64_t>(pi)});
            auto ps = pipeline::sample_patch(breasts[bi], cfg.patch_shape, rng);
            items.push_back({std::move(ps.patch), ps.label ? 1 : 0});
        }
    }
    return items;
}

}  // namespace detail

/// Stage 1: patch pretraining. Each epoch draws patches_per_breast patches
/// from every lesion-bearing training breast, augments them and trains with
/// cross-entropy at lr_stage1. Returns the history; the model holds the
/// checkpoint with the best validation metric.
template <typename T>
TrainHistory train_stage1(nn::ResNet3d<T>& model, const std::vector<BreastSample>& train_breasts,
                          const std::vector<BreastSample>& val_breasts,
                          const TrainConfig& cfg) {
    cfg.validate();
    if (model.stage_mode() != nn::StageMode::Patch)
        throw StageError("train_stage1 requires a patch-mode model");
    bool any_lesions = false;
    for (const auto& b : train_breasts) any_lesions |= b.has_lesions();
    if (!any_lesions)
        throw TrainingError("train_stage1: no lesion-bearing breasts in the training set");

    auto val_items = detail::draw_val_patches<T>(val_breasts, cfg);

    auto make_items = [&](int epoch) {
        std::vector<detail::Item> items;
        for (std::size_t bi = 0; bi < train_breasts.size(); ++bi) {
            const auto& b = train_breasts[bi];
            if (!b.has_lesions()) continue;  // lesion-free breasts contribute no patches
            for (int pi = 0; pi < cfg.patches_per_breast; ++pi) {
                Rng rng = Rng::from_keys({cfg.seed, 0x733170ull,
                                          static_cast<std::uint64_t>(epoch),
                                          static_cast<std::uint64_t>(bi),
                                          static_cast<std::uint64_t>(pi)});
                auto ps = pipeline::sample_patch(b, cfg.patch_shape, rng);
                if (cfg.augment_enabled)
                    ps = pipeline::augment(ps, rng, cfg.max_rot_degrees, cfg.mirror);
                items.push_back({std::move(ps.patch), ps.label ? 1 : 0});
            }
        }
        return items;
    };

    return detail::run_training(model, "stage1", cfg.epochs_stage1, cfg.lr_stage1, cfg,
                                make_items, val_items);
}

namespace detail {

template <typename T>
TrainHistory train_whole_volume(nn::ResNet3d<T>& model, const std::string& stage_name,
                                const std::vector<BreastSample>& train_breasts,
                                const std::vector<BreastSample>& val_breasts,
                                const TrainConfig& cfg, int epochs, double lr) {
    cfg.validate();
    if (train_breasts.empty()) throw TrainingError(stage_name + ": empty training set");
    if (model.stage_mode() == nn::StageMode::Patch) model.adapt_for_stage2();

    std::vector<Item> val_items;
    for (const auto& b : val_breasts) val_items.push_back({b.volume, b.label ? 1 : 0});

    std::uint64_t stage_key = Rng::mix(std::hash<std::string>{}(stage_name));
    auto make_items = [&](int epoch) {
        std::vector<Item> items;
        for (std::size_t bi = 0; bi < train_breasts.size(); ++bi) {
            const auto& b = train_breasts[bi];
            if (cfg.augment_enabled) {
                Rng rng = Rng::from_keys({cfg.seed, stage_key,
                                          static_cast<std::uint64_t>(epoch),
                                          static_cast<std::uint64_t>(bi)});
                auto p = pipeline::draw_augment_params(rng, cfg.max_rot_degrees, cfg.mirror);
                items.push_back({pipeline::apply_augment(b.volume, p), b.label ? 1 : 0});
            } else {
                items.push_back({b.volume, b.label ? 1 : 0});
            }
        }
        return items;
    };

    return run_training(model, stage_name, epochs, lr, cfg, make_items, val_items);
}

}  // namespace detail

/// Stage 2: whole-volume fine-tuning of the (adapted) pretrained model at
/// lr_stage2. All parameters remain trainable.
template <typename T>
TrainHistory train_stage2(nn::ResNet3d<T>& model, const std::vector<BreastSample>& train_breasts,
                          const std::vector<BreastSample>& val_breasts,
                          const TrainConfig& cfg) {
    return detail::train_whole_volume(model, "stage2", train_breasts, val_breasts, cfg,
                                      cfg.epochs_stage2, cfg.lr_stage2);
}

/// Naive baseline: whole-volume training from random initialization, no
/// Stage 1. Runs for the combined epoch budget so curriculum and naive see
/// the same number of optimization epochs.
template <typename T>
TrainHistory train_naive(nn::ResNet3d<T>& model, const std::vector<BreastSample>& train_breasts,
                         const std::vector<BreastSample>& val_breasts,
                         const TrainConfig& cfg) {
    return detail::train_whole_volume(model, "naive", train_breasts, val_breasts, cfg,
                                      cfg.epochs_stage1 + cfg.epochs_stage2, cfg.lr_naive);
}

/// Full curriculum: Stage 1 on patches, then Stage 2 on whole volumes.
template <typename T>
TrainHistory train_curriculum(nn::ResNet3d<T>& model,
                              const std::vector<BreastSample>& train_breasts,
                              const std::vector<BreastSample>& val_breasts,
                              const TrainConfig& cfg) {
    TrainHistory hist = train_stage1(model, train_breasts, val_breasts, cfg);
    TrainHistory h2 = train_stage2(model, train_breasts, val_breasts, cfg);
    hist.append(h2);
    return hist;
}

/// Softmax probability of the malignant class for a single breast.
template <typename T>
double predict(nn::ResNet3d<T>& model, const BreastSample& breast) {
    detail::Item item{breast.volume, breast.label ? 1 : 0};
    Batch<T> in = detail::make_batch<T>({&item});
    Batch<T> logits = model.forward(in);
    auto p = nn::softmax_row(logits.data.data(), logits.c);
    return static_cast<double>(p[1]);
}

}  // namespace voxcur::train
