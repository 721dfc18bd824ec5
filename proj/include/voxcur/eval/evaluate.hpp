#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxcur/core/errors.hpp"
#include "voxcur/eval/metrics.hpp"
#include "voxcur/nn/resnet3d.hpp"
#include "voxcur/phantom/phantom.hpp"
#include "voxcur/pipeline/pipeline.hpp"
#include "voxcur/train/trainer.hpp"

namespace voxcur::eval {

using nlohmann::json;
using pipeline::BreastSample;

struct PredictionRecord {
    std::string patient_id;
    std::string side;
    double score = 0.0;
    bool label = false;
};

struct FoldResult {
    int fold_index = 0;
    bool metrics_defined = true;  // false when the test set is single-class
    double auroc = 0.0;
    double accuracy = 0.0;
    std::vector<RocPoint> roc;
    std::vector<PredictionRecord> predictions;
};

struct MethodReport {
    std::string method;
    std::size_t parameter_count = 0;
    std::vector<FoldResult> folds;
    double auroc_mean = 0.0, auroc_std = 0.0;
    double accuracy_mean = 0.0, accuracy_std = 0.0;
    int folds_aggregated = 0;
};

struct EvalReport {
    std::vector<MethodReport> methods;
    json config_echo;
};

/// Population (n-divisor) mean/std over the folds with defined metrics.
inline void aggregate_method(MethodReport& m) {
    std::vector<double> aurocs, accs;
    for (const auto& f : m.folds)
        if (f.metrics_defined) {
            aurocs.push_back(f.auroc);
            accs.push_back(f.accuracy);
        }
    m.folds_aggregated = static_cast<int>(aurocs.size());
    auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
        if (v.empty()) {
            mean = sd = 0.0;
            return;
        }
        mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        sd = std::sqrt(var / static_cast<double>(v.size()));
    };
    mean_std(aurocs, m.auroc_mean, m.auroc_std);
    mean_std(accs, m.accuracy_mean, m.accuracy_std);
}

/// Score a set of breasts with a frozen model.
inline FoldResult score_breasts(nn::ResNet3d<float>& model,
                                const std::vector<BreastSample>& breasts, int fold_index) {
    FoldResult fr;
    fr.fold_index = fold_index;
    std::vector<double> scores;
    std::vector<bool> labels;
    for (const auto& b : breasts) {
        double s = train::predict(model, b);
        scores.push_back(s);
        labels.push_back(b.label);
        fr.predictions.push_back({b.patient_id, pipeline::side_name(b.side), s, b.label});
    }
    bool pos = false, neg = false;
    for (bool l : labels) (l ? pos : neg) = true;
    if (pos && neg) {
        fr.auroc = auroc(scores, labels);
        fr.accuracy = accuracy(scores, labels);
        fr.roc = roc_curve(scores, labels);
    } else {
        fr.metrics_defined = false;
    }
    return fr;
}

inline json fold_to_json(const FoldResult& f) {
    json roc = json::array();
    for (const auto& p : f.roc) {
        json thr = std::isinf(p.threshold) ? json(nullptr) : json(p.threshold);
        roc.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", thr}});
    }
    json preds = json::array();
    for (const auto& p : f.predictions)
        preds.push_back({{"patient_id", p.patient_id},
                         {"side", p.side},
                         {"score", p.score},
                         {"label", p.label}});
    return json{{"fold", f.fold_index},
                {"metrics_defined", f.metrics_defined},
                {"auroc", f.metrics_defined ? json(f.auroc) : json(nullptr)},
                {"accuracy", f.metrics_defined ? json(f.accuracy) : json(nullptr)},
                {"roc", roc},
                {"predictions", preds}};
}

inline json report_to_json(const EvalReport& r) {
    json methods = json::array();
    for (const auto& m : r.methods) {
        json folds = json::array();
        for (const auto& f : m.folds) folds.push_back(fold_to_json(f));
        methods.push_back({{"method", m.method},
                           {"parameter_count", m.parameter_count},
                           {"folds", folds},
                           {"folds_aggregated", m.folds_aggregated},
                           {"aggregate",
                            {{"auroc_mean", m.auroc_mean},
                             {"auroc_std", m.auroc_std},
                             {"accuracy_mean", m.accuracy_mean},
                             {"accuracy_std", m.accuracy_std},
                             // population (n-divisor) std over folds
                             {"std_convention", "population"}}}});
    }
    return json{{"format_version", 1}, {"methods", methods}, {"config_echo", r.config_echo}};
}

inline void write_roc_csv(const std::filesystem::path& path, const MethodReport& m) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << "fold,fpr,tpr,threshold\n";
    for (const auto& fold : m.folds)
        for (const auto& p : fold.roc)
            f << fold.fold_index << "," << p.fpr << "," << p.tpr << "," << p.threshold
              << "\n";
}

/// Per-patient preprocessed breasts, keyed by patient id.
using BreastIndex = std::map<std::string, std::pair<BreastSample, BreastSample>>;

inline BreastIndex prepare_dataset(const std::vector<phantom::PatientCase>& cases) {
    BreastIndex index;
    for (const auto& pc : cases) index.emplace(pc.patient_id, pipeline::prepare_case(pc));
    return index;
}

inline std::vector<BreastSample> gather_breasts(const BreastIndex& index,
                                                const std::vector<std::string>& ids) {
    std::vector<BreastSample> out;
    for (const auto& id : ids) {
        auto it = index.find(id);
        if (it == index.end()) throw LookupError("unknown patient id: " + id);
        out.push_back(it->second.first);
        out.push_back(it->second.second);
    }
    return out;
}

struct CvSettings {
    int k = 5;
    std::uint64_t seed = 0;
    bool run_curriculum = true;
    bool run_naive = false;
    int jobs = 1;
};

/// Train and score one method on one fold; returns the fold result and the
/// trained model's history via out-params when requested.
inline FoldResult run_fold(const BreastIndex& index, const FoldSplit& split,
                           const std::string& method, nn::ModelConfig model_cfg,
                           train::TrainConfig train_cfg,
                           train::TrainHistory* history_out = nullptr,
                           std::unique_ptr<nn::ResNet3d<float>>* model_out = nullptr) {
    auto train_b = gather_breasts(index, split.train_patients);
    auto val_b = gather_breasts(index, split.val_patients);
    auto test_b = gather_breasts(index, split.test_patients);

    model_cfg.init_seed = Rng::mix(train_cfg.seed) ^ static_cast<std::uint64_t>(split.fold_index);
    train_cfg.seed = Rng::from_keys({train_cfg.seed,
                                     static_cast<std::uint64_t>(split.fold_index)})
                         .next_u64();
    nn::ResNet3d<float> model(model_cfg);
    train::TrainHistory hist;
    if (method == "curriculum") {
        hist = train::train_curriculum(model, train_b, val_b, train_cfg);
    } else if (method == "naive") {
        hist = train::train_naive(model, train_b, val_b, train_cfg);
    } else {
        throw ArgumentError("unknown method: " + method);
    }
    if (history_out) *history_out = hist;
    if (model_out) *model_out = std::make_unique<nn::ResNet3d<float>>(model);
    return score_breasts(model, test_b, split.fold_index);
}

/// Full k-fold cross-validation over a dataset, Table-1 style.
inline EvalReport evaluate_cv(const std::vector<phantom::PatientCase>& cases,
                              const nn::ModelConfig& model_cfg,
                              const train::TrainConfig& train_cfg, const CvSettings& cv) {
    bool any_pos = false, any_neg = false;
    for (const auto& pc : cases) {
        any_pos |= pc.left_label || pc.right_label;
        any_neg |= !pc.left_label || !pc.right_label;
    }
    if (!any_pos || !any_neg)
        throw ArgumentError("evaluate_cv: dataset must contain both classes at breast level");

    BreastIndex index = prepare_dataset(cases);
    std::vector<std::string> ids;
    for (const auto& [id, _] : index) ids.push_back(id);
    auto folds = make_folds(ids, cv.k, 0.2, cv.seed);

    std::vector<std::string> methods;
    if (cv.run_curriculum) methods.push_back("curriculum");
    if (cv.run_naive) methods.push_back("naive");
    if (methods.empty()) throw ArgumentError("evaluate_cv: no methods selected");

    EvalReport report;
    for (const auto& method : methods) {
        MethodReport mr;
        mr.method = method;
        {
            nn::ModelConfig probe = model_cfg;
            nn::ResNet3d<float> m(probe);
            mr.parameter_count = m.count_parameters();
        }
        mr.folds.resize(folds.size());
        int jobs = std::max(1, cv.jobs);
        std::size_t next = 0;
        while (next < folds.size()) {
            std::vector<std::future<FoldResult>> batch;
            for (int j = 0; j < jobs && next < folds.size(); ++j, ++next)
                batch.push_back(std::async(std::launch::async, [&, next]() {
                    return run_fold(index, folds[next], method, model_cfg, train_cfg);
                }));
            for (auto& fut : batch) {
                FoldResult fr = fut.get();
                mr.folds[fr.fold_index] = std::move(fr);
            }
        }
        aggregate_method(mr);
        report.methods.push_back(std::move(mr));
    }
    return report;
}

namespace detail {

// Trilinear upsampling that tolerates size-1 source axes.
inline Volume<float> upsample_to(const Volume<float>& v, Vec3i target) {
    Volume<float> out(v.c, target.x, target.y, target.z);
    auto coord = [](int di, int dn, int sn) {
        if (dn == 1 || sn == 1) return 0.0;
        return static_cast<double>(di) * (sn - 1) / (dn - 1);
    };
    for (int ci = 0; ci < v.c; ++ci)
        for (int xi = 0; xi < target.x; ++xi)
            for (int yi = 0; yi < target.y; ++yi)
                for (int zi = 0; zi < target.z; ++zi) {
                    double sx = coord(xi, target.x, v.x);
                    double sy = coord(yi, target.y, v.y);
                    double sz = coord(zi, target.z, v.z);
                    int x0 = std::min(static_cast<int>(sx), std::max(0, v.x - 2));
                    int y0 = std::min(static_cast<int>(sy), std::max(0, v.y - 2));
                    int z0 = std::min(static_cast<int>(sz), std::max(0, v.z - 2));
                    double fx = sx - x0, fy = sy - y0, fz = sz - z0;
                    double acc = 0.0;
                    for (int dx = 0; dx < 2; ++dx)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dz = 0; dz < 2; ++dz) {
                                double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) *
                                           (dz ? fz : 1 - fz);
                                if (w == 0.0) continue;
                                acc += w * v.at(ci, std::min(x0 + dx, v.x - 1),
                                                std::min(y0 + dy, v.y - 1),
                                                std::min(z0 + dz, v.z - 1));
                            }
                    out.at(ci, xi, yi, zi) = static_cast<float>(acc);
                }
    return out;
}

}  // namespace detail

/// Unnormalized class activation map at feature-map resolution: the final
/// convolutional maps weighted by the FC row of `class_index`, no rectifier.
template <typename T>
Volume<float> class_activation_map_raw(nn::ResNet3d<T>& model, const BreastSample& breast,
                                       int class_index) {
    if (model.stage_mode() != nn::StageMode::WholeVolume)
        throw StageError("class_activation_map requires a stage-2-adapted model");
    if (class_index < 0 || class_index >= model.config().n_classes)
        throw ArgumentError("class_activation_map: class_index out of range");

    train::detail::Item item{breast.volume, 0};
    Batch<T> in = train::detail::make_batch<T>({&item});
    model.forward(in);
    const Batch<T>& feat = model.last_features();
    const auto& w = model.fc_weight();
    const int c = feat.c;
    const std::size_t sp = feat.spatial_size();

    Volume<float> map(1, feat.x, feat.y, feat.z);
    for (int ci = 0; ci < c; ++ci) {
        T wc = w.value[static_cast<std::size_t>(class_index) * c + ci];
        const T* src = feat.sample(0) + ci * sp;
        for (std::size_t i = 0; i < sp; ++i)
            map.data[i] += static_cast<float>(wc * src[i]);
    }
    return map;
}

/// Class activation map: weighted final-stage feature maps, rectified,
/// trilinearly upsampled to the breast's spatial shape and max-normalized to
/// [0, 1] (an all-zero map stays all-zero).
template <typename T>
Volume<float> class_activation_map(nn::ResNet3d<T>& model, const BreastSample& breast,
                                   int class_index) {
    Volume<float> map = class_activation_map_raw(model, breast, class_index);
    for (auto& v : map.data) v = std::max(v, 0.0f);
    map = detail::upsample_to(map, breast.volume.shape());
    float mx = 0.0f;
    for (float v : map.data) mx = std::max(mx, v);
    if (mx > 0.0f)
        for (auto& v : map.data) v /= mx;
    return map;
}

}  // namespace voxcur::eval
