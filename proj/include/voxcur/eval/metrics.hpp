#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "voxcur/core/errors.hpp"
#include "voxcur/core/rng.hpp"

namespace voxcur::eval {

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counted as 1/2.
/// Computed via midranks in O(n log n).
inline double auroc(const std::vector<double>& scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size())
        throw ArgumentError("auroc: scores/labels size mismatch");
    std::size_t n_pos = 0;
    for (bool l : labels) n_pos += l;
    std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw UndefinedMetricError("auroc: needs at least one positive and one negative");

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (labels[idx[k]]) rank_sum_pos += midrank;
        i = j;
    }
    double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1) / 2.0) / (np * nn);
}

/// Fraction of correct predictions at a fixed threshold (score >= threshold
/// predicts positive).
inline double accuracy(const std::vector<double>& scores, const std::vector<bool>& labels,
                       double threshold = 0.5) {
    if (scores.empty()) throw ArgumentError("accuracy: empty input");
    if (scores.size() != labels.size())
        throw ArgumentError("accuracy: scores/labels size mismatch");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        correct += (scores[i] >= threshold) == labels[i];
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

struct RocPoint {
    double fpr, tpr, threshold;
};

/// ROC curve over the distinct score values (plus a +inf sentinel), from
/// (0,0) to (1,1). The trapezoidal area under the returned points equals
/// auroc() including tie handling.
inline std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                       const std::vector<bool>& labels) {
    std::size_t n_pos = 0;
    for (bool l : labels) n_pos += l;
    std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw UndefinedMetricError("roc_curve: needs both classes");

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::vector<RocPoint> pts;
    pts.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        double s = scores[idx[i]];
        while (j < idx.size() && scores[idx[j]] == s) {
            if (labels[idx[j]]) ++tp;
            else ++fp;
            ++j;
        }
        pts.push_back({static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos, s});
        i = j;
    }
    return pts;
}

inline double trapezoid_area(const std::vector<RocPoint>& pts) {
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        area += (pts[i].fpr - pts[i - 1].fpr) * (pts[i].tpr + pts[i - 1].tpr) / 2.0;
    return area;
}

struct FoldSplit {
    int fold_index = 0;
    std::vector<std::string> train_patients, val_patients, test_patients;
};

/// Patient-level k-fold splits. Fold i's test set is the i-th chunk of one
/// seeded shuffle; the remaining patients are split train/val so that for
/// k=5 and val fraction 0.2 the paper's 64/16/20 proportions come out.
inline std::vector<FoldSplit> make_folds(std::vector<std::string> patient_ids, int k = 5,
                                         double val_fraction_of_trainval = 0.2,
                                         std::uint64_t seed = 0) {
    if (k < 2) throw ArgumentError("make_folds: k must be >= 2");
    if (static_cast<std::size_t>(k) > patient_ids.size())
        throw ArgumentError("make_folds: k exceeds the number of patients");
    if (val_fraction_of_trainval < 0.0 || val_fraction_of_trainval >= 1.0)
        throw ArgumentError("make_folds: val fraction must lie in [0, 1)");

    std::sort(patient_ids.begin(), patient_ids.end());
    Rng rng = Rng::from_keys({seed, 0x666f6c6473ull});
    for (std::size_t i = patient_ids.size(); i > 1; --i)
        std::swap(patient_ids[i - 1], patient_ids[rng.uniform_index(i)]);

    const std::size_t n = patient_ids.size();
    std::vector<FoldSplit> folds;
    std::size_t start = 0;
    for (int f = 0; f < k; ++f) {
        std::size_t sz = n / k + (static_cast<std::size_t>(f) < n % k ? 1 : 0);
        FoldSplit fs;
        fs.fold_index = f;
        fs.test_patients.assign(patient_ids.begin() + start, patient_ids.begin() + start + sz);
        std::vector<std::string> rest;
        rest.reserve(n - sz);
        rest.insert(rest.end(), patient_ids.begin(), patient_ids.begin() + start);
        rest.insert(rest.end(), patient_ids.begin() + start + sz, patient_ids.end());
        // deterministic per-fold shuffle of the train/val pool
        Rng frng = Rng::from_keys({seed, static_cast<std::uint64_t>(f), 0x76616cull});
        for (std::size_t i = rest.size(); i > 1; --i)
            std::swap(rest[i - 1], rest[frng.uniform_index(i)]);
        std::size_t n_val = static_cast<std::size_t>(
            std::lround(val_fraction_of_trainval * static_cast<double>(rest.size())));
        fs.val_patients.assign(rest.begin(), rest.begin() + n_val);
        fs.train_patients.assign(rest.begin() + n_val, rest.end());
        folds.push_back(std::move(fs));
        start += sz;
    }
    return folds;
}

}  // namespace voxcur::eval
