#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "voxcur/core/rng.hpp"
#include "voxcur/eval/metrics.hpp"

using namespace voxcur;
using namespace voxcur::eval;

namespace {

// Independent oracle: brute-force pairwise counting, ties as 1/2.
double auroc_bruteforce(const std::vector<double>& s, const std::vector<bool>& l) {
    double wins = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!l[i]) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (l[j]) continue;
            ++pairs;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

void random_instance(Rng& rng, std::vector<double>& s, std::vector<bool>& l) {
    int n = 2 + static_cast<int>(rng.uniform_index(49));
    s.clear();
    l.clear();
    for (int i = 0; i < n; ++i) {
        // quantized scores so ties actually occur
        s.push_back(rng.uniform_index(10) / 10.0);
        l.push_back(rng.bernoulli(0.5));
    }
    // guarantee both classes
    l[0] = true;
    if (n > 1) l[1] = false;
}

}  // namespace

TEST_CASE("auroc basics") {
    CHECK(auroc({0.9, 0.8}, {true, false}) == 1.0);
    CHECK(auroc({0.5, 0.5, 0.5}, {true, false, true}) == 0.5);
    CHECK(auroc({0.1, 0.4, 0.35, 0.8}, {false, false, true, true}) == doctest::Approx(0.75));
    CHECK_THROWS_AS(auroc({0.1, 0.2}, {true, true}), UndefinedMetricError);
}

TEST_CASE("auroc equals brute-force pairwise counting on 100 random instances") {
    Rng rng(42);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> s;
        std::vector<bool> l;
        random_instance(rng, s, l);
        CHECK(std::abs(auroc(s, l) - auroc_bruteforce(s, l)) < 1e-12);
    }
}

TEST_CASE("auroc invariant under strictly monotone transforms") {
    Rng rng(7);
    for (int t = 0; t < 30; ++t) {
        std::vector<double> s;
        std::vector<bool> l;
        random_instance(rng, s, l);
        std::vector<double> s2(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) s2[i] = std::exp(3.0 * s[i]) - 1.0;
        CHECK(auroc(s, l) == doctest::Approx(auroc(s2, l)).epsilon(1e-12));
    }
}

TEST_CASE("auroc(s) + auroc(-s) = 1 for tie-free scores") {
    Rng rng(9);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> s;
        std::vector<bool> l;
        int n = 5 + static_cast<int>(rng.uniform_index(30));
        for (int i = 0; i < n; ++i) {
            s.push_back(rng.uniform());  // continuous, ties have measure zero
            l.push_back(rng.bernoulli(0.5));
        }
        l[0] = true;
        l[1] = false;
        std::vector<double> neg(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) neg[i] = -s[i];
        CHECK(auroc(s, l) + auroc(neg, l) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("accuracy") {
    CHECK(accuracy({0.9, 0.1}, {true, false}) == 1.0);
    CHECK(accuracy({0.1, 0.9}, {true, false}) == 0.0);
    CHECK(accuracy({0.6, 0.4, 0.7}, {true, true, false}) == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(accuracy({}, {}), ArgumentError);
}

TEST_CASE("roc_curve endpoints and perfect separation") {
    auto pts = roc_curve({0.9, 0.1}, {true, false});
    CHECK(pts.front().fpr == 0.0);
    CHECK(pts.front().tpr == 0.0);
    CHECK(pts.back().fpr == 1.0);
    CHECK(pts.back().tpr == 1.0);
    bool through_0_1 = false;
    for (const auto& p : pts) through_0_1 |= (p.fpr == 0.0 && p.tpr == 1.0);
    CHECK(through_0_1);
}

TEST_CASE("roc_curve with all ties is the diagonal endpoints") {
    auto pts = roc_curve({0.5, 0.5, 0.5, 0.5}, {true, false, true, false});
    REQUIRE(pts.size() == 2);
    CHECK(pts[1].fpr == 1.0);
    CHECK(pts[1].tpr == 1.0);
    CHECK(trapezoid_area(pts) == doctest::Approx(0.5));
}

TEST_CASE("roc_curve is monotone and its trapezoid area equals auroc") {
    Rng rng(11);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> s;
        std::vector<bool> l;
        random_instance(rng, s, l);
        auto pts = roc_curve(s, l);
        for (std::size_t i = 1; i < pts.size(); ++i) {
            CHECK(pts[i].fpr >= pts[i - 1].fpr);
            CHECK(pts[i].tpr >= pts[i - 1].tpr);
        }
        CHECK(std::abs(trapezoid_area(pts) - auroc(s, l)) < 1e-9);
    }
    CHECK_THROWS_AS(roc_curve({0.1}, {true}), UndefinedMetricError);
}

namespace {

std::vector<std::string> synthetic_ids(int n) {
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "p%04d", i);
        ids.emplace_back(buf);
    }
    return ids;
}

}  // namespace

TEST_CASE("make_folds reproduces the 408-patient split sizes") {
    auto folds = make_folds(synthetic_ids(408), 5, 0.2, 3);
    REQUIRE(folds.size() == 5);
    for (const auto& f : folds) {
        CHECK((f.test_patients.size() == 81 || f.test_patients.size() == 82));
        CHECK(f.val_patients.size() == 65);
        CHECK(f.train_patients.size() >= 261);
        CHECK(f.train_patients.size() <= 262);
        CHECK(f.train_patients.size() + f.val_patients.size() + f.test_patients.size() == 408);
    }
}

TEST_CASE("make_folds: test sets partition the universe") {
    auto ids = synthetic_ids(103);
    auto folds = make_folds(ids, 5, 0.2, 1);
    std::set<std::string> all;
    std::size_t total = 0;
    for (const auto& f : folds) {
        total += f.test_patients.size();
        for (const auto& id : f.test_patients) all.insert(id);
        // per-fold disjointness of train/val/test
        std::set<std::string> fold_all(f.train_patients.begin(), f.train_patients.end());
        for (const auto& id : f.val_patients) CHECK(fold_all.insert(id).second);
        for (const auto& id : f.test_patients) CHECK(fold_all.insert(id).second);
        CHECK(fold_all.size() == ids.size());
    }
    CHECK(all.size() == ids.size());
    CHECK(total == ids.size());
}

TEST_CASE("make_folds: 10 patients, k=5 gives test sets of 2") {
    auto folds = make_folds(synthetic_ids(10), 5, 0.2, 0);
    for (const auto& f : folds) CHECK(f.test_patients.size() == 2);
}

TEST_CASE("make_folds is deterministic in the seed") {
    auto a = make_folds(synthetic_ids(50), 5, 0.2, 123);
    auto b = make_folds(synthetic_ids(50), 5, 0.2, 123);
    for (int f = 0; f < 5; ++f) {
        CHECK(a[f].test_patients == b[f].test_patients);
        CHECK(a[f].train_patients == b[f].train_patients);
        CHECK(a[f].val_patients == b[f].val_patients);
    }
    auto c = make_folds(synthetic_ids(50), 5, 0.2, 124);
    bool any_diff = false;
    for (int f = 0; f < 5; ++f) any_diff |= a[f].test_patients != c[f].test_patients;
    CHECK(any_diff);
}

TEST_CASE("make_folds rejects bad arguments") {
    CHECK_THROWS_AS(make_folds(synthetic_ids(3), 5), ArgumentError);
    CHECK_THROWS_AS(make_folds(synthetic_ids(10), 1), ArgumentError);
}
