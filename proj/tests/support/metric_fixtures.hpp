#pragma once

#include <vector>

namespace pyguard::testing {

// Score fixtures with metrics computed by hand at threshold 0.5 (a score equal
// to the threshold is negative) and cross-checked with scikit-learn
// (accuracy_score, precision/recall/f1 with zero_division=0, roc_auc_score).
// AUC is 0.5 when one class is absent.
struct MetricFixture {
    const char* name;
    std::vector<double> pos;
    std::vector<double> neg;
    double accuracy, precision, recall, f_score, roc_auc;
};

inline const std::vector<MetricFixture>& metric_fixtures() {
    static const std::vector<MetricFixture> fixtures = {
        {"half_right", {0.9, 0.4}, {0.6, 0.1}, 0.5, 0.5, 0.5, 0.5, 0.75},
        {"perfect", {0.8, 0.9}, {0.1, 0.2}, 1.0, 1.0, 1.0, 1.0, 1.0},
        {"inverted", {0.1, 0.2}, {0.8, 0.9}, 0.0, 0.0, 0.0, 0.0, 0.0},
        {"ranked_but_low", {0.3, 0.4}, {0.1, 0.2}, 0.5, 0.0, 0.0, 0.0, 1.0},
        {"threshold_tie", {0.5, 0.7}, {0.5, 0.2}, 0.75, 1.0, 0.5, 2.0 / 3.0, 0.875},
        {"all_tied", {0.6, 0.6}, {0.6}, 2.0 / 3.0, 2.0 / 3.0, 1.0, 0.8, 0.5},
        {"positives_only", {0.9, 0.2}, {}, 0.5, 1.0, 0.5, 2.0 / 3.0, 0.5},
        {"one_positive", {0.9}, {0.8, 0.3, 0.2, 0.1}, 0.8, 0.5, 1.0, 2.0 / 3.0, 1.0},
        {"interleaved", {0.95, 0.85, 0.55, 0.45, 0.35}, {0.75, 0.65, 0.25, 0.15, 0.05},
         0.6, 0.6, 0.6, 0.6, 0.76},
        {"ties_below", {0.7, 0.3, 0.3}, {0.3, 0.3, 0.1}, 2.0 / 3.0, 1.0, 1.0 / 3.0, 0.5, 7.0 / 9.0},
    };
    return fixtures;
}

}  // namespace pyguard::testing
