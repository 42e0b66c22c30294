#pragma once

#include "pyguard/neuralnet.hpp"

#include <cstddef>
#include <span>

namespace pyguard {

struct EvalMetrics {
    double accuracy = 0.0;
    double f_score = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double roc_auc = 0.0;

    bool operator==(const EvalMetrics&) const = default;
};

struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// A score strictly above `threshold` is a positive prediction; a score equal
/// to the threshold counts as negative.
ConfusionMatrix confusion(std::span<const double> scores, std::span<const int> labels,
                          double threshold);

/**
 * Mann-Whitney rank statistic with average ranks for ties. Returns 0.5 when
 * either class is absent.
 */
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Throws EmptyDataset for empty input, DimensionMismatch for unequal spans.
EvalMetrics metrics_from_scores(std::span<const double> scores, std::span<const int> labels,
                                double threshold = 0.5);

/// Scores every window with inference-mode forward passes.
EvalMetrics evaluate(const BiLstmModel& model, std::span<const LabeledWindow> dataset,
                     double threshold = 0.5);

std::string metrics_to_json(const EvalMetrics& m);

}  // namespace pyguard
