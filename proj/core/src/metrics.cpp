#include "pyguard/metrics.hpp"

#include "json.hpp"
#include "pyguard/errors.hpp"

#include <algorithm>
#include <numeric>

namespace pyguard {

ConfusionMatrix confusion(std::span<const double> scores, std::span<const int> labels,
                          double threshold) {
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] > threshold;
        const bool actual = labels[i] != 0;
        if (predicted && actual) ++cm.tp;
        else if (predicted) ++cm.fp;
        else if (actual) ++cm.fn;
        else ++cm.tn;
    }
    return cm;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double positive_rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (labels[idx[k]] != 0) {
                positive_rank_sum += avg_rank;
                ++positives;
            }
        }
        i = j;
    }
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) return 0.5;
    const double p = static_cast<double>(positives);
    return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

EvalMetrics metrics_from_scores(std::span<const double> scores, std::span<const int> labels,
                                double threshold) {
    if (scores.empty()) throw EmptyDataset("no examples to evaluate");
    if (scores.size() != labels.size()) throw DimensionMismatch("scores and labels differ in length");
    const ConfusionMatrix cm = confusion(scores, labels, threshold);
    auto ratio = [](std::size_t num, std::size_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    EvalMetrics m;
    m.accuracy = ratio(cm.tp + cm.tn, scores.size());
    m.precision = ratio(cm.tp, cm.tp + cm.fp);
    m.recall = ratio(cm.tp, cm.tp + cm.fn);
    // 2PR/(P+R) from counts, so the result is a single rounding of the exact ratio.
    m.f_score = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn);
    m.roc_auc = roc_auc(scores, labels);
    return m;
}

EvalMetrics evaluate(const BiLstmModel& model, std::span<const LabeledWindow> dataset,
                     double threshold) {
    if (dataset.empty()) throw EmptyDataset("no examples to evaluate");
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(dataset.size());
    labels.reserve(dataset.size());
    for (const LabeledWindow& ex : dataset) {
        scores.push_back(forward(model, ex.window));
        labels.push_back(ex.label > 0.5f ? 1 : 0);
    }
    return metrics_from_scores(scores, labels, threshold);
}

std::string metrics_to_json(const EvalMetrics& m) {
    return nlohmann::json{{"accuracy", m.accuracy},
                          {"f_score", m.f_score},
                          {"precision", m.precision},
                          {"recall", m.recall},
                          {"roc_auc", m.roc_auc}}
        .dump();
}

}  // namespace pyguard
