// metrics.cpp

#include "agm/eval/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "agm/error.hpp"

namespace agm::eval
{

double iou(const Mask& pred, const Mask& truth)
{
    if (pred.width() != truth.width() || pred.height() != truth.height())
        throw DimensionError("iou: mask sizes differ (" + std::to_string(pred.width()) + "x" +
                             std::to_string(pred.height()) + " vs " + std::to_string(truth.width()) + "x" +
                             std::to_string(truth.height()) + ")");
    const auto a = pred.words();
    const auto b = truth.words();
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        inter += static_cast<std::size_t>(std::popcount(a[i] & b[i]));
        uni += static_cast<std::size_t>(std::popcount(a[i] | b[i]));
    }
    if (uni == 0)
        return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

PrF1 pr_f1(const std::vector<ScoredSample>& samples, double threshold)
{
    if (samples.empty())
        throw ValueError("pr_f1: no samples");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& s : samples)
    {
        const bool present = s.score >= threshold;
        if (present && s.correct)
            ++tp;
        else if (present)
            ++fp;
        else if (s.correct)
            ++fn;
    }
    PrF1 r;
    r.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    r.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double pr = r.precision + r.recall;
    r.f1 = pr == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / pr;
    return r;
}

ThresholdReport optimal_threshold(const std::vector<ScoredSample>& samples)
{
    if (samples.empty())
        throw ValueError("optimal_threshold: no samples");
    std::vector<double> candidates;
    for (const auto& s : samples)
    {
        if (!std::isfinite(s.score))
            throw ValueError("optimal_threshold: non-finite score for '" + s.id + "'");
        candidates.push_back(s.score);
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    ThresholdReport report;
    report.f1 = -1.0;
    for (double t : candidates)
    {
        const PrF1 m = pr_f1(samples, t);
        report.table.push_back({t, m});
        if (m.f1 > report.f1)
        {
            report.f1 = m.f1;
            report.threshold = t;
        }
    }
    return report;
}

double topk_accuracy(const nn::Tensor& scores, const std::vector<std::size_t>& labels, std::size_t k)
{
    if (scores.shape().size() != 2)
        throw DimensionError("topk_accuracy: scores must be N x C");
    const std::size_t n = scores.shape()[0], c = scores.shape()[1];
    if (labels.size() != n)
        throw DimensionError("topk_accuracy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                             " rows");
    if (n == 0)
        throw ValueError("topk_accuracy: no samples");
    if (k < 1)
        throw ValueError("topk_accuracy: k must be >= 1");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i)
    {
        const std::size_t label = labels[i];
        if (label >= c)
            throw DimensionError("topk_accuracy: label " + std::to_string(label) + " >= caption count " +
                                 std::to_string(c));
        const double* row = scores.data().data() + i * c;
        // rank = captions ordered strictly before the label
        std::size_t rank = 0;
        for (std::size_t j = 0; j < c; ++j)
            if (row[j] > row[label] || (row[j] == row[label] && j < label))
                ++rank;
        if (rank < k)
            ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

double round6(double v)
{
    const double r = std::round(v * 1e6) / 1e6;
    return r == 0.0 ? 0.0 : r;
}

nlohmann::json to_json(const ThresholdReport& r)
{
    nlohmann::json table = nlohmann::json::array();
    for (const auto& row : r.table)
        table.push_back({{"threshold", round6(row.threshold)},
                         {"precision", round6(row.metrics.precision)},
                         {"recall", round6(row.metrics.recall)},
                         {"f1", round6(row.metrics.f1)}});
    return {{"threshold", round6(r.threshold)}, {"f1", round6(r.f1)}, {"table", table}};
}

}  // namespace agm::eval
