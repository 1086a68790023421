// metrics.hpp
//
// Mask IoU, precision/recall/F1 of the presence gate, F1-optimal threshold
// search and top-k caption accuracy.

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "agm/image.hpp"
#include "agm/nn/tensor.hpp"
#include "json.hpp"

namespace agm::eval
{

/// |a & b| / |a | b|; 1 when both are empty. Throws DimensionError.
double iou(const Mask& pred, const Mask& truth);

struct ScoredSample
{
    std::string id;
    double score = 0.0;
    bool correct = false;
};

struct PrF1
{
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Present iff score >= threshold. Throws ValueError for an empty list.
PrF1 pr_f1(const std::vector<ScoredSample>& samples, double threshold);

struct ThresholdRow
{
    double threshold = 0.0;
    PrF1 metrics;
};

struct ThresholdReport
{
    double threshold = 0.0;
    double f1 = 0.0;
    std::vector<ThresholdRow> table;  ///< ascending threshold
};

/// Sweeps the distinct observed scores; best F1, ties to the smallest threshold.
ThresholdReport optimal_threshold(const std::vector<ScoredSample>& samples);

/// Fraction of rows whose label ranks in the top k (ties: lower index first).
/// scores is N x C. Throws DimensionError or ValueError.
double topk_accuracy(const nn::Tensor& scores, const std::vector<std::size_t>& labels, std::size_t k);

/// Round to 6 decimals so reports are byte-stable.
double round6(double v);

nlohmann::json to_json(const ThresholdReport& r);

}  // namespace agm::eval
