#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "msvar/errors.hpp"
#include "msvar/labels.hpp"

namespace msvar {

/// Pixel counts of a prediction against ground truth. Pixels where either
/// map holds kIgnoreLabel are skipped.
struct ConfusionCounts {
    std::size_t num_pred = 0;  ///< rows of the contingency table
    std::size_t num_gt = 0;    ///< columns
    std::vector<std::uint64_t> table;  ///< table[p * num_gt + g]
    std::uint64_t total = 0;

    std::uint64_t operator()(std::size_t p, std::size_t g) const { return table[p * num_gt + g]; }

    /// One-vs-rest counts for class `c`.
    std::uint64_t tp(std::size_t c) const;
    std::uint64_t fp(std::size_t c) const;
    std::uint64_t fn(std::size_t c) const;
    std::uint64_t tn(std::size_t c) const;
};

/// Throws InputError when the maps differ in shape.
ConfusionCounts confusion_counts(const LabelMap& pred, const LabelMap& gt);

struct OverlapMetrics {
    double iou = 0.0;
    double dice = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

/// Binary overlap for `positive_class`. A ratio with a zero denominator is
/// 1 when both masks are empty and 0 otherwise.
OverlapMetrics overlap_metrics(const LabelMap& pred, const LabelMap& gt, std::size_t positive_class);

struct ClusteringMetrics {
    double rc = 0.0;   ///< region covering of gt by pred, regions by label
    double pri = 0.0;  ///< fraction of agreeing pixel pairs
    double vi = 0.0;   ///< variation of information, nats
};

ClusteringMetrics clustering_metrics(const LabelMap& pred, const LabelMap& gt);

}  // namespace msvar
