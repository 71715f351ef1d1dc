#include "msvar/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "msvar/errors.hpp"

namespace msvar {

namespace {

double ratio(std::uint64_t num, std::uint64_t den, bool both_empty) {
    if (den == 0) return both_empty ? 1.0 : 0.0;
    return static_cast<double>(num) / static_cast<double>(den);
}

double pairs(std::uint64_t n) { return 0.5 * static_cast<double>(n) * (static_cast<double>(n) - 1.0); }

}  // namespace

std::uint64_t ConfusionCounts::tp(std::size_t c) const {
    return c < num_pred && c < num_gt ? (*this)(c, c) : 0;
}

std::uint64_t ConfusionCounts::fp(std::size_t c) const {
    if (c >= num_pred) return 0;
    std::uint64_t row = 0;
    for (std::size_t g = 0; g < num_gt; ++g) row += (*this)(c, g);
    return row - tp(c);
}

std::uint64_t ConfusionCounts::fn(std::size_t c) const {
    if (c >= num_gt) return 0;
    std::uint64_t col = 0;
    for (std::size_t p = 0; p < num_pred; ++p) col += (*this)(p, c);
    return col - tp(c);
}

std::uint64_t ConfusionCounts::tn(std::size_t c) const { return total - tp(c) - fp(c) - fn(c); }

ConfusionCounts confusion_counts(const LabelMap& pred, const LabelMap& gt) {
    if (!pred.same_shape(gt)) {
        throw InputError("label maps differ in shape: " + std::to_string(pred.height()) + "x" +
                         std::to_string(pred.width()) + " vs " + std::to_string(gt.height()) + "x" +
                         std::to_string(gt.width()));
    }
    ConfusionCounts counts;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        if (pred[k] == kIgnoreLabel || gt[k] == kIgnoreLabel) continue;
        counts.num_pred = std::max<std::size_t>(counts.num_pred, pred[k] + 1u);
        counts.num_gt = std::max<std::size_t>(counts.num_gt, gt[k] + 1u);
    }
    counts.table.assign(counts.num_pred * counts.num_gt, 0);
    for (std::size_t k = 0; k < pred.size(); ++k) {
        if (pred[k] == kIgnoreLabel || gt[k] == kIgnoreLabel) continue;
        ++counts.table[pred[k] * counts.num_gt + gt[k]];
        ++counts.total;
    }
    return counts;
}

OverlapMetrics overlap_metrics(const LabelMap& pred, const LabelMap& gt, std::size_t positive_class) {
    const ConfusionCounts c = confusion_counts(pred, gt);
    const std::uint64_t tp = c.tp(positive_class);
    const std::uint64_t fp = c.fp(positive_class);
    const std::uint64_t fn = c.fn(positive_class);
    const bool pred_empty = tp + fp == 0;
    const bool gt_empty = tp + fn == 0;
    const bool both_empty = pred_empty && gt_empty;
    OverlapMetrics m;
    m.iou = ratio(tp, tp + fp + fn, both_empty);
    m.dice = ratio(2 * tp, 2 * tp + fp + fn, both_empty);
    m.precision = ratio(tp, tp + fp, both_empty);
    m.recall = ratio(tp, tp + fn, both_empty);
    return m;
}

ClusteringMetrics clustering_metrics(const LabelMap& pred, const LabelMap& gt) {
    const ConfusionCounts c = confusion_counts(pred, gt);
    if (c.total == 0) throw InputError("clustering_metrics: every pixel is ignored");
    std::vector<std::uint64_t> row(c.num_pred, 0);
    std::vector<std::uint64_t> col(c.num_gt, 0);
    for (std::size_t p = 0; p < c.num_pred; ++p) {
        for (std::size_t g = 0; g < c.num_gt; ++g) {
            row[p] += c(p, g);
            col[g] += c(p, g);
        }
    }
    const double n = static_cast<double>(c.total);

    ClusteringMetrics m;
    for (std::size_t g = 0; g < c.num_gt; ++g) {
        if (col[g] == 0) continue;
        double best = 0.0;
        for (std::size_t p = 0; p < c.num_pred; ++p) {
            const std::uint64_t inter = c(p, g);
            if (inter == 0) continue;
            best = std::max(best, static_cast<double>(inter) / static_cast<double>(row[p] + col[g] - inter));
        }
        m.rc += static_cast<double>(col[g]) * best;
    }
    m.rc /= n;

    const double total_pairs = pairs(c.total);
    if (total_pairs == 0.0) {
        m.pri = 1.0;
    } else {
        double same_pred = 0.0;
        double same_gt = 0.0;
        double same_both = 0.0;
        for (auto r : row) same_pred += pairs(r);
        for (auto q : col) same_gt += pairs(q);
        for (auto v : c.table) same_both += pairs(v);
        m.pri = (total_pairs - same_pred - same_gt + 2.0 * same_both) / total_pairs;
    }

    auto entropy = [n](const std::vector<std::uint64_t>& counts) {
        double h = 0.0;
        for (auto v : counts) {
            if (v == 0) continue;
            const double p = static_cast<double>(v) / n;
            h -= p * std::log(p);
        }
        return h;
    };
    double mutual = 0.0;
    for (std::size_t p = 0; p < c.num_pred; ++p) {
        for (std::size_t g = 0; g < c.num_gt; ++g) {
            const std::uint64_t v = c(p, g);
            if (v == 0) continue;
            const double pj = static_cast<double>(v) / n;
            mutual += pj * std::log(pj * n * n / (static_cast<double>(row[p]) * static_cast<double>(col[g])));
        }
    }
    m.vi = std::max(0.0, entropy(row) + entropy(col) - 2.0 * mutual);
    return m;
}

}  // namespace msvar
