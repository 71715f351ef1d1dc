#include "msvar/supervision.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace msvar {

namespace {

std::size_t check_labels(const SoftSegmentation& seg, const LabelMap& g) {
    if (g.height() != seg.height() || g.width() != seg.width()) {
        throw InputError("label map " + std::to_string(g.height()) + "x" + std::to_string(g.width()) +
                         " does not match segmentation " + std::to_string(seg.height()) + "x" +
                         std::to_string(seg.width()));
    }
    std::size_t counted = 0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (g[k] == kIgnoreLabel) continue;
        if (g[k] >= seg.num_classes()) {
            throw InputError("label " + std::to_string(g[k]) + " is outside [0, " +
                             std::to_string(seg.num_classes()) + ")");
        }
        ++counted;
    }
    if (counted == 0) throw InputError("every pixel of the label map is ignored");
    return counted;
}

void check_gate(const std::optional<LabelMap>& g, const CombinedLossConfig& cfg) {
    if (cfg.labeled && !g) throw InputError("combined loss: labeled input without a label map");
    if (!cfg.labeled && g) throw InputError("combined loss: label map given for an unlabeled input");
}

}  // namespace

double cross_entropy(const SoftSegmentation& seg, const LabelMap& g) {
    const std::size_t count = check_labels(seg, g);
    double sum = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (g[k] == kIgnoreLabel) continue;
        sum -= std::log(std::max(seg.membership(g[k])[k], kLogFloor));
    }
    return sum / static_cast<double>(count);
}

std::vector<ScalarField> cross_entropy_grad(const SoftSegmentation& seg, const LabelMap& g) {
    const std::size_t count = check_labels(seg, g);
    const double scale = 1.0 / static_cast<double>(count);
    std::vector<ScalarField> grad(seg.num_classes(), ScalarField(seg.height(), seg.width()));
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (g[k] == kIgnoreLabel) continue;
        // the floor is flat, so clamped pixels contribute nothing
        if (seg.membership(g[k])[k] <= kLogFloor) continue;
        for (std::size_t n = 0; n < seg.num_classes(); ++n) {
            grad[n][k] = scale * (seg.membership(n)[k] - (n == g[k] ? 1.0 : 0.0));
        }
    }
    return grad;
}

void CombinedLossConfig::validate() const {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ParameterError("beta must be >= 0");
}

CombinedLoss combined_loss(const Image& x, const SoftSegmentation& seg, const std::optional<LabelMap>& g,
                           const CombinedLossConfig& cfg, const MsConfig& ms_cfg) {
    cfg.validate();
    check_gate(g, cfg);
    CombinedLoss out;
    out.ms = ms_loss(x, seg, ms_cfg).loss;
    if (cfg.labeled) out.ce = cross_entropy(seg, *g);
    out.total = (cfg.labeled ? out.ce : 0.0) + cfg.beta * out.ms;
    return out;
}

std::vector<ScalarField> combined_loss_grad(const Image& x, const SoftSegmentation& seg,
                                            const std::optional<LabelMap>& g, const CombinedLossConfig& cfg,
                                            const MsConfig& ms_cfg) {
    cfg.validate();
    check_gate(g, cfg);
    auto grad = ms_loss_grad(x, seg, ms_cfg, ms_cfg.mode);
    for (auto& f : grad) {
        for (double& v : f.values()) v *= cfg.beta;
    }
    if (cfg.labeled) {
        const auto ce = cross_entropy_grad(seg, *g);
        for (std::size_t n = 0; n < grad.size(); ++n) {
            for (std::size_t k = 0; k < grad[n].size(); ++k) grad[n][k] += ce[n][k];
        }
    }
    return grad;
}

MsResult minimize_combined(const Image& x, const std::optional<LabelMap>& g, const CombinedLossConfig& cfg,
                           const MsConfig& ms_cfg, InitKind init) {
    ms_cfg.validate();
    cfg.validate();
    check_gate(g, cfg);
    auto z = init == InitKind::KMeans ? kmeans_logits(x, ms_cfg.num_classes, ms_cfg.seed)
                                      : random_logits(x.height(), x.width(), ms_cfg.num_classes, ms_cfg.seed);
    SoftSegmentation start(std::move(z));
    if (g) check_labels(start, *g);

    const LogitObjective objective{
        [&](const SoftSegmentation& seg) {
            const CombinedLoss l = combined_loss(x, seg, g, cfg, ms_cfg);
            return TraceRow{0, l.total, l.ce, cfg.beta * l.ms, 0.0};
        },
        [&](const SoftSegmentation& seg) { return combined_loss_grad(x, seg, g, cfg, ms_cfg); },
    };
    DescentOutcome outcome = descend_logits(std::move(start), objective, ms_cfg);
    Centroids c = soft_centroids(x, outcome.segmentation.memberships());
    MsResult result{std::move(outcome.segmentation), std::move(c), std::move(outcome.trace), outcome.converged};
    if (outcome.stalled) {
        throw SolverFailure<MsResult>("minimize_combined: backtracking exhausted without a non-increasing step",
                                      std::move(result));
    }
    return result;
}

}  // namespace msvar
