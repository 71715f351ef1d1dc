#pragma once

#include <optional>
#include <vector>

#include "msvar/grid.hpp"
#include "msvar/labels.hpp"
#include "msvar/soft_seg.hpp"

namespace msvar {

/// Floor applied to the true-class probability inside the log.
inline constexpr double kLogFloor = 1e-12;

/// Mean over non-ignored pixels of -log(max(y_g, kLogFloor)), g the
/// ground-truth class. Throws InputError on shape mismatch, labels outside
/// [0, N) other than kIgnoreLabel, or when every pixel is ignored.
double cross_entropy(const SoftSegmentation& seg, const LabelMap& g);

/// Gradient of cross_entropy with respect to the logits.
std::vector<ScalarField> cross_entropy_grad(const SoftSegmentation& seg, const LabelMap& g);

struct CombinedLossConfig {
    double beta = 1e-7;    ///< weight of the Mumford-Shah term
    bool labeled = false;  ///< alpha = 1 when set, 0 otherwise

    void validate() const;
};

struct CombinedLoss {
    double total = 0.0;
    double ce = 0.0;  ///< 0 for unlabeled inputs
    double ms = 0.0;
};

/// total = alpha * CE + beta * ms_loss. Throws InputError unless `g` is
/// present exactly when cfg.labeled is set.
CombinedLoss combined_loss(const Image& x, const SoftSegmentation& seg, const std::optional<LabelMap>& g,
                           const CombinedLossConfig& cfg, const MsConfig& ms_cfg);

std::vector<ScalarField> combined_loss_grad(const Image& x, const SoftSegmentation& seg,
                                            const std::optional<LabelMap>& g, const CombinedLossConfig& cfg,
                                            const MsConfig& ms_cfg);

/// Logit descent on combined_loss with the same line search and stopping
/// rule as minimize_ms. The trace reports the total as loss, CE as
/// data_term and the weighted MS loss as tv_term.
MsResult minimize_combined(const Image& x, const std::optional<LabelMap>& g, const CombinedLossConfig& cfg,
                           const MsConfig& ms_cfg, InitKind init = InitKind::Random);

}  // namespace msvar
