#pragma once

#include <cstddef>

#include "msvar/grid.hpp"
#include "msvar/soft_seg.hpp"

namespace msvar {

/// Admissible range of the multiplicative bias; updates are clamped to it.
inline constexpr double kBiasMin = 0.05;
inline constexpr double kBiasMax = 20.0;

/// Per-pixel multiplier shared by all channels, with its TV weight.
struct BiasField {
    ScalarField b;
    double gamma = 0.1;
};

/// Bias-weighted class means: sum(b x y_n) / (sum(b^2 y_n) + eps).
Centroids bias_centroids(const Image& x, std::span<const ScalarField> memberships, const ScalarField& b);

struct BiasMsLoss {
    double loss = 0.0;
    double data_term = 0.0;  ///< sum_n sum_r |x - b c_n|^2 y_n
    double tv_y_term = 0.0;  ///< lambda * sum_n TV(y_n)
    double tv_b_term = 0.0;  ///< gamma * TV(b)
};

BiasMsLoss bias_ms_loss(const Image& x, const SoftSegmentation& seg, const BiasField& bias, const MsConfig& cfg);
BiasMsLoss bias_ms_loss(const Image& x, const SoftSegmentation& seg, const BiasField& bias, const MsConfig& cfg,
                        const Centroids& centroids);

/// Gradient of bias_ms_loss with respect to the logits.
std::vector<ScalarField> bias_ms_loss_grad_logits(const Image& x, const SoftSegmentation& seg, const BiasField& bias,
                                                  const MsConfig& cfg, GradientMode mode);

/// Gradient of bias_ms_loss with respect to b, including the TV(b) adjoint.
ScalarField bias_ms_loss_grad_bias(const Image& x, const SoftSegmentation& seg, const BiasField& bias,
                                   const MsConfig& cfg, GradientMode mode);

/// Scalar field b with a matching per-pixel weight w such that
///   sum_n y_n |x - b c_n|^2 = w (b - target)^2 + const(b)
/// for fixed memberships and centroids.
struct BiasFit {
    ScalarField target;
    ScalarField weight;
};
BiasFit bias_pointwise_fit(const Image& x, std::span<const ScalarField> memberships, const Centroids& centroids);

/// Approximately minimizes sum w (b - target)^2 + gamma * TV(b) over
/// b in [kBiasMin, kBiasMax] with `iters` primal-dual iterations, warm-started
/// from `b` and from `dual` (updated in place; zero fields on first use).
ScalarField weighted_tv_denoise(const BiasFit& fit, double gamma, const ScalarField& b, Gradient& dual,
                                std::size_t iters);

enum class BiasUpdate {
    PrimalDual,  ///< inner weighted-TV solve of the b block
    Gradient,    ///< one backtracked gradient step on b per outer iteration
};

struct BiasConfig {
    double gamma = 0.1;
    BiasUpdate update = BiasUpdate::PrimalDual;
    double step_size = 0.5;  ///< initial step for BiasUpdate::Gradient
    std::size_t inner_iters = 50;
    /// b is held at 1 until a logit-only iteration changes the loss by less
    /// than this relative amount; <= 0 updates b from the first iteration.
    double warmup_tol = 1e-6;

    void validate() const;
};

struct MsBiasResult {
    SoftSegmentation segmentation;
    BiasField bias;        ///< gauge-fixed to mean 1
    Centroids centroids;   ///< rescaled with the gauge
    std::vector<TraceRow> trace;
    bool converged = false;
};

/// Block-coordinate descent on the bias-corrected loss: centroids, a logit
/// step, then a b update, each accepted only if the full objective does not
/// increase. b starts at 1, is clamped to [kBiasMin, kBiasMax] and is kept at
/// mean 1 after every update.
MsBiasResult minimize_ms_bias(const Image& x, const MsConfig& cfg, double gamma, InitKind init = InitKind::Random);
MsBiasResult minimize_ms_bias(const Image& x, const MsConfig& cfg, const BiasConfig& bias_cfg, InitKind init);

}  // namespace msvar
