#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "msvar/errors.hpp"
#include "msvar/grid.hpp"
#include "msvar/labels.hpp"

namespace msvar {

/// Logits z_n and their softmax memberships y_n. The memberships are always
/// derived from the logits, so every pixel sums to one.
class SoftSegmentation {
public:
    explicit SoftSegmentation(std::vector<ScalarField> logits);

    std::size_t num_classes() const noexcept { return logits_.size(); }
    std::size_t height() const noexcept { return logits_.front().height(); }
    std::size_t width() const noexcept { return logits_.front().width(); }

    const std::vector<ScalarField>& logits() const noexcept { return logits_; }
    const std::vector<ScalarField>& memberships() const noexcept { return memberships_; }
    const ScalarField& logit(std::size_t n) const { return logits_.at(n); }
    const ScalarField& membership(std::size_t n) const { return memberships_.at(n); }

private:
    std::vector<ScalarField> logits_;
    std::vector<ScalarField> memberships_;
};

/// Per-class mean vectors, class-major: value(n, c).
class Centroids {
public:
    Centroids() = default;
    Centroids(std::size_t num_classes, std::size_t channels, double fill = 0.0)
        : num_classes_(num_classes), channels_(channels), values_(num_classes * channels, fill) {}

    std::size_t num_classes() const noexcept { return num_classes_; }
    std::size_t channels() const noexcept { return channels_; }

    double operator()(std::size_t n, std::size_t c) const { return values_[n * channels_ + c]; }
    double& operator()(std::size_t n, std::size_t c) { return values_[n * channels_ + c]; }
    std::span<const double> row(std::size_t n) const {
        return std::span<const double>(values_).subspan(n * channels_, channels_);
    }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }

private:
    std::size_t num_classes_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> values_;
};

/// After an accepted step the line search doubles the step, up to this
/// multiple of the configured initial step.
inline constexpr double kMaxStepGrowth = 1099511627776.0;  // 2^40

/// Guard added to every centroid denominator so empty classes stay finite.
inline constexpr double kCentroidEps = 1e-8;

enum class GradientMode {
    FrozenCentroids,  ///< centroids treated as constants
    Full,             ///< chain rule through the centroid formula as well
};

enum class InitKind { Random, KMeans };

GradientMode parse_gradient_mode(std::string_view name);
std::string_view to_string(GradientMode mode);
InitKind parse_init_kind(std::string_view name);
std::string_view to_string(InitKind kind);

struct MsConfig {
    double lambda = 1e-3;         ///< weight of the membership TV term
    std::size_t num_classes = 2;
    double step_size = 0.5;       ///< initial descent step on the logits
    std::size_t max_iters = 500;
    double rel_tol = 1e-6;
    double tv_eps = 1e-8;
    std::uint64_t seed = 0;
    bool line_search = true;
    GradientMode mode = GradientMode::FrozenCentroids;

    /// Throws ParameterError on out-of-range fields.
    void validate() const;
};

std::vector<ScalarField> softmax(std::span<const ScalarField> logits);

/// Membership-weighted class means, per channel.
Centroids soft_centroids(const Image& x, std::span<const ScalarField> memberships);

struct MsLoss {
    double loss = 0.0;
    double data_term = 0.0;
    double tv_term = 0.0;
};

/// Relaxed Mumford-Shah loss with centroids recomputed from the memberships.
MsLoss ms_loss(const Image& x, const SoftSegmentation& seg, const MsConfig& cfg);

/// Same loss evaluated against caller-supplied centroids.
MsLoss ms_loss(const Image& x, const SoftSegmentation& seg, const MsConfig& cfg, const Centroids& centroids);

/// Gradient of ms_loss with respect to every logit.
std::vector<ScalarField> ms_loss_grad(const Image& x, const SoftSegmentation& seg, const MsConfig& cfg,
                                      GradientMode mode);

/// Chain rule through the softmax: maps dL/dy_n to dL/dz_n.
std::vector<ScalarField> softmax_backward(const SoftSegmentation& seg, const std::vector<ScalarField>& grad_y);

struct MsResult {
    SoftSegmentation segmentation;
    Centroids centroids;
    std::vector<TraceRow> trace;  ///< row 0 is the initial state
    bool converged = false;
};

/// Initial logits: i.i.d. uniform in [-0.1, 0.1].
std::vector<ScalarField> random_logits(std::size_t height, std::size_t width, std::size_t num_classes,
                                       std::uint64_t seed);

/// Initial logits from Lloyd's k-means on pixel vectors (k-means++ seeding,
/// 20 iterations): logit 1 for the assigned cluster, 0 elsewhere.
std::vector<ScalarField> kmeans_logits(const Image& x, std::size_t num_classes, std::uint64_t seed);

/// Alternating minimization: centroids from the current memberships, then a
/// (backtracked) gradient step on the logits. Stops when the relative loss
/// change drops to rel_tol or after max_iters steps (converged = false).
/// Throws SolverFailure<MsResult> when backtracking cannot find a
/// non-increasing step.
MsResult minimize_ms(const Image& x, const MsConfig& cfg, InitKind init = InitKind::Random);
MsResult minimize_ms(const Image& x, const MsConfig& cfg, SoftSegmentation init);

/// Generic logit descent shared by the soft-seg and supervision drivers.
struct LogitObjective {
    std::function<TraceRow(const SoftSegmentation&)> evaluate;
    std::function<std::vector<ScalarField>(const SoftSegmentation&)> gradient;
};

struct DescentOutcome {
    SoftSegmentation segmentation;
    std::vector<TraceRow> trace;
    bool converged = false;
    bool stalled = false;  ///< backtracking exhausted
};

DescentOutcome descend_logits(SoftSegmentation init, const LogitObjective& objective, const MsConfig& cfg);

struct FixedPointResult {
    std::vector<ScalarField> memberships;  ///< y + eta * velocity, not re-projected
    std::vector<ScalarField> velocity;
    Centroids centroids;
    double max_curvature_term = 0.0;  ///< max |lambda * div(grad y / |grad y|)|
    double max_data_term = 0.0;       ///< max |sum_i (-1)^delta(n,i) |x - c_i|^2|
    double max_simplex_violation = 0.0;
};

/// One explicit update of the memberships,
///   y_n += eta * (lambda * div(grad y_n / |grad y_n|) + sum_i (-1)^[i == n] |x - c_i|^2),
/// with centroids from the current memberships.
FixedPointResult fixed_point_step(const Image& x, const SoftSegmentation& seg, const MsConfig& cfg);
FixedPointResult fixed_point_step(const Image& x, const SoftSegmentation& seg, const MsConfig& cfg,
                                  const Centroids& centroids);

/// Argmax of the memberships, ties to the lowest class.
LabelMap hard_mask(const SoftSegmentation& seg);

namespace detail {
void check_shapes(const Image& x, std::span<const ScalarField> fields, const char* where);
/// |prev - cur| <= tol * |prev|, with |prev| floored at the smallest normal.
bool relative_change_below(double prev, double cur, double tol);
}  // namespace detail

}  // namespace msvar
