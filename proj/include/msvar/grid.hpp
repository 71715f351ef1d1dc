#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "msvar/labels.hpp"

namespace msvar {

/// One real value per pixel, row-major. Carrier for gradients, bias fields,
/// logits, memberships and level functions.
class ScalarField {
public:
    ScalarField() = default;
    ScalarField(std::size_t height, std::size_t width, double fill = 0.0);
    ScalarField(std::size_t height, std::size_t width, std::vector<double> values);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return values_.size(); }

    double operator()(std::size_t row, std::size_t col) const { return values_[row * width_ + col]; }
    double& operator()(std::size_t row, std::size_t col) { return values_[row * width_ + col]; }
    double operator[](std::size_t idx) const { return values_[idx]; }
    double& operator[](std::size_t idx) { return values_[idx]; }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }

    bool same_shape(const ScalarField& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }
    bool all_finite() const noexcept;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> values_;
};

/// H x W x C measurement, channel-interleaved. Values are finite; loaders
/// normalize intensities to [0, 1].
class Image {
public:
    Image() = default;
    Image(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> values);
    /// Single-channel image sharing the field's values.
    explicit Image(const ScalarField& field);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t channels() const noexcept { return channels_; }
    std::size_t pixel_count() const noexcept { return height_ * width_; }

    double operator()(std::size_t row, std::size_t col, std::size_t ch = 0) const {
        return values_[(row * width_ + col) * channels_ + ch];
    }
    /// Channel vector of pixel `idx` (row-major pixel index).
    std::span<const double> pixel(std::size_t idx) const {
        return std::span<const double>(values_).subspan(idx * channels_, channels_);
    }
    std::span<const double> values() const noexcept { return values_; }

    bool matches(const ScalarField& f) const noexcept {
        return f.height() == height_ && f.width() == width_;
    }

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> values_;
};

struct Gradient {
    ScalarField gx;
    ScalarField gy;
};

/// Forward differences, unit spacing, zero in the last column (gx) / last
/// row (gy).
Gradient grad_forward(const ScalarField& f);

/// Negative adjoint of grad_forward: <grad_forward(f), p> = -<f, div_backward(p)>.
ScalarField div_backward(const ScalarField& px, const ScalarField& py);

/// Smoothed isotropic total variation, sum of sqrt(gx^2 + gy^2 + eps^2) - eps.
/// Zero on constant fields.
double tv_smooth(const ScalarField& f, double eps);

/// Exact gradient of tv_smooth with respect to every pixel of f.
ScalarField tv_smooth_grad(const ScalarField& f, double eps);

/// div(grad f / |grad f|_eps) with the same stencil as tv_smooth; equals
/// -tv_smooth_grad(f, eps).
ScalarField tv_curvature(const ScalarField& f, double eps);

enum class PhantomKind { TwoPhase, FourPhase, RampBias };

PhantomKind parse_phantom_kind(std::string_view name);
std::string_view to_string(PhantomKind kind);

struct Phantom {
    Image image;
    LabelMap labels;
    std::optional<ScalarField> bias;  ///< ground-truth multiplier, ramp-bias only
};

/// Synthetic test images.
///  - two-phase: disk (radius size/4, centered) at 0.8 on background 0.2, labels 1/0
///  - four-phase: quadrants at 0.2, 0.4, 0.6, 0.8 with labels 0..3 in reading order
///  - ramp-bias: two-phase times a column ramp from 0.7 to 1.3
/// Gaussian noise (seeded) is added last and the result clamped to [0, 1].
Phantom make_phantom(PhantomKind kind, std::size_t size, double noise_sigma, std::uint64_t seed);

}  // namespace msvar
