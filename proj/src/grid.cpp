#include "msvar/grid.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "msvar/errors.hpp"

namespace msvar {

ScalarField::ScalarField(std::size_t height, std::size_t width, double fill)
    : height_(height), width_(width), values_(height * width, fill) {
    if (height == 0 || width == 0) {
        throw InputError("ScalarField: height and width must be at least 1");
    }
}

ScalarField::ScalarField(std::size_t height, std::size_t width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
    if (height == 0 || width == 0) {
        throw InputError("ScalarField: height and width must be at least 1");
    }
    if (values_.size() != height * width) {
        throw InputError("ScalarField: buffer length " + std::to_string(values_.size()) +
                         " does not match " + std::to_string(height) + "x" + std::to_string(width));
    }
}

bool ScalarField::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Image::Image(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> values)
    : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
    if (height == 0 || width == 0 || channels == 0) {
        throw InputError("Image: height, width and channels must be at least 1");
    }
    if (values_.size() != height * width * channels) {
        throw InputError("Image: buffer length does not match H*W*C");
    }
    if (!std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); })) {
        throw InputError("Image: non-finite value");
    }
}

Image::Image(const ScalarField& field)
    : Image(field.height(), field.width(), 1,
            std::vector<double>(field.values().begin(), field.values().end())) {}

Gradient grad_forward(const ScalarField& f) {
    const std::size_t h = f.height();
    const std::size_t w = f.width();
    Gradient g{ScalarField(h, w), ScalarField(h, w)};
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            if (j + 1 < w) g.gx(i, j) = f(i, j + 1) - f(i, j);
            if (i + 1 < h) g.gy(i, j) = f(i + 1, j) - f(i, j);
        }
    }
    return g;
}

ScalarField div_backward(const ScalarField& px, const ScalarField& py) {
    if (!px.same_shape(py)) throw InputError("div_backward: shape mismatch");
    const std::size_t h = px.height();
    const std::size_t w = px.width();
    ScalarField div(h, w);
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            double v = 0.0;
            if (j + 1 < w) v += px(i, j);
            if (j > 0) v -= px(i, j - 1);
            if (i + 1 < h) v += py(i, j);
            if (i > 0) v -= py(i - 1, j);
            div(i, j) = v;
        }
    }
    return div;
}

namespace {

void check_eps(double eps) {
    if (!(eps > 0.0) || !std::isfinite(eps)) {
        throw ParameterError("tv_smooth: eps must be positive, got " + std::to_string(eps));
    }
}

// Unit-normalized forward gradient (gx/s, gy/s) with s = sqrt(gx^2+gy^2+eps^2).
Gradient normalized_gradient(const ScalarField& f, double eps) {
    Gradient g = grad_forward(f);
    const double eps2 = eps * eps;
    for (std::size_t k = 0; k < f.size(); ++k) {
        const double s = std::sqrt(g.gx[k] * g.gx[k] + g.gy[k] * g.gy[k] + eps2);
        g.gx[k] /= s;
        g.gy[k] /= s;
    }
    return g;
}

}  // namespace

double tv_smooth(const ScalarField& f, double eps) {
    check_eps(eps);
    const Gradient g = grad_forward(f);
    const double eps2 = eps * eps;
    double total = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
        const double m2 = g.gx[k] * g.gx[k] + g.gy[k] * g.gy[k];
        // sqrt(m2 + eps^2) - eps, written to avoid cancellation when m2 << eps^2
        total += m2 / (std::sqrt(m2 + eps2) + eps);
    }
    return total;
}

ScalarField tv_curvature(const ScalarField& f, double eps) {
    check_eps(eps);
    const Gradient n = normalized_gradient(f, eps);
    return div_backward(n.gx, n.gy);
}

ScalarField tv_smooth_grad(const ScalarField& f, double eps) {
    ScalarField g = tv_curvature(f, eps);
    for (double& v : g.values()) v = -v;
    return g;
}

PhantomKind parse_phantom_kind(std::string_view name) {
    if (name == "two-phase") return PhantomKind::TwoPhase;
    if (name == "four-phase") return PhantomKind::FourPhase;
    if (name == "ramp-bias") return PhantomKind::RampBias;
    throw ParameterError("unknown phantom kind '" + std::string(name) + "'");
}

std::string_view to_string(PhantomKind kind) {
    switch (kind) {
        case PhantomKind::TwoPhase: return "two-phase";
        case PhantomKind::FourPhase: return "four-phase";
        case PhantomKind::RampBias: return "ramp-bias";
    }
    return "unknown";
}

Phantom make_phantom(PhantomKind kind, std::size_t size, double noise_sigma, std::uint64_t seed) {
    if (size < 16) throw ParameterError("make_phantom: size must be at least 16");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        throw ParameterError("make_phantom: noise_sigma must be a finite value >= 0");
    }

    const std::size_t n = size * size;
    std::vector<double> values(n);
    LabelMap labels(size, size);
    std::optional<ScalarField> bias;

    if (kind == PhantomKind::FourPhase) {
        const std::size_t half = size / 2;
        for (std::size_t i = 0; i < size; ++i) {
            for (std::size_t j = 0; j < size; ++j) {
                const auto label = static_cast<std::uint8_t>(2 * (i >= half) + (j >= half));
                labels(i, j) = label;
                values[i * size + j] = 0.2 + 0.2 * label;
            }
        }
    } else {
        const double center = (static_cast<double>(size) - 1.0) / 2.0;
        const double radius = static_cast<double>(size) / 4.0;
        for (std::size_t i = 0; i < size; ++i) {
            for (std::size_t j = 0; j < size; ++j) {
                const double di = static_cast<double>(i) - center;
                const double dj = static_cast<double>(j) - center;
                const bool inside = di * di + dj * dj <= radius * radius;
                labels(i, j) = inside ? 1 : 0;
                values[i * size + j] = inside ? 0.8 : 0.2;
            }
        }
        if (kind == PhantomKind::RampBias) {
            ScalarField b(size, size);
            for (std::size_t i = 0; i < size; ++i) {
                for (std::size_t j = 0; j < size; ++j) {
                    b(i, j) = 0.7 + 0.6 * static_cast<double>(j) / static_cast<double>(size - 1);
                    values[i * size + j] *= b(i, j);
                }
            }
            bias = std::move(b);
        }
    }

    if (noise_sigma > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, noise_sigma);
        for (double& v : values) v += noise(rng);
    }
    for (double& v : values) v = std::clamp(v, 0.0, 1.0);

    return Phantom{Image(size, size, 1, std::move(values)), std::move(labels), std::move(bias)};
}

}  // namespace msvar
