#include "msvar/soft_seg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "msvar/parallel.hpp"

namespace msvar {

namespace detail {

void check_shapes(const Image& x, std::span<const ScalarField> fields, const char* where) {
    for (const auto& f : fields) {
        if (!x.matches(f)) {
            throw InputError(std::string(where) + ": field is " + std::to_string(f.height()) + "x" +
                             std::to_string(f.width()) + " but image is " + std::to_string(x.height()) + "x" +
                             std::to_string(x.width()));
        }
    }
}

bool relative_change_below(double prev, double cur, double tol) {
    return std::abs(prev - cur) <= tol * std::max(std::abs(prev), std::numeric_limits<double>::min());
}

}  // namespace detail

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        const double t = a[c] - b[c];
        d += t * t;
    }
    return d;
}

bool all_finite(const std::vector<ScalarField>& fields) {
    return std::all_of(fields.begin(), fields.end(), [](const ScalarField& f) { return f.all_finite(); });
}

}  // namespace

GradientMode parse_gradient_mode(std::string_view name) {
    if (name == "frozen" || name == "frozen-centroids") return GradientMode::FrozenCentroids;
    if (name == "full") return GradientMode::Full;
    throw ParameterError("unknown gradient mode '" + std::string(name) + "'");
}

std::string_view to_string(GradientMode mode) {
    return mode == GradientMode::Full ? "full" : "frozen-centroids";
}

InitKind parse_init_kind(std::string_view name) {
    if (name == "random") return InitKind::Random;
    if (name == "kmeans") return InitKind::KMeans;
    throw ParameterError("unknown init '" + std::string(name) + "'");
}

std::string_view to_string(InitKind kind) { return kind == InitKind::KMeans ? "kmeans" : "random"; }

void MsConfig::validate() const {
    auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ParameterError("lambda must be >= 0");
    if (num_classes < 2) throw ParameterError("num_classes must be at least 2");
    if (num_classes > 254) throw ParameterError("num_classes must be at most 254");
    if (!positive(step_size)) throw ParameterError("step_size must be positive");
    if (!positive(rel_tol)) throw ParameterError("rel_tol must be positive");
    if (!positive(tv_eps)) throw ParameterError("tv_eps must be positive");
}

SoftSegmentation::SoftSegmentation(std::vector<ScalarField> logits) : logits_(std::move(logits)) {
    memberships_ = softmax(logits_);
}

std::vector<ScalarField> softmax(std::span<const ScalarField> logits) {
    if (logits.size() < 2) throw InputError("softmax: need at least 2 classes");
    const ScalarField& first = logits.front();
    for (const auto& z : logits) {
        if (!z.same_shape(first)) throw InputError("softmax: logit fields differ in shape");
        if (!z.all_finite()) throw InputError("softmax: non-finite logit");
    }
    const std::size_t n_classes = logits.size();
    std::vector<ScalarField> y(n_classes, ScalarField(first.height(), first.width()));
    parallel_for(first.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            double zmax = logits[0][k];
            for (std::size_t n = 1; n < n_classes; ++n) zmax = std::max(zmax, logits[n][k]);
            double total = 0.0;
            for (std::size_t n = 0; n < n_classes; ++n) {
                const double e = std::exp(logits[n][k] - zmax);
                y[n][k] = e;
                total += e;
            }
            for (std::size_t n = 0; n < n_classes; ++n) y[n][k] /= total;
        }
    });
    return y;
}

Centroids soft_centroids(const Image& x, std::span<const ScalarField> memberships) {
    detail::check_shapes(x, memberships, "soft_centroids");
    const std::size_t channels = x.channels();
    Centroids c(memberships.size(), channels);
    for (std::size_t n = 0; n < memberships.size(); ++n) {
        const ScalarField& y = memberships[n];
        std::vector<double> weighted(channels, 0.0);
        double mass = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) {
            const auto px = x.pixel(k);
            for (std::size_t ch = 0; ch < channels; ++ch) weighted[ch] += px[ch] * y[k];
            mass += y[k];
        }
        for (std::size_t ch = 0; ch < channels; ++ch) c(n, ch) = weighted[ch] / (mass + kCentroidEps);
    }
    return c;
}

MsLoss ms_loss(const Image& x, const SoftSegmentation& seg, const MsConfig& cfg, const Centroids& centroids) {
    detail::check_shapes(x, seg.memberships(), "ms_loss");
    if (centroids.num_classes() != seg.num_classes() || centroids.channels() != x.channels()) {
        throw InputError("ms_loss: centroid table does not match classes/channels");
    }
    MsLoss out;
    for (std::size_t n = 0; n < seg.num_classes(); ++n) {
        const ScalarField& y = seg.membership(n);
        const auto cn = centroids.row(n);
        double data = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) data += squared_distance(x.pixel(k), cn) * y[k];
        out.data_term += data;
        out.tv_term += tv_smooth(y, cfg.tv_eps);
    }
    out.tv_term *= cfg.lambda;
    out.loss = out.data_term + out.tv_term;
    return out;
}

MsLoss ms_loss(const Image& x, const SoftSegmentation& seg, const MsConfig& cfg) {
    detail::check_shapes(x, seg.memberships(), "ms_loss");
    return ms_loss(x, seg, cfg, soft_centroids(x, seg.memberships()));
}

std::vector<ScalarField> softmax_backward(const SoftSegmentation& seg, const std::vector<ScalarField>& grad_y) {
    const std::size_t n_classes = seg.num_classes();
    if (grad_y.size() != n_classes) throw InputError("softmax_backward: class count mismatch");
    const auto& y = seg.memberships();
    std::vector<ScalarField> grad_z(n_classes, ScalarField(seg.height(), seg.width()));
    parallel_for(y.front().size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n_classes; ++i) mean += y[i][k] * grad_y[i][k];
            for (std::size_t n = 0; n < n_classes; ++n) grad_z[n][k] = y[n][k] * (grad_y[n][k] - mean);
        }
    });
    return grad_z;
}

std::vector<ScalarField> ms_loss_grad(const Image& x, const SoftSegmentation& seg, const MsConfig& cfg,
                                      GradientMode mode) {
    detail::check_shapes(x, seg.memberships(), "ms_loss_grad");
    const auto& y = seg.memberships();
    const std::size_t channels = x.channels();
    const Centroids c = soft_centroids(x, y);

    std::vector<ScalarField> grad_y;
    grad_y.reserve(seg.num_classes());
    for (std::size_t n = 0; n < seg.num_classes(); ++n) {
        ScalarField g = tv_smooth_grad(y[n], cfg.tv_eps);
        const auto cn = c.row(n);
        for (std::size_t k = 0; k < g.size(); ++k) {
            g[k] = squared_distance(x.pixel(k), cn) + cfg.lambda * g[k];
        }

        if (mode == GradientMode::Full) {
            // dD/dc_n and dc_n/dy_n(r) = (x(r) - c_n) / (sum y_n + eps)
            std::vector<double> dd_dc(channels, 0.0);
            double mass = 0.0;
            for (std::size_t k = 0; k < g.size(); ++k) {
                const auto px = x.pixel(k);
                for (std::size_t ch = 0; ch < channels; ++ch) dd_dc[ch] -= 2.0 * (px[ch] - cn[ch]) * y[n][k];
                mass += y[n][k];
            }
            const double denom = mass + kCentroidEps;
            for (std::size_t k = 0; k < g.size(); ++k) {
                const auto px = x.pixel(k);
                double chain = 0.0;
                for (std::size_t ch = 0; ch < channels; ++ch) chain += dd_dc[ch] * (px[ch] - cn[ch]);
                g[k] += chain / denom;
            }
        }
        grad_y.push_back(std::move(g));
    }
    return softmax_backward(seg, grad_y);
}

std::vector<ScalarField> random_logits(std::size_t height, std::size_t width, std::size_t num_classes,
                                       std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-0.1, 0.1);
    std::vector<ScalarField> z;
    z.reserve(num_classes);
    for (std::size_t n = 0; n < num_classes; ++n) {
        ScalarField f(height, width);
        for (double& v : f.values()) v = uniform(rng);
        z.push_back(std::move(f));
    }
    return z;
}

std::vector<ScalarField> kmeans_logits(const Image& x, std::size_t num_classes, std::uint64_t seed) {
    constexpr int kLloydIterations = 20;
    const std::size_t count = x.pixel_count();
    const std::size_t channels = x.channels();
    std::mt19937_64 rng(seed);

    // k-means++ seeding
    std::vector<std::vector<double>> centers;
    std::uniform_int_distribution<std::size_t> pick(0, count - 1);
    {
        const auto p = x.pixel(pick(rng));
        centers.emplace_back(p.begin(), p.end());
    }
    std::vector<double> dist(count);
    while (centers.size() < num_classes) {
        double total = 0.0;
        for (std::size_t k = 0; k < count; ++k) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) best = std::min(best, squared_distance(x.pixel(k), c));
            dist[k] = best;
            total += best;
        }
        std::size_t chosen = 0;
        if (total > 0.0) {
            double target = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (chosen = 0; chosen + 1 < count; ++chosen) {
                target -= dist[chosen];
                if (target < 0.0) break;
            }
        }
        const auto p = x.pixel(chosen);
        centers.emplace_back(p.begin(), p.end());
    }

    std::vector<std::size_t> assign(count, 0);
    for (int it = 0; it < kLloydIterations; ++it) {
        for (std::size_t k = 0; k < count; ++k) {
            std::size_t best_n = 0;
            double best = squared_distance(x.pixel(k), centers[0]);
            for (std::size_t n = 1; n < num_classes; ++n) {
                const double d = squared_distance(x.pixel(k), centers[n]);
                if (d < best) {
                    best = d;
                    best_n = n;
                }
            }
            assign[k] = best_n;
        }
        std::vector<std::vector<double>> sums(num_classes, std::vector<double>(channels, 0.0));
        std::vector<std::size_t> sizes(num_classes, 0);
        for (std::size_t k = 0; k < count; ++k) {
            const auto p = x.pixel(k);
            for (std::size_t ch = 0; ch < channels; ++ch) sums[assign[k]][ch] += p[ch];
            ++sizes[assign[k]];
        }
        for (std::size_t n = 0; n < num_classes; ++n) {
            if (sizes[n] == 0) continue;  // empty cluster keeps its center
            for (std::size_t ch = 0; ch < channels; ++ch) {
                centers[n][ch] = sums[n][ch] / static_cast<double>(sizes[n]);
            }
        }
    }

    std::vector<ScalarField> z(num_classes, ScalarField(x.height(), x.width()));
    for (std::size_t k = 0; k < count; ++k) z[assign[k]][k] = 1.0;
    return z;
}

DescentOutcome descend_logits(SoftSegmentation init, const LogitObjective& objective, const MsConfig& cfg) {
    constexpr int kMaxHalvings = 30;
    DescentOutcome out{std::move(init), {}, false, false};
    TraceRow current = objective.evaluate(out.segmentation);
    current.iter = 0;
    out.trace.push_back(current);

    double eta = cfg.step_size;
    for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
        const auto grad = objective.gradient(out.segmentation);
        const auto& z = out.segmentation.logits();

        std::optional<SoftSegmentation> accepted;
        TraceRow row;
        for (int attempt = 0; attempt <= kMaxHalvings; ++attempt) {
            std::vector<ScalarField> next = z;
            for (std::size_t n = 0; n < next.size(); ++n) {
                for (std::size_t k = 0; k < next[n].size(); ++k) next[n][k] -= eta * grad[n][k];
            }
            if (!all_finite(next)) {
                eta *= 0.5;
                continue;
            }
            SoftSegmentation candidate(std::move(next));
            row = objective.evaluate(candidate);
            if (!cfg.line_search || row.loss <= current.loss) {
                accepted.emplace(std::move(candidate));
                break;
            }
            eta *= 0.5;
        }
        if (!accepted) {
            out.stalled = true;
            return out;
        }

        out.segmentation = std::move(*accepted);
        row.iter = iter;
        out.trace.push_back(row);
        const bool done = detail::relative_change_below(current.loss, row.loss, cfg.rel_tol);
        current = row;
        if (done) {
            out.converged = true;
            return out;
        }
        if (cfg.line_search) eta = std::min(2.0 * eta, kMaxStepGrowth * cfg.step_size);
    }
    return out;
}

MsResult minimize_ms(const Image& x, const MsConfig& cfg, SoftSegmentation init) {
    cfg.validate();
    if (init.num_classes() != cfg.num_classes) throw InputError("minimize_ms: initial logits have wrong class count");
    detail::check_shapes(x, init.logits(), "minimize_ms");

    const LogitObjective objective{
        [&](const SoftSegmentation& seg) {
            const MsLoss l = ms_loss(x, seg, cfg);
            return TraceRow{0, l.loss, l.data_term, l.tv_term, 0.0};
        },
        [&](const SoftSegmentation& seg) { return ms_loss_grad(x, seg, cfg, cfg.mode); },
    };
    DescentOutcome outcome = descend_logits(std::move(init), objective, cfg);
    Centroids c = soft_centroids(x, outcome.segmentation.memberships());
    MsResult result{std::move(outcome.segmentation), std::move(c), std::move(outcome.trace), outcome.converged};
    if (outcome.stalled) {
        throw SolverFailure<MsResult>("minimize_ms: backtracking exhausted without a non-increasing step",
                                      std::move(result));
    }
    return result;
}

MsResult minimize_ms(const Image& x, const MsConfig& cfg, InitKind init) {
    cfg.validate();
    auto z = init == InitKind::KMeans ? kmeans_logits(x, cfg.num_classes, cfg.seed)
                                      : random_logits(x.height(), x.width(), cfg.num_classes, cfg.seed);
    return minimize_ms(x, cfg, SoftSegmentation(std::move(z)));
}

FixedPointResult fixed_point_step(const Image& x, const SoftSegmentation& seg, const MsConfig& cfg,
                                  const Centroids& centroids) {
    detail::check_shapes(x, seg.memberships(), "fixed_point_step");
    const std::size_t n_classes = seg.num_classes();
    if (centroids.num_classes() != n_classes || centroids.channels() != x.channels()) {
        throw InputError("fixed_point_step: centroid table does not match classes/channels");
    }
    const auto& y = seg.memberships();
    const std::size_t count = x.pixel_count();

    // |x - c_i|^2 for every class, shared by all n
    std::vector<ScalarField> residual(n_classes, ScalarField(x.height(), x.width()));
    for (std::size_t i = 0; i < n_classes; ++i) {
        for (std::size_t k = 0; k < count; ++k) residual[i][k] = squared_distance(x.pixel(k), centroids.row(i));
    }

    FixedPointResult out;
    out.centroids = centroids;
    for (std::size_t n = 0; n < n_classes; ++n) {
        ScalarField v = tv_curvature(y[n], cfg.tv_eps);
        ScalarField next = y[n];
        for (std::size_t k = 0; k < count; ++k) {
            const double curvature = cfg.lambda * v[k];
            double data = 0.0;
            for (std::size_t i = 0; i < n_classes; ++i) data += (i == n ? -1.0 : 1.0) * residual[i][k];
            out.max_curvature_term = std::max(out.max_curvature_term, std::abs(curvature));
            out.max_data_term = std::max(out.max_data_term, std::abs(data));
            v[k] = curvature + data;
            next[k] += cfg.step_size * v[k];
        }
        out.velocity.push_back(std::move(v));
        out.memberships.push_back(std::move(next));
    }
    for (std::size_t k = 0; k < count; ++k) {
        double total = 0.0;
        for (std::size_t n = 0; n < n_classes; ++n) total += out.memberships[n][k];
        out.max_simplex_violation = std::max(out.max_simplex_violation, std::abs(total - 1.0));
    }
    return out;
}

FixedPointResult fixed_point_step(const Image& x, const SoftSegmentation& seg, const MsConfig& cfg) {
    detail::check_shapes(x, seg.memberships(), "fixed_point_step");
    return fixed_point_step(x, seg, cfg, soft_centroids(x, seg.memberships()));
}

LabelMap hard_mask(const SoftSegmentation& seg) {
    const auto& y = seg.memberships();
    LabelMap mask(seg.height(), seg.width());
    for (std::size_t k = 0; k < mask.size(); ++k) {
        std::size_t best = 0;
        for (std::size_t n = 1; n < y.size(); ++n) {
            if (y[n][k] > y[best][k]) best = n;
        }
        mask[k] = static_cast<std::uint8_t>(best);
    }
    return mask;
}

}  // namespace msvar
