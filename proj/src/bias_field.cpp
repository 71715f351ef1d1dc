#include "msvar/bias_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace msvar {

namespace {

double squared_distance_scaled(std::span<const double> x, double b, std::span<const double> c) {
    double d = 0.0;
    for (std::size_t ch = 0; ch < x.size(); ++ch) {
        const double t = x[ch] - b * c[ch];
        d += t * t;
    }
    return d;
}

void check_bias(const Image& x, const ScalarField& b, const char* where) {
    if (!x.matches(b)) throw InputError(std::string(where) + ": bias field shape does not match image");
}

}  // namespace

Centroids bias_centroids(const Image& x, std::span<const ScalarField> memberships, const ScalarField& b) {
    detail::check_shapes(x, memberships, "bias_centroids");
    check_bias(x, b, "bias_centroids");
    const std::size_t channels = x.channels();
    Centroids c(memberships.size(), channels);
    for (std::size_t n = 0; n < memberships.size(); ++n) {
        const ScalarField& y = memberships[n];
        std::vector<double> num(channels, 0.0);
        double den = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) {
            const auto px = x.pixel(k);
            for (std::size_t ch = 0; ch < channels; ++ch) num[ch] += b[k] * px[ch] * y[k];
            den += b[k] * b[k] * y[k];
        }
        for (std::size_t ch = 0; ch < channels; ++ch) c(n, ch) = num[ch] / (den + kCentroidEps);
    }
    return c;
}

BiasMsLoss bias_ms_loss(const Image& x, const SoftSegmentation& seg, const BiasField& bias, const MsConfig& cfg,
                        const Centroids& centroids) {
    detail::check_shapes(x, seg.memberships(), "bias_ms_loss");
    check_bias(x, bias.b, "bias_ms_loss");
    BiasMsLoss out;
    for (std::size_t n = 0; n < seg.num_classes(); ++n) {
        const ScalarField& y = seg.membership(n);
        const auto cn = centroids.row(n);
        for (std::size_t k = 0; k < y.size(); ++k) {
            out.data_term += squared_distance_scaled(x.pixel(k), bias.b[k], cn) * y[k];
        }
        out.tv_y_term += tv_smooth(y, cfg.tv_eps);
    }
    out.tv_y_term *= cfg.lambda;
    out.tv_b_term = bias.gamma * tv_smooth(bias.b, cfg.tv_eps);
    out.loss = out.data_term + out.tv_y_term + out.tv_b_term;
    return out;
}

BiasMsLoss bias_ms_loss(const Image& x, const SoftSegmentation& seg, const BiasField& bias, const MsConfig& cfg) {
    return bias_ms_loss(x, seg, bias, cfg, bias_centroids(x, seg.memberships(), bias.b));
}

namespace {

// dD/dc_n per channel, where D is the bias data term at fixed memberships.
std::vector<double> data_grad_wrt_centroid(const Image& x, const ScalarField& y, const ScalarField& b,
                                           std::span<const double> cn) {
    std::vector<double> g(x.channels(), 0.0);
    for (std::size_t k = 0; k < y.size(); ++k) {
        const auto px = x.pixel(k);
        for (std::size_t ch = 0; ch < g.size(); ++ch) g[ch] -= 2.0 * y[k] * b[k] * (px[ch] - b[k] * cn[ch]);
    }
    return g;
}

double bias_mass(const ScalarField& y, const ScalarField& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) m += b[k] * b[k] * y[k];
    return m;
}

}  // namespace

std::vector<ScalarField> bias_ms_loss_grad_logits(const Image& x, const SoftSegmentation& seg, const BiasField& bias,
                                                  const MsConfig& cfg, GradientMode mode) {
    detail::check_shapes(x, seg.memberships(), "bias_ms_loss_grad_logits");
    check_bias(x, bias.b, "bias_ms_loss_grad_logits");
    const auto& y = seg.memberships();
    const ScalarField& b = bias.b;
    const Centroids c = bias_centroids(x, y, b);

    std::vector<ScalarField> grad_y;
    for (std::size_t n = 0; n < seg.num_classes(); ++n) {
        ScalarField g = tv_smooth_grad(y[n], cfg.tv_eps);
        const auto cn = c.row(n);
        for (std::size_t k = 0; k < g.size(); ++k) {
            g[k] = squared_distance_scaled(x.pixel(k), b[k], cn) + cfg.lambda * g[k];
        }
        if (mode == GradientMode::Full) {
            // dc_n/dy_n(r) = b(r) (x(r) - b(r) c_n) / (sum b^2 y_n + eps)
            const auto dd_dc = data_grad_wrt_centroid(x, y[n], b, cn);
            const double denom = bias_mass(y[n], b) + kCentroidEps;
            for (std::size_t k = 0; k < g.size(); ++k) {
                const auto px = x.pixel(k);
                double chain = 0.0;
                for (std::size_t ch = 0; ch < dd_dc.size(); ++ch) chain += dd_dc[ch] * b[k] * (px[ch] - b[k] * cn[ch]);
                g[k] += chain / denom;
            }
        }
        grad_y.push_back(std::move(g));
    }
    return softmax_backward(seg, grad_y);
}

ScalarField bias_ms_loss_grad_bias(const Image& x, const SoftSegmentation& seg, const BiasField& bias,
                                   const MsConfig& cfg, GradientMode mode) {
    detail::check_shapes(x, seg.memberships(), "bias_ms_loss_grad_bias");
    check_bias(x, bias.b, "bias_ms_loss_grad_bias");
    const auto& y = seg.memberships();
    const ScalarField& b = bias.b;
    const Centroids c = bias_centroids(x, y, b);
    const std::size_t channels = x.channels();

    ScalarField g = tv_smooth_grad(b, cfg.tv_eps);
    for (double& v : g.values()) v *= bias.gamma;

    for (std::size_t n = 0; n < seg.num_classes(); ++n) {
        const auto cn = c.row(n);
        for (std::size_t k = 0; k < g.size(); ++k) {
            const auto px = x.pixel(k);
            double d = 0.0;
            for (std::size_t ch = 0; ch < channels; ++ch) d -= 2.0 * cn[ch] * (px[ch] - b[k] * cn[ch]);
            g[k] += y[n][k] * d;
        }
        if (mode == GradientMode::Full) {
            // dc_n/db(r) = y_n(r) (x(r) - 2 b(r) c_n) / (sum b^2 y_n + eps)
            const auto dd_dc = data_grad_wrt_centroid(x, y[n], b, cn);
            const double denom = bias_mass(y[n], b) + kCentroidEps;
            for (std::size_t k = 0; k < g.size(); ++k) {
                const auto px = x.pixel(k);
                double chain = 0.0;
                for (std::size_t ch = 0; ch < channels; ++ch) chain += dd_dc[ch] * (px[ch] - 2.0 * b[k] * cn[ch]);
                g[k] += y[n][k] * chain / denom;
            }
        }
    }
    return g;
}

BiasFit bias_pointwise_fit(const Image& x, std::span<const ScalarField> memberships, const Centroids& centroids) {
    detail::check_shapes(x, memberships, "bias_pointwise_fit");
    BiasFit fit{ScalarField(x.height(), x.width()), ScalarField(x.height(), x.width())};
    for (std::size_t k = 0; k < x.pixel_count(); ++k) {
        const auto px = x.pixel(k);
        double w = 0.0;
        double xc = 0.0;
        for (std::size_t n = 0; n < memberships.size(); ++n) {
            const auto cn = centroids.row(n);
            double cc = 0.0;
            double dot = 0.0;
            for (std::size_t ch = 0; ch < px.size(); ++ch) {
                cc += cn[ch] * cn[ch];
                dot += px[ch] * cn[ch];
            }
            w += memberships[n][k] * cc;
            xc += memberships[n][k] * dot;
        }
        fit.weight[k] = w;
        fit.target[k] = w > 0.0 ? xc / w : 1.0;
    }
    return fit;
}

ScalarField weighted_tv_denoise(const BiasFit& fit, double gamma, const ScalarField& b, Gradient& dual,
                                std::size_t iters) {
    if (!fit.target.same_shape(b) || !fit.weight.same_shape(b) || !dual.gx.same_shape(b) || !dual.gy.same_shape(b)) {
        throw InputError("weighted_tv_denoise: shape mismatch");
    }
    // Chambolle-Pock with tau * sigma * ||grad||^2 < 1, ||grad||^2 <= 8
    constexpr double kTau = 0.35;
    constexpr double kSigma = 0.35;
    ScalarField current = b;
    ScalarField extrapolated = b;
    for (std::size_t it = 0; it < iters; ++it) {
        const Gradient g = grad_forward(extrapolated);
        for (std::size_t k = 0; k < current.size(); ++k) {
            const double px = dual.gx[k] + kSigma * g.gx[k];
            const double py = dual.gy[k] + kSigma * g.gy[k];
            const double norm = std::sqrt(px * px + py * py);
            const double scale = norm > gamma ? (gamma > 0.0 ? gamma / norm : 0.0) : 1.0;
            dual.gx[k] = px * scale;
            dual.gy[k] = py * scale;
        }
        const ScalarField div = div_backward(dual.gx, dual.gy);
        for (std::size_t k = 0; k < current.size(); ++k) {
            const double v = current[k] + kTau * div[k];
            const double w = fit.weight[k];
            const double next = std::clamp((v + 2.0 * kTau * w * fit.target[k]) / (1.0 + 2.0 * kTau * w), kBiasMin,
                                           kBiasMax);
            extrapolated[k] = 2.0 * next - current[k];
            current[k] = next;
        }
    }
    return current;
}

void BiasConfig::validate() const {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ParameterError("gamma must be >= 0");
    if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ParameterError("bias step_size must be positive");
    if (inner_iters == 0) throw ParameterError("bias inner_iters must be positive");
}

namespace {

TraceRow to_row(const BiasMsLoss& l) { return TraceRow{0, l.loss, l.data_term, l.tv_y_term, l.tv_b_term}; }

constexpr std::size_t kMaxInnerChunks = 20;

double subproblem_value(const BiasFit& fit, double gamma, const ScalarField& b, double tv_eps) {
    double v = gamma * tv_smooth(b, tv_eps);
    for (std::size_t k = 0; k < b.size(); ++k) {
        const double d = b[k] - fit.target[k];
        v += fit.weight[k] * d * d;
    }
    return v;
}

void clamp_bias(ScalarField& b) {
    for (double& v : b.values()) v = std::clamp(v, kBiasMin, kBiasMax);
}

double mean_of(const ScalarField& f) {
    double sum = 0.0;
    for (double v : f.values()) sum += v;
    return sum / static_cast<double>(f.size());
}

// TV(b) is not scale invariant while the data term is, so b is kept at mean 1
void normalize_gauge(ScalarField& b) {
    const double m = mean_of(b);
    for (double& v : b.values()) v = std::clamp(v / m, kBiasMin, kBiasMax);
}

}  // namespace

MsBiasResult minimize_ms_bias(const Image& x, const MsConfig& cfg, const BiasConfig& bias_cfg, InitKind init) {
    constexpr int kMaxHalvings = 30;
    cfg.validate();
    bias_cfg.validate();

    auto z = init == InitKind::KMeans ? kmeans_logits(x, cfg.num_classes, cfg.seed)
                                      : random_logits(x.height(), x.width(), cfg.num_classes, cfg.seed);
    SoftSegmentation seg(std::move(z));
    BiasField bias{ScalarField(x.height(), x.width(), 1.0), bias_cfg.gamma};

    std::vector<TraceRow> trace;
    TraceRow current = to_row(bias_ms_loss(x, seg, bias, cfg));
    trace.push_back(current);

    double eta_z = cfg.step_size;
    double eta_b = bias_cfg.step_size;
    bool converged = false;
    bool stalled = false;
    Gradient dual{ScalarField(x.height(), x.width()), ScalarField(x.height(), x.width())};
    // b stays at 1 until the logit block alone has settled
    bool bias_active = bias_cfg.warmup_tol <= 0.0;

    for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
        // logit block
        {
            const auto grad = bias_ms_loss_grad_logits(x, seg, bias, cfg, cfg.mode);
            std::optional<SoftSegmentation> accepted;
            for (int attempt = 0; attempt <= kMaxHalvings; ++attempt) {
                std::vector<ScalarField> next = seg.logits();
                for (std::size_t n = 0; n < next.size(); ++n) {
                    for (std::size_t k = 0; k < next[n].size(); ++k) next[n][k] -= eta_z * grad[n][k];
                }
                if (!std::all_of(next.begin(), next.end(), [](const ScalarField& f) { return f.all_finite(); })) {
                    eta_z *= 0.5;
                    continue;
                }
                SoftSegmentation candidate(std::move(next));
                const TraceRow row = to_row(bias_ms_loss(x, candidate, bias, cfg));
                if (!cfg.line_search || row.loss <= current.loss) {
                    accepted.emplace(std::move(candidate));
                    current = row;
                    break;
                }
                eta_z *= 0.5;
            }
            if (!accepted) {
                stalled = true;
                break;
            }
            seg = std::move(*accepted);
        }
        // bias block
        if (!bias_active) {
            // warm-up: logits only
        } else if (bias_cfg.update == BiasUpdate::PrimalDual) {
            const Centroids c = bias_centroids(x, seg.memberships(), bias.b);
            const BiasFit fit = bias_pointwise_fit(x, seg.memberships(), c);
            // PD iterates are not monotone; extend the inner solve until the
            // subproblem objective actually improves on the current b
            const double start_value = subproblem_value(fit, bias.gamma, bias.b, cfg.tv_eps);
            ScalarField proposal = bias.b;
            for (std::size_t chunk = 0; chunk < kMaxInnerChunks; ++chunk) {
                proposal = weighted_tv_denoise(fit, bias.gamma, proposal, dual, bias_cfg.inner_iters);
                if (subproblem_value(fit, bias.gamma, proposal, cfg.tv_eps) < start_value) break;
            }
            normalize_gauge(proposal);
            double t = 1.0;
            for (int attempt = 0; attempt <= kMaxHalvings; ++attempt, t *= 0.5) {
                BiasField candidate = bias;
                for (std::size_t k = 0; k < proposal.size(); ++k) {
                    candidate.b[k] += t * (proposal[k] - bias.b[k]);
                }
                const TraceRow row = to_row(bias_ms_loss(x, seg, candidate, cfg));
                if (!cfg.line_search || row.loss <= current.loss) {
                    bias = std::move(candidate);
                    current = row;
                    break;
                }
            }
        } else {
            const ScalarField grad = bias_ms_loss_grad_bias(x, seg, bias, cfg, cfg.mode);
            for (int attempt = 0; attempt <= kMaxHalvings; ++attempt) {
                BiasField candidate = bias;
                for (std::size_t k = 0; k < grad.size(); ++k) candidate.b[k] -= eta_b * grad[k];
                clamp_bias(candidate.b);
                normalize_gauge(candidate.b);
                const TraceRow row = to_row(bias_ms_loss(x, seg, candidate, cfg));
                if (!cfg.line_search || row.loss <= current.loss) {
                    bias = std::move(candidate);
                    current = row;
                    break;
                }
                eta_b *= 0.5;
            }
        }

        const double prev = trace.back().loss;
        current.iter = iter;
        trace.push_back(current);
        if (cfg.line_search) {
            eta_z = std::min(2.0 * eta_z, kMaxStepGrowth * cfg.step_size);
            eta_b = std::min(2.0 * eta_b, kMaxStepGrowth * bias_cfg.step_size);
        }
        if (!bias_active) {
            bias_active = detail::relative_change_below(prev, current.loss, bias_cfg.warmup_tol);
        } else if (detail::relative_change_below(prev, current.loss, cfg.rel_tol)) {
            converged = true;
            break;
        }
    }

    // gauge: mean(b) = 1, centroids scaled inversely
    Centroids c = bias_centroids(x, seg.memberships(), bias.b);
    const double mean_b = mean_of(bias.b);
    for (double& v : bias.b.values()) v /= mean_b;
    for (double& v : c.values()) v *= mean_b;

    MsBiasResult result{std::move(seg), std::move(bias), std::move(c), std::move(trace), converged};
    if (stalled) {
        throw SolverFailure<MsBiasResult>("minimize_ms_bias: backtracking exhausted without a non-increasing step",
                                          std::move(result));
    }
    return result;
}

MsBiasResult minimize_ms_bias(const Image& x, const MsConfig& cfg, double gamma, InitKind init) {
    BiasConfig bias_cfg;
    bias_cfg.gamma = gamma;
    return minimize_ms_bias(x, cfg, bias_cfg, init);
}

}  // namespace msvar
