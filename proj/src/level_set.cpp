#include "msvar/level_set.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>

namespace msvar {

namespace {

constexpr double kCurvatureGuard = 1e-8;
constexpr double kLengthTvEps = 1e-8;
constexpr double kMaxDtLambda = 0.25;
constexpr int kMaxHalvings = 30;

void check_phases(std::size_t p) {
    if (p != 1 && p != 2) throw ParameterError("level-set phases must be 1 or 2, got " + std::to_string(p));
}

void check_eps(double eps_h) {
    if (!(eps_h > 0.0) || !std::isfinite(eps_h)) throw ParameterError("eps_h must be positive");
}

void check_image(const Image& x, const LevelSetState& state) {
    for (const auto& f : state.phi) {
        if (!x.matches(f)) throw InputError("level function shape does not match image");
    }
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        const double t = a[c] - b[c];
        d += t * t;
    }
    return d;
}

}  // namespace

void LevelSetState::validate() const {
    check_phases(phi.size());
    check_eps(eps_h);
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ParameterError("dt must be positive");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ParameterError("lambda must be >= 0");
    if (dt * lambda > kMaxDtLambda) {
        throw ParameterError("dt * lambda must not exceed 0.25, got " + std::to_string(dt * lambda));
    }
    for (const auto& f : phi) {
        if (!f.same_shape(phi.front())) throw InputError("level functions differ in shape");
        if (!f.all_finite()) throw InputError("level function has non-finite values");
    }
}

double heaviside_eps(double phi, double eps_h) {
    if (phi > 0.0) return 1.0 - heaviside_eps_complement(phi, eps_h);
    return 0.5 + std::atan(phi / eps_h) / std::numbers::pi;
}

double heaviside_eps_complement(double phi, double eps_h) {
    // 1/2 - atan(t)/pi = atan(1/t)/pi for t > 0
    if (phi > 0.0) return std::atan(eps_h / phi) / std::numbers::pi;
    return 0.5 - std::atan(phi / eps_h) / std::numbers::pi;
}

double delta_eps(double phi, double eps_h) { return eps_h / (std::numbers::pi * (eps_h * eps_h + phi * phi)); }

ScalarField heaviside_eps(const ScalarField& phi, double eps_h) {
    check_eps(eps_h);
    ScalarField out(phi.height(), phi.width());
    for (std::size_t k = 0; k < phi.size(); ++k) out[k] = heaviside_eps(phi[k], eps_h);
    return out;
}

ScalarField delta_eps(const ScalarField& phi, double eps_h) {
    check_eps(eps_h);
    ScalarField out(phi.height(), phi.width());
    for (std::size_t k = 0; k < phi.size(); ++k) out[k] = delta_eps(phi[k], eps_h);
    return out;
}

std::vector<ScalarField> region_indicators(const LevelSetState& state) {
    check_phases(state.phases());
    check_eps(state.eps_h);
    const ScalarField& phi1 = state.phi[0];
    const std::size_t h = phi1.height();
    const std::size_t w = phi1.width();
    std::vector<ScalarField> chi(state.num_classes(), ScalarField(h, w));
    for (std::size_t k = 0; k < phi1.size(); ++k) {
        const double h1 = heaviside_eps(phi1[k], state.eps_h);
        const double n1 = heaviside_eps_complement(phi1[k], state.eps_h);
        if (state.phases() == 1) {
            chi[0][k] = n1;
            chi[1][k] = h1;
            continue;
        }
        const double h2 = heaviside_eps(state.phi[1][k], state.eps_h);
        const double n2 = heaviside_eps_complement(state.phi[1][k], state.eps_h);
        chi[0][k] = n1 * n2;
        chi[1][k] = n1 * h2;
        chi[2][k] = h1 * n2;
        chi[3][k] = h1 * h2;
    }
    return chi;
}

Centroids region_means(const Image& x, const LevelSetState& state) {
    check_image(x, state);
    return soft_centroids(x, region_indicators(state));
}

ScalarField curvature_central(const ScalarField& phi) {
    const std::size_t h = phi.height();
    const std::size_t w = phi.width();
    auto clamp_index = [](std::size_t i, std::ptrdiff_t step, std::size_t n) {
        const auto v = static_cast<std::ptrdiff_t>(i) + step;
        return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
    };
    ScalarField nx(h, w);
    ScalarField ny(h, w);
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            const double px = 0.5 * (phi(i, clamp_index(j, 1, w)) - phi(i, clamp_index(j, -1, w)));
            const double py = 0.5 * (phi(clamp_index(i, 1, h), j) - phi(clamp_index(i, -1, h), j));
            const double norm = std::sqrt(px * px + py * py) + kCurvatureGuard;
            nx(i, j) = px / norm;
            ny(i, j) = py / norm;
        }
    }
    ScalarField kappa(h, w);
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            kappa(i, j) = 0.5 * (nx(i, clamp_index(j, 1, w)) - nx(i, clamp_index(j, -1, w))) +
                          0.5 * (ny(clamp_index(i, 1, h), j) - ny(clamp_index(i, -1, h), j));
        }
    }
    return kappa;
}

std::vector<ScalarField> levelset_velocity(const Image& x, const LevelSetState& state) {
    return levelset_velocity(x, state, region_means(x, state));
}

std::vector<ScalarField> levelset_velocity(const Image& x, const LevelSetState& state, const Centroids& means) {
    check_phases(state.phases());
    check_eps(state.eps_h);
    check_image(x, state);
    if (means.num_classes() != state.num_classes() || means.channels() != x.channels()) {
        throw InputError("levelset_velocity: means do not match the state");
    }
    std::vector<ScalarField> velocity;
    velocity.reserve(state.phases());
    for (std::size_t i = 0; i < state.phases(); ++i) {
        const ScalarField& phi = state.phi[i];
        const ScalarField kappa = curvature_central(phi);
        ScalarField v(phi.height(), phi.width());
        for (std::size_t k = 0; k < phi.size(); ++k) {
            const auto px = x.pixel(k);
            double competition = 0.0;
            if (state.phases() == 1) {
                competition = squared_distance(px, means.row(1)) - squared_distance(px, means.row(0));
            } else {
                // class index 2 a + b with a = [phi_1 > 0], b = [phi_2 > 0]
                const std::size_t other = 1 - i;
                const double h_other = heaviside_eps(state.phi[other][k], state.eps_h);
                const double n_other = heaviside_eps_complement(state.phi[other][k], state.eps_h);
                const std::size_t bit_self = i == 0 ? 2 : 1;
                const std::size_t bit_other = i == 0 ? 1 : 2;
                const double inside_on = squared_distance(px, means.row(bit_self + bit_other)) -
                                         squared_distance(px, means.row(bit_other));
                const double inside_off =
                    squared_distance(px, means.row(bit_self)) - squared_distance(px, means.row(0));
                competition = inside_on * h_other + inside_off * n_other;
            }
            v[k] = delta_eps(phi[k], state.eps_h) * (state.lambda * kappa[k] - competition);
        }
        velocity.push_back(std::move(v));
    }
    return velocity;
}

LevelSetState evolve_step(const Image& x, const LevelSetState& state) {
    state.validate();
    const auto velocity = levelset_velocity(x, state);
    LevelSetState next = state;
    for (std::size_t i = 0; i < next.phases(); ++i) {
        for (std::size_t k = 0; k < next.phi[i].size(); ++k) next.phi[i][k] += state.dt * velocity[i][k];
    }
    return next;
}

LevelSetEnergy levelset_energy(const Image& x, const LevelSetState& state) {
    check_image(x, state);
    const auto chi = region_indicators(state);
    const Centroids c = soft_centroids(x, chi);
    LevelSetEnergy e;
    for (std::size_t n = 0; n < chi.size(); ++n) {
        for (std::size_t k = 0; k < chi[n].size(); ++k) e.data_term += squared_distance(x.pixel(k), c.row(n)) * chi[n][k];
    }
    for (const auto& phi : state.phi) e.length_term += tv_smooth(heaviside_eps(phi, state.eps_h), kLengthTvEps);
    e.length_term *= state.lambda;
    e.energy = e.data_term + e.length_term;
    return e;
}

LabelMap levelset_labels(const LevelSetState& state) {
    check_phases(state.phases());
    const ScalarField& phi1 = state.phi[0];
    std::vector<std::uint8_t> labels(phi1.size());
    for (std::size_t k = 0; k < phi1.size(); ++k) {
        std::uint8_t label = phi1[k] > 0.0 ? 1 : 0;
        if (state.phases() == 2) label = static_cast<std::uint8_t>(2 * label + (state.phi[1][k] > 0.0 ? 1 : 0));
        labels[k] = label;
    }
    return LabelMap(phi1.height(), phi1.width(), std::move(labels));
}

void LevelSetParams::validate() const {
    check_phases(phases);
    if (max_iters == 0) throw ParameterError("max_iters must be positive");
    if (!(rel_tol > 0.0) || !std::isfinite(rel_tol)) throw ParameterError("rel_tol must be positive");
    LevelSetState probe{{}, eps_h, dt, lambda};
    probe.phi.assign(phases, ScalarField(1, 1));
    probe.validate();
}

std::vector<ScalarField> checkerboard_init(std::size_t height, std::size_t width, std::size_t phases,
                                           std::uint64_t seed) {
    check_phases(phases);
    if (height == 0 || width == 0) throw InputError("checkerboard_init: empty grid");
    std::mt19937_64 rng(seed);
    std::vector<ScalarField> phi;
    for (std::size_t i = 0; i < phases; ++i) {
        // cells of 5 and 7 pixels so the two patterns do not align
        const double period = 5.0 + 2.0 * static_cast<double>(i);
        std::uniform_real_distribution<double> offset(0.0, 2.0 * period);
        const double oy = offset(rng);
        const double ox = offset(rng);
        ScalarField f(height, width);
        for (std::size_t r = 0; r < height; ++r) {
            for (std::size_t c = 0; c < width; ++c) {
                f(r, c) = std::sin(std::numbers::pi * (static_cast<double>(r) + oy) / period) *
                          std::sin(std::numbers::pi * (static_cast<double>(c) + ox) / period);
            }
        }
        phi.push_back(std::move(f));
    }
    return phi;
}

LevelSetResult segment_levelset(const Image& x, const LevelSetParams& params) {
    params.validate();
    return segment_levelset(x, params, checkerboard_init(x.height(), x.width(), params.phases, params.seed));
}

LevelSetResult segment_levelset(const Image& x, const LevelSetParams& params, std::vector<ScalarField> init) {
    params.validate();
    if (init.size() != params.phases) throw InputError("segment_levelset: init has the wrong number of level functions");
    LevelSetState state{std::move(init), params.eps_h, params.dt, params.lambda};
    state.validate();
    check_image(x, state);

    auto row_of = [](const LevelSetEnergy& e) { return TraceRow{0, e.energy, e.data_term, e.length_term, 0.0}; };
    std::vector<TraceRow> trace;
    TraceRow current = row_of(levelset_energy(x, state));
    trace.push_back(current);

    bool converged = false;
    double dt = params.dt;
    for (std::size_t iter = 1; iter <= params.max_iters; ++iter) {
        const auto velocity = levelset_velocity(x, state);
        std::optional<LevelSetState> accepted;
        TraceRow row;
        for (int attempt = 0; attempt <= kMaxHalvings; ++attempt, dt *= 0.5) {
            LevelSetState candidate = state;
            for (std::size_t i = 0; i < candidate.phases(); ++i) {
                for (std::size_t k = 0; k < candidate.phi[i].size(); ++k) candidate.phi[i][k] += dt * velocity[i][k];
            }
            row = row_of(levelset_energy(x, candidate));
            if (row.loss <= current.loss) {
                accepted.emplace(std::move(candidate));
                break;
            }
        }
        if (!accepted) {
            converged = true;
            break;
        }
        state = std::move(*accepted);
        row.iter = iter;
        trace.push_back(row);
        const double prev = current.loss;
        current = row;
        dt = std::min(2.0 * dt, kMaxStepGrowth * params.dt);
        if (detail::relative_change_below(prev, current.loss, params.rel_tol)) {
            converged = true;
            break;
        }
    }

    Centroids means = region_means(x, state);
    LabelMap labels = levelset_labels(state);
    LevelSetResult result{std::move(labels), std::move(state), std::move(means), std::move(trace), converged};
    if (!converged) {
        throw SolverFailure<LevelSetResult>("segment_levelset: max_iters reached before rel_tol", std::move(result));
    }
    return result;
}

}  // namespace msvar
