#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "msvar/errors.hpp"
#include "msvar/grid.hpp"
#include "msvar/labels.hpp"
#include "msvar/soft_seg.hpp"

namespace msvar {

/// Level functions phi_1..phi_p (p in {1, 2}) and the evolution parameters.
struct LevelSetState {
    std::vector<ScalarField> phi;
    double eps_h = 1.0;    ///< Heaviside smoothing width, in pixels of phi
    double dt = 0.5;
    double lambda = 1e-2;  ///< length weight for intensities in [0, 1]

    std::size_t phases() const noexcept { return phi.size(); }
    std::size_t num_classes() const noexcept { return std::size_t{1} << phi.size(); }

    /// Throws ParameterError / InputError on bad parameters or fields,
    /// including dt * lambda > 0.25.
    void validate() const;
};

/// H(phi) = (1 + (2/pi) atan(phi / eps)) / 2.
double heaviside_eps(double phi, double eps_h);
/// 1 - H(phi), evaluated without cancellation for large positive phi.
double heaviside_eps_complement(double phi, double eps_h);
/// dH/dphi = eps / (pi (eps^2 + phi^2)).
double delta_eps(double phi, double eps_h);

ScalarField heaviside_eps(const ScalarField& phi, double eps_h);
ScalarField delta_eps(const ScalarField& phi, double eps_h);

/// Smoothed class indicators. Class index is 2 [phi_1 > 0] + [phi_2 > 0]
/// for p = 2 and [phi_1 > 0] for p = 1; the indicators sum to one.
std::vector<ScalarField> region_indicators(const LevelSetState& state);

/// Indicator-weighted means, one per class, with the centroid guard.
Centroids region_means(const Image& x, const LevelSetState& state);

/// div(grad phi / (|grad phi| + 1e-8)), both operators by central
/// differences with a replicated border.
ScalarField curvature_central(const ScalarField& phi);

/// d phi_i / dt for every level function, with means recomputed from the
/// state.
std::vector<ScalarField> levelset_velocity(const Image& x, const LevelSetState& state);
std::vector<ScalarField> levelset_velocity(const Image& x, const LevelSetState& state, const Centroids& means);

/// One explicit Euler step phi_i += dt * velocity_i.
LevelSetState evolve_step(const Image& x, const LevelSetState& state);

struct LevelSetEnergy {
    double energy = 0.0;
    double data_term = 0.0;    ///< sum_n sum_r |x - c_n|^2 chi_n
    double length_term = 0.0;  ///< lambda * sum_i TV(H(phi_i))
};

LevelSetEnergy levelset_energy(const Image& x, const LevelSetState& state);

/// Hard labels from the signs of the level functions.
LabelMap levelset_labels(const LevelSetState& state);

struct LevelSetParams {
    std::size_t phases = 1;
    double lambda = 1e-2;
    double dt = 0.5;
    double eps_h = 1.0;
    std::size_t max_iters = 3000;
    double rel_tol = 1e-6;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Checkerboard-like sinusoids with seeded phases, one per level function.
std::vector<ScalarField> checkerboard_init(std::size_t height, std::size_t width, std::size_t phases,
                                           std::uint64_t seed);

struct LevelSetResult {
    LabelMap labels;
    LevelSetState state;
    Centroids means;
    std::vector<TraceRow> trace;  ///< tv_term holds the length term
    bool converged = false;
};

/// Evolves the checkerboard initialization until the relative energy change
/// drops to rel_tol. A step that raises the energy is retried with half the
/// time step and the step doubles again after each accepted move; when no
/// step size helps the evolution has stalled and the run counts as
/// converged. Throws SolverFailure<LevelSetResult> after max_iters.
LevelSetResult segment_levelset(const Image& x, const LevelSetParams& params);
/// Same evolution from caller-supplied level functions.
LevelSetResult segment_levelset(const Image& x, const LevelSetParams& params, std::vector<ScalarField> init);

}  // namespace msvar
