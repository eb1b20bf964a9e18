#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <vector>

#include "flowmorph/model.hpp"
#include "flowmorph/rng.hpp"
#include "flowmorph/schedule.hpp"
#include "flowmorph/solvers.hpp"

namespace flowmorph {

/// Configuration of the two-stage morph pipeline: encode both inputs with an
/// ascending solver on the n_forward grid, blend, decode with a descending
/// solver on the n_backward grid.
struct MorphConfig {
    SolverKind forward_kind = SolverKind::ForwardDDIM;
    SolverKind backward_kind = SolverKind::BackwardDPMpp2M;
    int n_forward = 100;
    int n_backward = 50;
    double blend = 0.5;
};

struct MorphResult {
    LatentState morphed;  ///< decoded morph at time 0
    std::optional<LatentState> x_T_a, x_T_b;  ///< encoded terminal states (pipeline mode)
    LatentState x_T_ab;   ///< blended terminal state, or the injected noisy start
    Conditioning z_ab;
    int nfe_forward = 0;  ///< encodes batched: reported once per pair
    int nfe_backward = 0;
};

/// Spherical interpolation between two vectors:
///
///   slerp(u, v; g) = sin((1-g) theta)/sin(theta) u + sin(g theta)/sin(theta) v,
///   theta = arccos(u.v / (|u| |v|)).
///
/// Bitwise-identical inputs return u exactly. Near-parallel inputs
/// (|cos theta| > 1 - 1e-7) fall back to linear interpolation since the
/// formula degenerates; exactly antiparallel inputs are an error.
inline std::vector<double> slerp(const std::vector<double>& u, const std::vector<double>& v,
                                 double gamma) {
    if (u.size() != v.size()) throw std::invalid_argument("slerp: dimension mismatch");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("slerp: gamma outside [0,1]");
    if (u == v) return u;

    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    nu = std::sqrt(nu);
    nv = std::sqrt(nv);
    if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("slerp: zero-norm input");

    const double c = std::clamp(dot / (nu * nv), -1.0, 1.0);
    if (c <= -(1.0 - 1e-12)) throw std::invalid_argument("slerp: antiparallel inputs");

    std::vector<double> out(u.size());
    if (std::abs(c) > 1.0 - 1e-7) {
        const double wu = 1.0 - gamma;
        for (std::size_t i = 0; i < u.size(); ++i) out[i] = wu * u[i] + gamma * v[i];
        return out;
    }
    const double theta = std::acos(c);
    const double s = std::sin(theta);
    const double wu = std::sin((1.0 - gamma) * theta) / s;
    const double wv = std::sin(gamma * theta) / s;
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = wu * u[i] + wv * v[i];
    return out;
}

namespace detail {

inline std::vector<double> blend_weighted(const std::vector<double>& a,
                                          const std::vector<double>& b, double gamma) {
    if (a.size() != b.size()) throw std::invalid_argument("blend: dimension mismatch");
    if (a == b) return a;
    std::vector<double> out(a.size());
    const double wa = 1.0 - gamma;
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = wa * a[i] + gamma * b[i];
    return out;
}

inline void check_morph_config(const MorphConfig& config, const NoiseSchedule& schedule) {
    if (!is_forward(config.forward_kind) || config.forward_kind == SolverKind::ReferenceRK4)
        throw std::invalid_argument("morph: forward_kind must be an ascending solver");
    if (is_forward(config.backward_kind) || config.backward_kind == SolverKind::ReferenceRK4)
        throw std::invalid_argument("morph: backward_kind must be a descending solver");
    if (config.n_forward < 1 || config.n_forward > schedule.n_steps_total() ||
        config.n_backward < 1 || config.n_backward > schedule.n_steps_total())
        throw std::invalid_argument("morph: step counts outside 1..N_T");
    if (!(config.blend >= 0.0 && config.blend <= 1.0))
        throw std::invalid_argument("morph: blend outside [0,1]");
}

}  // namespace detail

/// The two-input morph pipeline: encode both inputs to their terminal
/// states, spherically interpolate the terminal states, average the
/// conditionings with weights (1-blend, blend), then decode under the
/// blended conditioning. Deterministic; morphing an input with itself
/// reproduces its plain encode-decode reconstruction bitwise.
inline MorphResult dim_morph(const NoiseModel& model, const NoiseSchedule& schedule,
                             const LatentState& x0_a, const Conditioning& z_a,
                             const LatentState& x0_b, const Conditioning& z_b,
                             const MorphConfig& config) {
    detail::check_morph_config(config, schedule);
    if (x0_a.dim() != x0_b.dim() || z_a.z.size() != z_b.z.size())
        throw std::invalid_argument("dim_morph: input dimensions disagree");
    if (x0_a.time_index != 0.0 || x0_b.time_index != 0.0)
        throw std::invalid_argument("dim_morph: inputs must sit at time 0");

    const TimeGrid grid_f = make_time_grid(schedule, config.n_forward);
    const TimeGrid grid_b = make_time_grid(schedule, config.n_backward);

    const Trajectory enc_a = solve(schedule, model, z_a, x0_a, grid_f, config.forward_kind);
    const Trajectory enc_b = solve(schedule, model, z_b, x0_b, grid_f, config.forward_kind);

    MorphResult result;
    result.x_T_a = enc_a.states.back();
    result.x_T_b = enc_b.states.back();
    result.x_T_ab = LatentState{slerp(result.x_T_a->x, result.x_T_b->x, config.blend),
                                static_cast<double>(schedule.n_steps_total())};
    result.z_ab = Conditioning{detail::blend_weighted(z_a.z, z_b.z, config.blend)};

    const Trajectory dec =
        solve(schedule, model, result.z_ab, result.x_T_ab, grid_b, config.backward_kind);
    result.morphed = dec.states.back();
    result.nfe_forward = enc_a.nfe;  // both encodes run in one batch
    result.nfe_backward = dec.nfe;
    return result;
}

/// Morph variant that skips encoding: averages the two inputs pixel-wise,
/// perturbs the average to the schedule's time t = round(noise_level * N_T)
/// as x_t = alpha_t avg + sigma_t eps with seeded counter-based noise, then
/// decodes from the nearest backward-grid knot at or below that time.
/// noise_level -> 0 returns the pixel-wise average exactly (no noise, no
/// solver steps).
inline MorphResult noise_inject_morph(const NoiseModel& model, const NoiseSchedule& schedule,
                                      const LatentState& x0_a, const LatentState& x0_b,
                                      const Conditioning& z_ab, double noise_level,
                                      std::uint64_t rng_seed, const MorphConfig& config) {
    detail::check_morph_config(config, schedule);
    if (!(noise_level > 0.0 && noise_level <= 1.0))
        throw std::invalid_argument("noise_inject_morph: noise_level outside (0,1]");
    if (x0_a.dim() != x0_b.dim())
        throw std::invalid_argument("noise_inject_morph: input dimensions disagree");
    if (x0_a.time_index != 0.0 || x0_b.time_index != 0.0)
        throw std::invalid_argument("noise_inject_morph: inputs must sit at time 0");

    const std::size_t d = x0_a.dim();
    std::vector<double> avg(d);
    for (std::size_t i = 0; i < d; ++i) avg[i] = 0.5 * (x0_a.x[i] + x0_b.x[i]);

    const TimeGrid grid = make_time_grid(schedule, config.n_backward);
    const long target = std::llround(noise_level * schedule.n_steps_total());

    // snap to the nearest grid knot, ties toward the smaller knot
    std::size_t knot_pos = 0;
    long best = std::labs(grid.indices[0] - target);
    for (std::size_t k = 1; k < grid.indices.size(); ++k) {
        const long dist = std::labs(grid.indices[k] - target);
        if (dist < best) {
            best = dist;
            knot_pos = k;
        }
    }
    const int t_start = grid.indices[knot_pos];

    MorphResult result;
    result.z_ab = z_ab;
    if (t_start == 0) {
        result.morphed = LatentState{avg, 0.0};
        result.x_T_ab = result.morphed;
        return result;
    }

    const double a = schedule.alpha(t_start);
    const double s = schedule.sigma(t_start);
    const std::vector<double> eps = standard_normals(rng_seed, 0, d);
    LatentState start;
    start.time_index = t_start;
    start.x.resize(d);
    for (std::size_t i = 0; i < d; ++i) start.x[i] = a * avg[i] + s * eps[i];
    result.x_T_ab = start;

    const std::span<const int> sub(grid.indices.data(), knot_pos + 1);
    const Trajectory dec = solve(schedule, model, z_ab, start, sub, config.backward_kind);
    result.morphed = dec.states.back();
    result.nfe_backward = dec.nfe;
    return result;
}

}  // namespace flowmorph
