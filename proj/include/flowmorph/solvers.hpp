#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowmorph/model.hpp"
#include "flowmorph/schedule.hpp"

namespace flowmorph {

/// Stepping rules for the probability-flow ODE. Forward kinds traverse a
/// grid ascending (data to noise), backward kinds descending.
enum class SolverKind {
    BackwardDDIM,
    BackwardDPMpp2M,
    ForwardDiffAE,
    ForwardDDIM,
    ForwardDPMpp2M,
    ReferenceRK4,
};

inline bool is_forward(SolverKind kind) {
    return kind == SolverKind::ForwardDiffAE || kind == SolverKind::ForwardDDIM ||
           kind == SolverKind::ForwardDPMpp2M;
}

inline const char* solver_name(SolverKind kind) {
    switch (kind) {
        case SolverKind::BackwardDDIM: return "backward-ddim";
        case SolverKind::BackwardDPMpp2M: return "backward-dpmpp2m";
        case SolverKind::ForwardDiffAE: return "forward-diffae";
        case SolverKind::ForwardDDIM: return "forward-ddim";
        case SolverKind::ForwardDPMpp2M: return "forward-dpmpp2m";
        case SolverKind::ReferenceRK4: return "reference-rk4";
    }
    return "?";
}

/// States visited along a traversal plus the exact count of model
/// evaluations spent producing them.
struct Trajectory {
    std::vector<LatentState> states;
    int nfe = 0;
};

namespace detail {

inline void check_knot(const NoiseSchedule& schedule, double t, const char* what) {
    if (t != std::floor(t) || t < 0.0 || t > schedule.n_steps_total())
        throw std::invalid_argument(std::string(what) + ": time " + std::to_string(t) +
                                    " is not a schedule index");
}

inline LatentState assemble(const NoiseSchedule& schedule, const ModelEval& eval, int target) {
    // x_u = alpha_u * x0_hat + sigma_u * eps_hat. Algebraically identical to
    // the exponential-integrator update wherever sigma > 0 and finite at the
    // sigma = 0 endpoints, so no lambda is ever evaluated at index 0.
    const double au = schedule.alpha(target);
    const double su = schedule.sigma(target);
    LatentState out;
    out.time_index = target;
    out.x.resize(eval.x0_hat.size());
    for (std::size_t i = 0; i < out.x.size(); ++i)
        out.x[i] = au * eval.x0_hat[i] + su * eval.eps_hat[i];
    return out;
}

}  // namespace detail

/// One first-order exponential-integrator (DDIM) step from the state's knot
/// to the target knot, in either direction.
inline LatentState step_ddim(const NoiseSchedule& schedule, const NoiseModel& model,
                             const Conditioning& cond, const LatentState& x_s, int target) {
    detail::check_knot(schedule, x_s.time_index, "step_ddim");
    detail::check_knot(schedule, target, "step_ddim");
    if (static_cast<int>(x_s.time_index) == target)
        throw std::invalid_argument("step_ddim: source and target knots coincide");
    detail::require_finite(x_s.x, "step_ddim");
    return detail::assemble(schedule, model.eval_noise(x_s, cond), target);
}

/// Model evaluation carried over from the previous knot of a multi-step
/// traversal, together with the log-SNR of that knot.
struct PrevKnotEval {
    ModelEval eval;
    double log_snr = 0.0;
};

/// One second-order multi-step (DPM++ 2M) step. Extrapolates the data
/// prediction from the previous knot:
///
///   h      = lambda_u - lambda_s,  h_prev = lambda_s - lambda_prev
///   r      = h_prev / h
///   D      = (1 + 1/(2r)) x0_hat(x_s) - 1/(2r) x0_hat(previous)
///   x_u    = (sigma_u/sigma_s) x_s - alpha_u (e^{-h} - 1) D
///
/// Falls back to the first-order step when no previous evaluation exists and
/// at any step touching a sigma = 0 endpoint (where h or h_prev would be
/// infinite). Returns the new state and the evaluation at the source knot
/// for reuse by the next step.
inline std::pair<LatentState, ModelEval> step_dpmpp2m(
    const NoiseSchedule& schedule, const NoiseModel& model, const Conditioning& cond,
    const LatentState& x_s, int target, const std::optional<PrevKnotEval>& prev) {
    detail::check_knot(schedule, x_s.time_index, "step_dpmpp2m");
    detail::check_knot(schedule, target, "step_dpmpp2m");
    const int source = static_cast<int>(x_s.time_index);
    if (source == target)
        throw std::invalid_argument("step_dpmpp2m: source and target knots coincide");
    detail::require_finite(x_s.x, "step_dpmpp2m");

    ModelEval eval = model.eval_noise(x_s, cond);
    if (!prev || source == 0 || target == 0)
        return {detail::assemble(schedule, eval, target), std::move(eval)};

    const double lam_s = schedule.lambda(source);
    const double lam_u = schedule.lambda(target);
    const double h = lam_u - lam_s;
    const double h_prev = lam_s - prev->log_snr;
    if (!(h_prev * h > 0.0))
        throw std::invalid_argument("step_dpmpp2m: previous step direction disagrees");
    const double r = h_prev / h;
    const double c = 1.0 / (2.0 * r);

    const double ratio = schedule.sigma(target) / schedule.sigma(source);
    const double au_em1 = schedule.alpha(target) * std::expm1(-h);
    LatentState out;
    out.time_index = target;
    out.x.resize(x_s.dim());
    for (std::size_t i = 0; i < out.x.size(); ++i) {
        const double d = (1.0 + c) * eval.x0_hat[i] - c * prev->eval.x0_hat[i];
        out.x[i] = ratio * x_s.x[i] - au_em1 * d;
    }
    return {std::move(out), std::move(eval)};
}

/// One step of the heuristic encoder used by diffusion autoencoders,
/// ascending only:
///
///   x_u = (sigma_u/sigma_s) (x_s - alpha_s (e^{h} - 1) x0_hat(x_s)),
///   h   = lambda_u - lambda_s  (negative in forward time).
///
/// It differs from the forward DDIM step by exactly the closed-form local
/// discrepancy of delta_discrepancy.
inline LatentState step_diffae_forward(const NoiseSchedule& schedule, const NoiseModel& model,
                                       const Conditioning& cond, const LatentState& x_s,
                                       int target) {
    detail::check_knot(schedule, x_s.time_index, "step_diffae_forward");
    detail::check_knot(schedule, target, "step_diffae_forward");
    const int source = static_cast<int>(x_s.time_index);
    if (target < source)
        throw std::invalid_argument("step_diffae_forward: descending step");
    if (source < 1)
        throw std::invalid_argument("step_diffae_forward: source knot must have sigma > 0");
    detail::require_finite(x_s.x, "step_diffae_forward");

    const ModelEval eval = model.eval_noise(x_s, cond);
    const double h = schedule.lambda(target) - schedule.lambda(source);
    const double ratio = schedule.sigma(target) / schedule.sigma(source);
    const double as_em1 = schedule.alpha(source) * std::expm1(h);
    LatentState out;
    out.time_index = target;
    out.x.resize(x_s.dim());
    for (std::size_t i = 0; i < out.x.size(); ++i)
        out.x[i] = ratio * (x_s.x[i] - as_em1 * eval.x0_hat[i]);
    return out;
}

/// Closed-form local difference between the heuristic encoder step and the
/// forward DDIM step for a shared data prediction, elementwise absolute:
///
///   | ((sigma_u/sigma_s) alpha_s (e^{h}-1) - alpha_u (e^{-h}-1)) x0_hat |
inline std::vector<double> delta_discrepancy(const NoiseSchedule& schedule,
                                             const std::vector<double>& x0_hat_value, int s,
                                             int u) {
    if (u < s) throw std::invalid_argument("delta_discrepancy: descending pair");
    if (s < 1) throw std::invalid_argument("delta_discrepancy: need sigma_s > 0");
    detail::check_knot(schedule, u, "delta_discrepancy");
    const double h = schedule.lambda(u) - schedule.lambda(s);
    const double coef = (schedule.sigma(u) / schedule.sigma(s)) * schedule.alpha(s) * std::expm1(h) -
                        schedule.alpha(u) * std::expm1(-h);
    std::vector<double> out(x0_hat_value.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(coef * x0_hat_value[i]);
    return out;
}

/// Traverses an ascending knot sequence with the stepping rule of `kind`
/// (descending kinds walk it back to front). One model evaluation per step;
/// multi-step rules reuse the stored previous evaluation. Deterministic.
inline Trajectory solve(const NoiseSchedule& schedule, const NoiseModel& model,
                        const Conditioning& cond, const LatentState& x_init,
                        std::span<const int> knots, SolverKind kind) {
    if (kind == SolverKind::ReferenceRK4)
        throw std::invalid_argument(
            "solve: the reference integrator takes explicit substeps; use solve_reference");
    if (knots.size() < 2) throw std::invalid_argument("solve: need at least two knots");
    for (std::size_t i = 0; i + 1 < knots.size(); ++i)
        if (knots[i] >= knots[i + 1])
            throw std::invalid_argument("solve: knots must be strictly increasing");
    detail::check_knot(schedule, knots.front(), "solve");
    detail::check_knot(schedule, knots.back(), "solve");

    const bool forward = is_forward(kind);
    const int start = forward ? knots.front() : knots.back();
    if (x_init.time_index != static_cast<double>(start))
        throw std::invalid_argument("solve: initial state sits at time " +
                                    std::to_string(x_init.time_index) + ", expected knot " +
                                    std::to_string(start) + " for " + solver_name(kind));

    Trajectory traj;
    traj.states.reserve(knots.size());
    traj.states.push_back(x_init);

    std::optional<PrevKnotEval> prev;
    const int n = static_cast<int>(knots.size()) - 1;
    for (int step = 0; step < n; ++step) {
        const LatentState& cur = traj.states.back();
        const int source = forward ? knots[step] : knots[n - step];
        const int target = forward ? knots[step + 1] : knots[n - step - 1];

        switch (kind) {
            case SolverKind::BackwardDDIM:
            case SolverKind::ForwardDDIM:
                traj.states.push_back(step_ddim(schedule, model, cond, cur, target));
                break;
            case SolverKind::BackwardDPMpp2M:
            case SolverKind::ForwardDPMpp2M: {
                auto [next, eval] = step_dpmpp2m(schedule, model, cond, cur, target, prev);
                if (source >= 1)
                    prev = PrevKnotEval{std::move(eval), schedule.lambda(source)};
                else
                    prev.reset();
                traj.states.push_back(std::move(next));
                break;
            }
            case SolverKind::ForwardDiffAE:
                // The heuristic step divides by sigma_s, so the traversal
                // leaves knot 0 with the first-order endpoint form.
                if (source == 0)
                    traj.states.push_back(step_ddim(schedule, model, cond, cur, target));
                else
                    traj.states.push_back(step_diffae_forward(schedule, model, cond, cur, target));
                break;
            case SolverKind::ReferenceRK4:
                break;  // rejected above
        }
        ++traj.nfe;
    }
    return traj;
}

inline Trajectory solve(const NoiseSchedule& schedule, const NoiseModel& model,
                        const Conditioning& cond, const LatentState& x_init, const TimeGrid& grid,
                        SolverKind kind) {
    return solve(schedule, model, cond, x_init, std::span<const int>(grid.indices), kind);
}

/// Model-agnostic reference integrator for the probability-flow ODE
///
///   dx/dt = f(t) x + (g^2(t) / (2 sigma_t)) eps_hat(x, z, t),
///
/// run as classical fixed-step RK4 in the log-SNR variable, where the
/// identities f = sigma^2 dlambda/dt and g^2/(2 sigma) = -sigma dlambda/dt
/// reduce the right side to the kink-free form dx/dlambda = sigma^2 x -
/// sigma eps_hat. Four model evaluations per substep.
inline LatentState solve_reference(const NoiseSchedule& schedule, const NoiseModel& model,
                                   const Conditioning& cond, const LatentState& x_init,
                                   double t_from, double t_to, int n_substeps) {
    if (n_substeps < 100)
        throw std::invalid_argument("solve_reference: need at least 100 substeps");
    if (x_init.time_index != t_from)
        throw std::invalid_argument("solve_reference: initial state is not at t_from");
    detail::require_finite(x_init.x, "solve_reference");

    if (t_from == t_to) {
        LatentState out = x_init;
        return out;
    }

    const double l_from = schedule.log_snr(t_from);  // range-checks the times
    const double l_to = schedule.log_snr(t_to);
    const double h = (l_to - l_from) / n_substeps;
    const std::size_t d = x_init.dim();

    std::vector<double> x = x_init.x;
    std::vector<double> k1(d), k2(d), k3(d), k4(d), tmp(d);

    auto rhs = [&](const std::vector<double>& xv, double l, std::vector<double>& out_k) {
        const double e2 = std::exp(-2.0 * l);
        const double a = 1.0 / std::sqrt(1.0 + e2);
        const double s = a * std::exp(-l);
        LatentState probe{xv, schedule.time_at_log_snr(l)};
        const ModelEval eval = model.eval_noise(probe, cond);
        for (std::size_t i = 0; i < d; ++i) out_k[i] = s * s * xv[i] - s * eval.eps_hat[i];
    };

    double l = l_from;
    for (int step = 0; step < n_substeps; ++step) {
        rhs(x, l, k1);
        for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
        rhs(tmp, l + 0.5 * h, k2);
        for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
        rhs(tmp, l + 0.5 * h, k3);
        for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + h * k3[i];
        rhs(tmp, l + h, k4);
        for (std::size_t i = 0; i < d; ++i)
            x[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        l = l_from + (step + 1) * h;
    }
    return LatentState{std::move(x), t_to};
}

}  // namespace flowmorph
