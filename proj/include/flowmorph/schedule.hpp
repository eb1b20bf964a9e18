#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace flowmorph {

/// Discrete variance-preserving noise schedule with a linear beta ramp,
/// plus a continuous-time view obtained by interpolating the log-SNR.
///
/// Tables are indexed by the training step i:
///   beta[i]   = beta_min + (i-1)(beta_max-beta_min)/N_T,  i in 1..N_T
///   alpha[i]^2 = prod_{n<=i} (1 - beta[n]),  alpha[0] = 1
///   sigma[i]  = sqrt(1 - alpha[i]^2),         sigma[0] = 0
///   lambda[i] = log(alpha[i]/sigma[i]),       lambda[0] = +inf (sentinel)
///
/// alpha^2 + sigma^2 = 1 holds at every knot and at every interpolated
/// query point, because continuous queries recover (alpha, sigma) from the
/// interpolated lambda under that constraint.
class NoiseSchedule {
public:
    /// Smallest continuously queryable time index. lambda diverges at 0;
    /// index 0 is reachable only through the solvers' algebraic step forms.
    static constexpr double t_floor = 1.0;

    /// Step used by the central finite differences in drift_diffusion,
    /// in index units.
    static constexpr double fd_step = 1e-3;

    static NoiseSchedule build(int n_steps_total, double beta_min, double beta_max) {
        if (n_steps_total < 2)
            throw std::invalid_argument("NoiseSchedule: n_steps_total must be >= 2");
        if (!(beta_min > 0.0) || !(beta_min < beta_max) || !(beta_max < 1.0))
            throw std::invalid_argument("NoiseSchedule: need 0 < beta_min < beta_max < 1");

        NoiseSchedule s;
        s.n_total_ = n_steps_total;
        const int nt = n_steps_total;
        s.beta_.resize(nt + 1, 0.0);
        s.alpha_.resize(nt + 1, 0.0);
        s.sigma_.resize(nt + 1, 0.0);
        s.lambda_.resize(nt + 1, 0.0);

        s.alpha_[0] = 1.0;
        s.sigma_[0] = 0.0;
        s.lambda_[0] = std::numeric_limits<double>::infinity();

        double alpha_sq = 1.0;
        for (int i = 1; i <= nt; ++i) {
            s.beta_[i] = beta_min + (i - 1) * (beta_max - beta_min) / nt;
            alpha_sq *= 1.0 - s.beta_[i];
            s.alpha_[i] = std::sqrt(alpha_sq);
            s.sigma_[i] = std::sqrt(1.0 - alpha_sq);
            s.lambda_[i] = std::log(s.alpha_[i] / s.sigma_[i]);
        }
        return s;
    }

    int n_steps_total() const { return n_total_; }

    double beta(int i) const {
        check_index(i, 1, "beta");
        return beta_[i];
    }
    double alpha(int i) const {
        check_index(i, 0, "alpha");
        return alpha_[i];
    }
    double sigma(int i) const {
        check_index(i, 0, "sigma");
        return sigma_[i];
    }
    /// lambda(0) is the +inf sentinel; callers must not use it in arithmetic.
    double lambda(int i) const {
        check_index(i, 0, "lambda");
        return lambda_[i];
    }

    /// log-SNR at a real time index in [t_floor, N_T]. Exact table lookup at
    /// integer times, linear interpolation between knots otherwise.
    double log_snr(double t) const {
        check_time(t);
        return log_snr_unchecked(t);
    }

    /// (alpha, sigma) at a real time index, recovered from the interpolated
    /// log-SNR so that alpha^2 + sigma^2 = 1 at every query point.
    std::pair<double, double> alpha_sigma_at(double t) const {
        check_time(t);
        return coeffs_from_log_snr(log_snr_unchecked(t));
    }

    /// Drift f(t) = d log(alpha)/dt and squared diffusion
    /// g^2(t) = d sigma^2/dt - 2 f(t) sigma^2, by central finite differences
    /// on the interpolated schedule. The end segments of the interpolant are
    /// extended linearly by one fd_step so the differences stay central on
    /// the closed range [t_floor, N_T].
    std::pair<double, double> drift_diffusion(double t) const {
        check_time(t);
        const auto [ap, sp] = coeffs_from_log_snr(log_snr_extended(t + fd_step));
        const auto [am, sm] = coeffs_from_log_snr(log_snr_extended(t - fd_step));
        const double f = (std::log(ap) - std::log(am)) / (2.0 * fd_step);
        const double dsigma_sq = (sp * sp - sm * sm) / (2.0 * fd_step);
        const auto [a0, s0] = coeffs_from_log_snr(log_snr_extended(t));
        (void)a0;
        const double g_sq = dsigma_sq - 2.0 * f * s0 * s0;
        return {f, g_sq};
    }

    /// Inverse of the interpolated log-SNR: time index at which log_snr
    /// equals the given value. Values are clamped to [lambda(N_T), lambda(1)].
    double time_at_log_snr(double l) const {
        if (l >= lambda_[1]) return 1.0;
        if (l <= lambda_[n_total_]) return static_cast<double>(n_total_);
        // lambda_ is strictly decreasing on 1..N_T
        int lo = 1, hi = n_total_;
        while (hi - lo > 1) {
            const int mid = (lo + hi) / 2;
            if (lambda_[mid] >= l)
                lo = mid;
            else
                hi = mid;
        }
        return lo + (l - lambda_[lo]) / (lambda_[lo + 1] - lambda_[lo]);
    }

private:
    NoiseSchedule() = default;

    void check_index(int i, int lowest, const char* what) const {
        if (i < lowest || i > n_total_)
            throw std::out_of_range(std::string("NoiseSchedule: ") + what + " index " +
                                    std::to_string(i) + " outside " +
                                    std::to_string(lowest) + ".." + std::to_string(n_total_));
    }

    void check_time(double t) const {
        if (!(t >= t_floor) || !(t <= static_cast<double>(n_total_)))
            throw std::domain_error("NoiseSchedule: time index " + std::to_string(t) +
                                    " outside [" + std::to_string(t_floor) + ", " +
                                    std::to_string(n_total_) + "]");
    }

    double log_snr_unchecked(double t) const {
        const double fl = std::floor(t);
        if (t == fl) return lambda_[static_cast<int>(fl)];
        const int i = std::clamp(static_cast<int>(fl), 1, n_total_ - 1);
        return lambda_[i] + (t - i) * (lambda_[i + 1] - lambda_[i]);
    }

    // Same interpolant, end segments extended linearly (used for FD probes).
    double log_snr_extended(double t) const {
        const int i = std::clamp(static_cast<int>(std::floor(t)), 1, n_total_ - 1);
        return lambda_[i] + (t - i) * (lambda_[i + 1] - lambda_[i]);
    }

    static std::pair<double, double> coeffs_from_log_snr(double l) {
        const double e2 = std::exp(-2.0 * l);
        const double a = 1.0 / std::sqrt(1.0 + e2);
        return {a, a * std::exp(-l)};
    }

    int n_total_ = 0;
    std::vector<double> beta_, alpha_, sigma_, lambda_;
};

/// Strictly increasing solver knots drawn from the training indices,
/// always anchored at 0 and N_T.
struct TimeGrid {
    std::vector<int> indices;

    int steps() const { return static_cast<int>(indices.size()) - 1; }
};

/// Evenly spaced integer knots: tau_k = round(k*N_T/n), collisions resolved
/// by bumping to the next free integer (cannot trigger for n <= N_T, kept as
/// a guard). Endpoints are always 0 and N_T.
inline TimeGrid make_time_grid(const NoiseSchedule& schedule, int n) {
    const int nt = schedule.n_steps_total();
    if (n < 1 || n > nt)
        throw std::invalid_argument("make_time_grid: need 1 <= n <= " + std::to_string(nt));

    TimeGrid grid;
    grid.indices.resize(n + 1);
    for (int k = 0; k <= n; ++k)
        grid.indices[k] = static_cast<int>(std::llround(static_cast<double>(k) * nt / n));
    for (int k = 1; k <= n; ++k)
        if (grid.indices[k] <= grid.indices[k - 1]) grid.indices[k] = grid.indices[k - 1] + 1;
    grid.indices.front() = 0;
    grid.indices.back() = nt;
    return grid;
}

}  // namespace flowmorph
