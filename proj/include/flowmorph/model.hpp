#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flowmorph/schedule.hpp"

namespace flowmorph {

/// State vector x_t at a (possibly fractional) time index.
struct LatentState {
    std::vector<double> x;
    double time_index = 0.0;

    std::size_t dim() const { return x.size(); }
};

/// Semantic latent z conditioning every model evaluation.
struct Conditioning {
    std::vector<double> z;
};

/// A model evaluation in both parameterizations. They are tied together by
/// x = alpha*x0_hat + sigma*eps_hat at the evaluation point.
struct ModelEval {
    std::vector<double> eps_hat;
    std::vector<double> x0_hat;
};

namespace detail {

inline void require_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite entry");
}

/// (alpha, sigma) at a real time, including the sigma = 0 endpoint at t = 0.
inline std::pair<double, double> coeffs_at(const NoiseSchedule& schedule, double t) {
    if (t == 0.0) return {1.0, 0.0};
    if (t == std::floor(t) && t >= 1.0 && t <= schedule.n_steps_total()) {
        const int i = static_cast<int>(t);
        return {schedule.alpha(i), schedule.sigma(i)};
    }
    return schedule.alpha_sigma_at(t);
}

}  // namespace detail

/// Noise-prediction interface consumed by every solver. Implementations are
/// immutable after construction; eval_noise is pure and safe to call
/// concurrently.
class NoiseModel {
public:
    virtual ~NoiseModel() = default;

    virtual ModelEval eval_noise(const LatentState& state, const Conditioning& cond) const = 0;
    virtual const NoiseSchedule& schedule() const = 0;
};

/// How a conditioning vector of mismatched length is fitted to the model
/// dimension.
enum class MeanFit {
    Strict,      ///< dimension mismatch is an error
    PadTruncate  ///< zero-pad or truncate z to the model dimension
};

/// Analytic conditional Gaussian stand-in for a trained noise predictor.
///
/// The data distribution is N(z, spread^2 * I) with the conditioning vector
/// as its mean, so the time-t marginal is N(alpha_t z, (alpha_t^2 s^2 +
/// sigma_t^2) I) and the score is available in closed form:
///
///   eps_hat = sigma_t (x - alpha_t z) / (alpha_t^2 s^2 + sigma_t^2)
///   x0_hat  = (x - sigma_t eps_hat) / alpha_t
///
/// Because every marginal is Gaussian, the deterministic flow between two
/// times is the quantile-preserving affine map, giving an exact oracle for
/// the numerical solvers.
class GaussianModel final : public NoiseModel {
public:
    GaussianModel(const NoiseSchedule& schedule, int dim, double spread,
                  MeanFit fit = MeanFit::Strict)
        : schedule_(&schedule), dim_(dim), spread_(spread), fit_(fit) {
        if (dim < 1) throw std::invalid_argument("GaussianModel: dim must be >= 1");
        if (!(spread > 0.0)) throw std::invalid_argument("GaussianModel: spread must be > 0");
    }

    int dim() const { return dim_; }
    double spread() const { return spread_; }
    const NoiseSchedule& schedule() const override { return *schedule_; }

    ModelEval eval_noise(const LatentState& state, const Conditioning& cond) const override {
        detail::require_finite(state.x, "GaussianModel::eval_noise");
        if (static_cast<int>(state.dim()) != dim_)
            throw std::invalid_argument("GaussianModel: state dimension != model dimension");
        const std::vector<double> mean = fit_mean(cond);

        const auto [a, s] = detail::coeffs_at(*schedule_, state.time_index);
        const double var = a * a * spread_ * spread_ + s * s;

        ModelEval eval;
        eval.eps_hat.resize(state.dim());
        eval.x0_hat.resize(state.dim());
        for (std::size_t i = 0; i < state.dim(); ++i) {
            eval.eps_hat[i] = s * (state.x[i] - a * mean[i]) / var;
            eval.x0_hat[i] = (state.x[i] - s * eval.eps_hat[i]) / a;
        }
        return eval;
    }

    /// Exact deterministic transport of the probability flow from the state's
    /// time to t_target: x_t = alpha_t z + sqrt(V_t/V_s) (x_s - alpha_s z)
    /// with V_t = alpha_t^2 s^2 + sigma_t^2. Time 0 is admitted through its
    /// sigma = 0 limit.
    LatentState exact_flow_map(const LatentState& from, const Conditioning& cond,
                               double t_target) const {
        detail::require_finite(from.x, "GaussianModel::exact_flow_map");
        if (static_cast<int>(from.dim()) != dim_)
            throw std::invalid_argument("GaussianModel: state dimension != model dimension");
        const std::vector<double> mean = fit_mean(cond);

        const auto [as, ss] = detail::coeffs_at(*schedule_, from.time_index);
        const auto [at, st] = detail::coeffs_at(*schedule_, t_target);
        const double vs = as * as * spread_ * spread_ + ss * ss;
        const double vt = at * at * spread_ * spread_ + st * st;
        const double scale = std::sqrt(vt / vs);

        LatentState out;
        out.time_index = t_target;
        out.x.resize(from.dim());
        for (std::size_t i = 0; i < from.dim(); ++i)
            out.x[i] = at * mean[i] + scale * (from.x[i] - as * mean[i]);
        return out;
    }

private:
    std::vector<double> fit_mean(const Conditioning& cond) const {
        detail::require_finite(cond.z, "GaussianModel: conditioning");
        if (static_cast<int>(cond.z.size()) == dim_) return cond.z;
        if (fit_ == MeanFit::Strict)
            throw std::invalid_argument("GaussianModel: conditioning dimension " +
                                        std::to_string(cond.z.size()) + " != model dimension " +
                                        std::to_string(dim_));
        std::vector<double> mean(dim_, 0.0);
        const std::size_t n = std::min<std::size_t>(cond.z.size(), dim_);
        for (std::size_t i = 0; i < n; ++i) mean[i] = cond.z[i];
        return mean;
    }

    const NoiseSchedule* schedule_;
    int dim_;
    double spread_;
    MeanFit fit_;
};

}  // namespace flowmorph
