// Acceptance suite: end-to-end checks of the toolkit against the analytic
// Gaussian oracle, one timed pass/fail line per criterion. Exit status is
// nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "flowmorph/metrics.hpp"
#include "flowmorph/model.hpp"
#include "flowmorph/morph.hpp"
#include "flowmorph/rng.hpp"
#include "flowmorph/schedule.hpp"
#include "flowmorph/solvers.hpp"
#include "support/oracles.hpp"

using namespace flowmorph;

namespace {

struct Criterion {
    std::string name;
    double time_limit_s;
    std::function<bool(std::string&)> run;
};

bool check(bool ok, std::string& detail, const std::string& message) {
    if (!ok) detail += (detail.empty() ? "" : "; ") + message;
    return ok;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

const NoiseSchedule& sched() {
    static const NoiseSchedule s = NoiseSchedule::build(1000, 1e-4, 2e-2);
    return s;
}

// --- criterion 1: schedule invariants -------------------------------------
bool criterion_schedule(std::string& detail) {
    const auto& s = sched();
    bool ok = true;
    double worst = 0.0;
    for (int i = 0; i <= 1000; ++i)
        worst = std::max(worst, std::abs(s.alpha(i) * s.alpha(i) + s.sigma(i) * s.sigma(i) - 1.0));
    ok &= check(worst < 1e-12, detail, "variance preservation off by " + fmt(worst));
    for (int i = 2; i <= 1000; ++i)
        if (!(s.lambda(i) < s.lambda(i - 1))) {
            ok = check(false, detail, "lambda not strictly decreasing at " + std::to_string(i));
            break;
        }
    return ok;
}

// --- criterion 2: reference integrator matches the closed form ------------
bool criterion_oracle(std::string& detail) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> tdist(2.0, 999.0);
    const double spreads[] = {0.25, 0.5, 1.0};
    bool ok = true;
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const GaussianModel model(sched(), 4, spreads[k % 3]);
        const Conditioning z{testsupport::random_vector(rng, 4)};
        double t_from = tdist(rng), t_to = tdist(rng);
        if (k % 2) std::swap(t_from, t_to);
        const LatentState x{testsupport::random_vector(rng, 4, 1.5), t_from};
        const LatentState want = model.exact_flow_map(x, z, t_to);
        const LatentState got = solve_reference(sched(), model, z, x, t_from, t_to, 1000);
        worst = std::max(worst, testsupport::rel_l2(got.x, want.x));
    }
    ok &= check(worst < 1e-8, detail, "worst transport error " + fmt(worst));
    return ok;
}

// shared setup for criteria 3 and 4
struct ConvergenceStudy {
    std::vector<int> ns{10, 20, 40, 80};
    std::vector<double> err_ddim, err_multi;
    double err_multi_50 = 0.0, err_ddim_100 = 0.0;

    ConvergenceStudy() {
        const GaussianModel model(sched(), 8, 0.5);
        std::mt19937_64 rng(3);
        const Conditioning z{testsupport::random_unit_vector(rng, 8)};
        std::vector<std::vector<double>> xTs;
        for (int k = 0; k < 8; ++k) xTs.push_back(testsupport::random_vector(rng, 8));

        auto mean_err = [&](SolverKind kind, int n) {
            const TimeGrid grid = make_time_grid(sched(), n);
            double acc = 0.0;
            for (const auto& xT : xTs) {
                const LatentState init{xT, 1000.0};
                const LatentState want = model.exact_flow_map(init, z, 0.0);
                acc += testsupport::rel_l2(solve(sched(), model, z, init, grid, kind).states.back().x,
                                           want.x);
            }
            return acc / xTs.size();
        };

        for (int n : ns) {
            err_ddim.push_back(mean_err(SolverKind::BackwardDDIM, n));
            err_multi.push_back(mean_err(SolverKind::BackwardDPMpp2M, n));
        }
        err_multi_50 = mean_err(SolverKind::BackwardDPMpp2M, 50);
        err_ddim_100 = mean_err(SolverKind::BackwardDDIM, 100);
    }
};

const ConvergenceStudy& study() {
    static const ConvergenceStudy s;
    return s;
}

// --- criterion 3: fitted convergence orders --------------------------------
bool criterion_orders(std::string& detail) {
    const double order_ddim = testsupport::fit_order(study().ns, study().err_ddim);
    const double order_multi = testsupport::fit_order(study().ns, study().err_multi);
    bool ok = true;
    ok &= check(order_ddim >= 0.9 && order_ddim <= 1.3, detail,
                "first-order fit " + fmt(order_ddim) + " outside [0.9, 1.3]");
    ok &= check(order_multi >= 1.7, detail, "multi-step fit " + fmt(order_multi) + " below 1.7");
    return ok;
}

// --- criterion 4: half the steps, same accuracy ----------------------------
bool criterion_nfe_halving(std::string& detail) {
    return check(study().err_multi_50 <= study().err_ddim_100, detail,
                 "multi-step at 50 (" + fmt(study().err_multi_50) + ") worse than first-order at 100 (" +
                     fmt(study().err_ddim_100) + ")");
}

// --- criterion 5: forward-solver ranking ------------------------------------
bool criterion_forward_ranking(std::string& detail) {
    const GaussianModel model(sched(), 8, 0.5);
    std::mt19937_64 rng(11);
    const Conditioning z{testsupport::random_unit_vector(rng, 8)};
    std::vector<std::vector<double>> x0s;
    for (int k = 0; k < 8; ++k) {
        auto x = testsupport::random_vector(rng, 8);
        for (int i = 0; i < 8; ++i) x[i] = z.z[i] + 0.5 * x[i];
        x0s.push_back(std::move(x));
    }

    auto roundtrip_mse = [&](SolverKind forward, int nf) {
        const TimeGrid grid_f = make_time_grid(sched(), nf);
        const TimeGrid grid_b = make_time_grid(sched(), nf);
        double acc = 0.0;
        for (const auto& x0 : x0s) {
            const Trajectory up = solve(sched(), model, z, LatentState{x0, 0.0}, grid_f, forward);
            const Trajectory down =
                solve(sched(), model, z, up.states.back(), grid_b, SolverKind::BackwardDDIM);
            double mse = 0.0;
            for (int i = 0; i < 8; ++i)
                mse += (down.states.back().x[i] - x0[i]) * (down.states.back().x[i] - x0[i]);
            acc += mse / 8;
        }
        return acc / x0s.size();
    };

    bool ok = true;
    const double ddim_100 = roundtrip_mse(SolverKind::ForwardDDIM, 100);
    const double heuristic_100 = roundtrip_mse(SolverKind::ForwardDiffAE, 100);
    ok &= check(ddim_100 < heuristic_100, detail,
                "exponential encode (" + fmt(ddim_100) + ") not below heuristic (" +
                    fmt(heuristic_100) + ") at 100 steps");

    double prev = std::numeric_limits<double>::infinity();
    for (int nf : {20, 50, 100, 250}) {
        const double mse = roundtrip_mse(SolverKind::ForwardDDIM, nf);
        ok &= check(mse <= prev, detail, "encode error rose at N_F=" + std::to_string(nf));
        prev = mse;
    }
    return ok;
}

// --- criterion 6: closed-form step discrepancy ------------------------------
bool criterion_delta_identity(std::string& detail) {
    const GaussianModel model(sched(), 3, 0.5);
    std::mt19937_64 rng(6);
    const Conditioning z{testsupport::random_unit_vector(rng, 3)};
    std::uniform_int_distribution<int> si(1, 999);
    bool ok = true;
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const int s = si(rng);
        std::uniform_int_distribution<int> ui(s + 1, 1000);
        const int u = ui(rng);
        const LatentState x{testsupport::random_vector(rng, 3, 2.0), static_cast<double>(s)};
        const ModelEval eval = model.eval_noise(x, z);
        const LatentState a = step_diffae_forward(sched(), model, z, x, u);
        const LatentState b = step_ddim(sched(), model, z, x, u);
        const std::vector<double> delta = delta_discrepancy(sched(), eval.x0_hat, s, u);
        for (int i = 0; i < 3; ++i)
            worst = std::max(worst, std::abs(std::abs(a.x[i] - b.x[i]) - delta[i]));
    }
    ok &= check(worst < 1e-12, detail, "identity violated by " + fmt(worst));
    return ok;
}

// --- criterion 7: morph pipeline ---------------------------------------------
bool criterion_morph(std::string& detail) {
    const int d = 6;
    const GaussianModel model(sched(), d, 0.5);
    bool ok = true;

    // self-morph equals the plain reconstruction bitwise
    std::mt19937_64 rng(7);
    const Conditioning z{testsupport::random_unit_vector(rng, d)};
    const LatentState x0{testsupport::random_vector(rng, d), 0.0};
    MorphConfig config;  // defaults: N_F=100 encode, N=50 decode
    const MorphResult self = dim_morph(model, sched(), x0, z, x0, z, config);
    const Trajectory up = solve(sched(), model, z, x0, make_time_grid(sched(), config.n_forward),
                                config.forward_kind);
    const Trajectory down = solve(sched(), model, z, up.states.back(),
                                  make_time_grid(sched(), config.n_backward), config.backward_kind);
    ok &= check(self.morphed.x == down.states.back().x, detail, "self-morph not bitwise equal");

    // orthogonal conditionings land nearer the blended mode
    std::vector<double> za(d, 0.0), zb(d, 0.0), zab(d, 0.0);
    za[0] = 1.0;
    zb[1] = 1.0;
    zab[0] = zab[1] = 1.0 / std::sqrt(2.0);
    const MorphResult morph = dim_morph(model, sched(), LatentState{za, 0.0}, Conditioning{za},
                                        LatentState{zb, 0.0}, Conditioning{zb}, config);
    const double to_blend = cosine_similarity(morph.morphed.x, zab);
    const double to_a = cosine_similarity(morph.morphed.x, za);
    const double to_b = cosine_similarity(morph.morphed.x, zb);
    ok &= check(to_blend > to_a && to_blend > to_b, detail, "morph not nearest the blended mode");

    // batched evaluation accounting: 150 total at the defaults
    ok &= check(morph.nfe_forward == 100 && morph.nfe_backward == 50 &&
                    morph.nfe_forward + morph.nfe_backward == 150,
                detail, "evaluation count not reported as N + N_F = 150");
    return ok;
}

// --- criterion 8: noise-injection endpoint ------------------------------------
bool criterion_noise_injection(std::string& detail) {
    const GaussianModel model(sched(), 4, 0.5);
    const LatentState a{{1.0, 2.0, 3.0, 4.0}, 0.0};
    const LatentState b{{0.0, 1.0, -1.0, 2.0}, 0.0};
    const Conditioning z{{0.5, 1.5, 1.0, 3.0}};
    MorphConfig config;
    bool ok = true;

    const MorphResult zero = noise_inject_morph(model, sched(), a, b, z, 1e-4, 5, config);
    ok &= check(zero.morphed.x == std::vector<double>{0.5, 1.5, 1.0, 3.0}, detail,
                "vanishing level is not the exact pixel-wise average");

    const MorphResult r1 = noise_inject_morph(model, sched(), a, b, z, 0.5, 42, config);
    const MorphResult r2 = noise_inject_morph(model, sched(), a, b, z, 0.5, 42, config);
    ok &= check(r1.morphed.x == r2.morphed.x, detail, "fixed seed not bit-identical");
    return ok;
}

// --- criterion 9: vulnerability metrics ----------------------------------------
bool criterion_metrics(std::string& detail) {
    bool ok = true;

    ScoreMatrix two;
    two.thresholds = {0.5};
    two.scores = {{{0.6}, {0.9}}, {{0.4}, {0.8}}};
    ok &= check(mmpmr(two, 0) == 0.5, detail, "hand-computed rate != 0.5");

    ScoreMatrix abc;
    abc.thresholds = {0.5, 0.5, 0.5};
    abc.scores = {
        {{0.9, 0.8, 0.2}, {0.7, 0.6, 0.3}},
        {{0.9, 0.9, 0.9}, {0.8, 0.7, 0.6}},
    };
    ok &= check(map_row(abc) == std::vector<double>{1.0, 1.0, 0.5}, detail,
                "hand-computed row != [1.0, 1.0, 0.5]");

    std::mt19937_64 rng(13);
    std::uniform_int_distribution<int> morphs(1, 5), subjects(2, 4), verifiers(1, 4);
    std::uniform_real_distribution<double> score(0.0, 1.0);
    for (int k = 0; k < 1000 && ok; ++k) {
        ScoreMatrix m;
        const int v = verifiers(rng);
        m.thresholds.resize(v);
        for (double& t : m.thresholds) t = score(rng);
        m.scores.resize(morphs(rng));
        for (auto& morph : m.scores) {
            morph.resize(subjects(rng));
            for (auto& subject : morph) {
                subject.resize(v);
                for (double& s : subject) s = score(rng);
            }
        }
        for (int vi = 0; vi < v; ++vi) {
            double prev = 1.0;
            for (double delta : {0.0, 0.25, 0.5, 0.75, 1.0}) {
                m.thresholds[vi] = delta;
                const double value = mmpmr(m, vi);
                ok &= check(value <= prev, detail, "rate rose with the threshold");
                prev = value;
            }
        }
        const auto row = map_row(m);
        for (std::size_t c = 1; c < row.size(); ++c)
            ok &= check(row[c] <= row[c - 1], detail, "row rose with the verifier count");
    }
    return ok;
}

}  // namespace

int main() {
    std::vector<Criterion> criteria{
        {"1 schedule invariants (variance preservation, monotone log-SNR)", 0.1,
         criterion_schedule},
        {"2 reference integrator matches the analytic flow map (1e-8)", 5.0, criterion_oracle},
        {"3 convergence orders: first-order in [0.9,1.3], multi-step >= 1.7", 5.0,
         criterion_orders},
        {"4 multi-step at N=50 no worse than first-order at N=100", 2.0, criterion_nfe_halving},
        {"5 forward-solver ranking and encode-error monotonicity", 10.0,
         criterion_forward_ranking},
        {"6 closed-form step discrepancy equals direct subtraction (1e-12)", 1.0,
         criterion_delta_identity},
        {"7 morph pipeline: self-morph, blended-mode proximity, NFE = 150", 2.0, criterion_morph},
        {"8 noise injection: exact zero-level average, seeded determinism", 1.0,
         criterion_noise_injection},
        {"9 metrics: hand cases and monotonicity over 1000 random matrices", 2.0,
         criterion_metrics},
    };

    int failures = 0;
    for (auto& criterion : criteria) {
        std::string detail;
        const auto start = std::chrono::steady_clock::now();
        bool ok = false;
        try {
            ok = criterion.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (elapsed >= criterion.time_limit_s) {
            ok = false;
            detail += (detail.empty() ? "" : "; ") + std::string("over time budget ") +
                      fmt(criterion.time_limit_s) + "s";
        }
        std::printf("[%s] %s (%.3fs)%s%s\n", ok ? "PASS" : "FAIL", criterion.name.c_str(), elapsed,
                    detail.empty() ? "" : " -- ", detail.c_str());
        if (!ok) ++failures;
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures ? 1 : 0;
}
