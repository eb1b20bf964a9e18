#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowmorph/io.hpp"
#include "flowmorph/metrics.hpp"
#include "flowmorph/model.hpp"
#include "flowmorph/morph.hpp"
#include "flowmorph/rng.hpp"
#include "flowmorph/schedule.hpp"
#include "flowmorph/solvers.hpp"

// Batch experiment drivers behind the command-line tool: schedule audits,
// convergence studies against the analytic oracle, encode/decode roundtrip
// studies, morph runs, and vulnerability metric reports. Every driver is
// deterministic given its config and writes outputs atomically.

namespace flowmorph::experiments {

enum class Format { Csv, Json };

inline Format parse_format(const std::string& s) {
    if (s == "csv") return Format::Csv;
    if (s == "json") return Format::Json;
    throw std::invalid_argument("format must be csv or json, got '" + s + "'");
}

struct ScheduleParams {
    int n_steps_total = 1000;
    double beta_min = 1e-4;
    double beta_max = 2e-2;

    NoiseSchedule build() const { return NoiseSchedule::build(n_steps_total, beta_min, beta_max); }
};

/// Gaussian model parameters; the conditioning mean is a seeded random unit
/// vector ("unit") or the origin ("zero").
struct ModelParams {
    int dim = 8;
    double spread = 0.5;
    std::uint64_t seed = 17;
    std::string z_source = "unit";

    Conditioning make_conditioning() const {
        if (z_source == "zero") return Conditioning{std::vector<double>(dim, 0.0)};
        if (z_source != "unit")
            throw std::invalid_argument("z_source must be unit or zero, got '" + z_source + "'");
        std::vector<double> z = standard_normals(seed, 1, dim);
        double norm = 0.0;
        for (double v : z) norm += v * v;
        norm = std::sqrt(norm);
        for (double& v : z) v /= norm;
        return Conditioning{z};
    }
};

inline SolverKind parse_solver(const std::string& name) {
    for (SolverKind k :
         {SolverKind::BackwardDDIM, SolverKind::BackwardDPMpp2M, SolverKind::ForwardDiffAE,
          SolverKind::ForwardDDIM, SolverKind::ForwardDPMpp2M, SolverKind::ReferenceRK4})
        if (name == solver_name(k)) return k;
    throw std::invalid_argument("unknown solver '" + name + "'");
}

// ---------------------------------------------------------------------------
// schedule dump
// ---------------------------------------------------------------------------

struct ScheduleDumpConfig {
    ScheduleParams schedule;
    std::string out;
};

/// Writes the full beta/alpha/sigma/lambda table for audit, one row per
/// trained index.
inline void cmd_schedule_dump(const ScheduleDumpConfig& config) {
    const NoiseSchedule s = config.schedule.build();
    std::ostringstream csv;
    csv << "i,beta,alpha,sigma,lambda\n";
    for (int i = 1; i <= s.n_steps_total(); ++i)
        csv << i << "," << format_double(s.beta(i)) << "," << format_double(s.alpha(i)) << ","
            << format_double(s.sigma(i)) << "," << format_double(s.lambda(i)) << "\n";
    write_file_atomic(config.out, csv.str());
}

// ---------------------------------------------------------------------------
// converge
// ---------------------------------------------------------------------------

struct ConvergeConfig {
    ScheduleParams schedule;
    ModelParams model;
    std::vector<std::string> solvers{"backward-ddim", "backward-dpmpp2m"};
    std::vector<int> n_list{10, 20, 40, 80};
    int n_transports = 8;
    std::string out;
    Format format = Format::Csv;
    std::optional<std::string> trajectory_dir;  ///< per-cell trajectory CSVs
};

struct ConvergeCell {
    std::string solver;
    int n = 0;
    int nfe = 0;
    double rel_error = 0.0;
};

struct ConvergeReport {
    std::vector<ConvergeCell> cells;
    std::vector<std::pair<std::string, double>> fitted_orders;  ///< per solver
};

namespace detail {

inline double fit_log_log_order(const std::vector<int>& ns, const std::vector<double>& errs) {
    // least-squares slope of log(err) against log(n), negated
    const std::size_t k = ns.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double x = std::log(static_cast<double>(ns[i]));
        const double y = std::log(errs[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return -(k * sxy - sx * sy) / (k * sxx - sx * sx);
}

inline double rel_l2(const std::vector<double>& got, const std::vector<double>& want) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        num += (got[i] - want[i]) * (got[i] - want[i]);
        den += want[i] * want[i];
    }
    return std::sqrt(num / den);
}

}  // namespace detail

/// Per (solver, N): mean relative endpoint error of the backward traversal
/// against the closed-form flow map, the evaluation count, and the fitted
/// log-log convergence order.
inline ConvergeReport cmd_converge(const ConvergeConfig& config) {
    if (config.n_list.size() < 3)
        throw std::invalid_argument("converge: need at least 3 step counts");
    if (config.n_transports < 1) throw std::invalid_argument("converge: need n_transports >= 1");

    const NoiseSchedule schedule = config.schedule.build();
    const GaussianModel model(schedule, config.model.dim, config.model.spread);
    const Conditioning cond = config.model.make_conditioning();
    const int nt = schedule.n_steps_total();

    std::vector<std::vector<double>> starts;
    for (int k = 0; k < config.n_transports; ++k)
        starts.push_back(standard_normals(config.model.seed, 100 + k, config.model.dim));

    ConvergeReport report;
    for (const std::string& solver : config.solvers) {
        const SolverKind kind = parse_solver(solver);
        if (is_forward(kind) || kind == SolverKind::ReferenceRK4)
            throw std::invalid_argument("converge: '" + solver + "' is not a descending solver");

        std::vector<double> errs;
        for (int n : config.n_list) {
            const TimeGrid grid = make_time_grid(schedule, n);
            double acc = 0.0;
            int nfe = 0;
            for (const auto& x0 : starts) {
                const LatentState init{x0, static_cast<double>(nt)};
                const Trajectory traj = solve(schedule, model, cond, init, grid, kind);
                const LatentState want = model.exact_flow_map(init, cond, 0.0);
                acc += detail::rel_l2(traj.states.back().x, want.x);
                nfe = traj.nfe;
                if (config.trajectory_dir && &x0 == &starts.front()) {
                    const std::filesystem::path p =
                        std::filesystem::path(*config.trajectory_dir) /
                        (solver + "_n" + std::to_string(n) + ".csv");
                    write_file_atomic(p, trajectory_csv(traj));
                }
            }
            report.cells.push_back({solver, n, nfe, acc / starts.size()});
            errs.push_back(acc / starts.size());
        }
        report.fitted_orders.emplace_back(solver,
                                          detail::fit_log_log_order(config.n_list, errs));
    }

    std::ostringstream csv;
    csv << "solver,n,nfe,rel_error,fitted_order\n";
    for (const auto& cell : report.cells) {
        double order = 0.0;
        for (const auto& [name, o] : report.fitted_orders)
            if (name == cell.solver) order = o;
        csv << cell.solver << "," << cell.n << "," << cell.nfe << ","
            << format_double(cell.rel_error) << "," << format_double(order) << "\n";
    }
    if (config.format == Format::Csv) {
        write_file_atomic(config.out, csv.str());
    } else {
        nlohmann::json j;
        for (const auto& cell : report.cells)
            j["cells"].push_back({{"solver", cell.solver},
                                  {"n", cell.n},
                                  {"nfe", cell.nfe},
                                  {"rel_error", cell.rel_error}});
        for (const auto& [name, order] : report.fitted_orders)
            j["fitted_orders"][name] = order;
        write_file_atomic(config.out, j.dump(2) + "\n");
    }
    return report;
}

// ---------------------------------------------------------------------------
// roundtrip
// ---------------------------------------------------------------------------

struct RoundtripConfig {
    ScheduleParams schedule;
    ModelParams model;
    std::vector<std::string> forward_solvers{"forward-diffae", "forward-ddim", "forward-dpmpp2m"};
    std::vector<int> n_forward_list{20, 50, 100, 250};
    std::string backward_solver = "backward-dpmpp2m";
    int n_backward = 50;
    int n_samples = 8;
    std::string out;
    Format format = Format::Csv;
};

struct RoundtripCell {
    std::string forward_solver;
    int n_forward = 0;
    double mse = 0.0;
};

/// Encode with each forward solver, decode with the fixed backward solver,
/// and report the reconstruction MSE per (forward solver, N_F) cell. Samples
/// are drawn from the model's own data distribution.
inline std::vector<RoundtripCell> cmd_roundtrip(const RoundtripConfig& config) {
    if (config.forward_solvers.empty())
        throw std::invalid_argument("roundtrip: need at least one forward solver");

    const NoiseSchedule schedule = config.schedule.build();
    const GaussianModel model(schedule, config.model.dim, config.model.spread);
    const Conditioning cond = config.model.make_conditioning();

    std::vector<std::vector<double>> originals;
    for (int k = 0; k < config.n_samples; ++k) {
        std::vector<double> x = standard_normals(config.model.seed, 200 + k, config.model.dim);
        for (int i = 0; i < config.model.dim; ++i)
            x[i] = cond.z[i] + config.model.spread * x[i];
        originals.push_back(std::move(x));
    }

    const SolverKind back = parse_solver(config.backward_solver);
    if (is_forward(back) || back == SolverKind::ReferenceRK4)
        throw std::invalid_argument("roundtrip: backward_solver must be descending");
    const TimeGrid grid_b = make_time_grid(schedule, config.n_backward);

    std::vector<RoundtripCell> cells;
    for (const std::string& solver : config.forward_solvers) {
        const SolverKind kind = parse_solver(solver);
        if (!is_forward(kind))
            throw std::invalid_argument("roundtrip: '" + solver + "' is not an ascending solver");
        for (int nf : config.n_forward_list) {
            const TimeGrid grid_f = make_time_grid(schedule, nf);
            std::vector<std::vector<double>> recon;
            for (const auto& x0 : originals) {
                const Trajectory enc =
                    solve(schedule, model, cond, LatentState{x0, 0.0}, grid_f, kind);
                const Trajectory dec =
                    solve(schedule, model, cond, enc.states.back(), grid_b, back);
                recon.push_back(dec.states.back().x);
            }
            cells.push_back({solver, nf, recon_mse(originals, recon).mse});
        }
    }

    if (config.format == Format::Csv) {
        std::ostringstream csv;
        csv << "forward_solver,n_forward,mse\n";
        for (const auto& cell : cells)
            csv << cell.forward_solver << "," << cell.n_forward << "," << format_double(cell.mse)
                << "\n";
        write_file_atomic(config.out, csv.str());
    } else {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& cell : cells)
            j.push_back({{"forward_solver", cell.forward_solver},
                         {"n_forward", cell.n_forward},
                         {"mse", cell.mse}});
        write_file_atomic(config.out, j.dump(2) + "\n");
    }
    return cells;
}

// ---------------------------------------------------------------------------
// morph
// ---------------------------------------------------------------------------

struct MorphRunConfig {
    ScheduleParams schedule;
    ModelParams model;   ///< dim/spread for the Gaussian decoder
    MorphConfig morph;
    std::string manifest;  ///< JSON array of pairs with inline vectors
    std::string mode = "dim";  ///< "dim" or "noise"
    double noise_level = 0.5;
    std::uint64_t seed = 17;
    std::string out;
};

struct MorphPairOutcome {
    std::string id;
    MorphResult result;
};

/// Runs the configured morph per manifest pair and writes one JSON document
/// holding every pair outcome plus the config echo and the NFE summary
/// (encodes batched, so N + N_F per pair).
inline std::vector<MorphPairOutcome> cmd_morph(const MorphRunConfig& config) {
    std::ifstream in(config.manifest);
    if (!in) throw std::runtime_error("cannot open manifest: " + config.manifest);
    nlohmann::json manifest = nlohmann::json::parse(in);
    if (!manifest.is_array() || manifest.empty())
        throw std::runtime_error("manifest must be a non-empty JSON array of pairs");

    const NoiseSchedule schedule = config.schedule.build();
    const GaussianModel model(schedule, config.model.dim, config.model.spread);

    std::vector<MorphPairOutcome> outcomes;
    nlohmann::json out_pairs = nlohmann::json::array();
    for (const auto& pair : manifest) {
        MorphPairOutcome outcome;
        outcome.id = pair.at("id").get<std::string>();
        const LatentState x0_a{pair.at("x0_a").get<std::vector<double>>(), 0.0};
        const LatentState x0_b{pair.at("x0_b").get<std::vector<double>>(), 0.0};
        const Conditioning z_a{pair.at("z_a").get<std::vector<double>>()};
        const Conditioning z_b{pair.at("z_b").get<std::vector<double>>()};

        if (config.mode == "dim") {
            outcome.result = dim_morph(model, schedule, x0_a, z_a, x0_b, z_b, config.morph);
        } else if (config.mode == "noise") {
            const Conditioning z_ab{
                flowmorph::detail::blend_weighted(z_a.z, z_b.z, config.morph.blend)};
            outcome.result = noise_inject_morph(model, schedule, x0_a, x0_b, z_ab,
                                                config.noise_level, config.seed, config.morph);
        } else {
            throw std::invalid_argument("morph mode must be dim or noise, got '" + config.mode +
                                        "'");
        }

        nlohmann::json jp{{"id", outcome.id},
                          {"morphed", outcome.result.morphed.x},
                          {"x_T_ab", outcome.result.x_T_ab.x},
                          {"z_ab", outcome.result.z_ab.z},
                          {"nfe_forward", outcome.result.nfe_forward},
                          {"nfe_backward", outcome.result.nfe_backward}};
        out_pairs.push_back(std::move(jp));
        outcomes.push_back(std::move(outcome));
    }

    nlohmann::json doc{
        {"config",
         {{"mode", config.mode},
          {"forward_solver", solver_name(config.morph.forward_kind)},
          {"backward_solver", solver_name(config.morph.backward_kind)},
          {"n_forward", config.morph.n_forward},
          {"n_backward", config.morph.n_backward},
          {"blend", config.morph.blend},
          {"noise_level", config.noise_level},
          {"seed", config.seed},
          {"dim", config.model.dim},
          {"spread", config.model.spread}}},
        {"nfe_per_pair", config.mode == "dim"
                             ? config.morph.n_backward + config.morph.n_forward
                             : outcomes.front().result.nfe_backward},
        {"pairs", std::move(out_pairs)}};
    write_file_atomic(config.out, doc.dump(2) + "\n");
    return outcomes;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

struct MetricsConfig {
    std::string scores;      ///< CSV morph_id,subject_id,verifier_id,score
    std::string thresholds;  ///< CSV verifier_id,delta
    std::string out;
    Format format = Format::Csv;
};

struct MetricsReport {
    std::vector<std::string> verifier_ids;
    std::vector<double> mmpmr_per_verifier;
    std::vector<double> map;  ///< entry c-1: accepted by >= c verifiers
};

/// MMPMR per verifier plus the morphing-attack-potential row, from
/// externally supplied similarity scores.
inline MetricsReport cmd_metrics(const MetricsConfig& config) {
    std::ifstream tin(config.thresholds);
    if (!tin) throw std::runtime_error("cannot open thresholds: " + config.thresholds);
    const auto [ids, deltas] = load_thresholds_csv(tin);

    std::ifstream sin(config.scores);
    if (!sin) throw std::runtime_error("cannot open scores: " + config.scores);
    const ScoreMatrix matrix = load_scores_csv(sin, ids, deltas);

    MetricsReport report;
    report.verifier_ids = ids;
    for (int v = 0; v < matrix.verifier_count(); ++v)
        report.mmpmr_per_verifier.push_back(mmpmr(matrix, v));
    report.map = map_row(matrix);

    if (config.format == Format::Csv) {
        std::ostringstream csv;
        csv << "metric,key,value\n";
        for (std::size_t v = 0; v < ids.size(); ++v)
            csv << "mmpmr," << ids[v] << "," << format_double(report.mmpmr_per_verifier[v])
                << "\n";
        for (std::size_t c = 0; c < report.map.size(); ++c)
            csv << "map," << (c + 1) << "," << format_double(report.map[c]) << "\n";
        write_file_atomic(config.out, csv.str());
    } else {
        nlohmann::json j;
        for (std::size_t v = 0; v < ids.size(); ++v)
            j["mmpmr"][ids[v]] = report.mmpmr_per_verifier[v];
        j["map"] = report.map;
        write_file_atomic(config.out, j.dump(2) + "\n");
    }
    return report;
}

}  // namespace flowmorph::experiments
