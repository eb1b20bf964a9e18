// Command-line driver for the probability-flow morphing toolkit.
//
// Subcommands: schedule dump, converge, roundtrip, morph, metrics.
// Flag precedence: command line > config file (--config, key=value lines)
// > built-in defaults. On failure a machine-readable JSON error object is
// printed to stderr and the exit status is nonzero; output files are
// written atomically so no partial file is left behind.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowmorph/experiments.hpp"

namespace fx = flowmorph::experiments;

namespace {

void add_schedule_flags(CLI::App* cmd, fx::ScheduleParams& params) {
    cmd->add_option("--n-train", params.n_steps_total, "training discretization N_T");
    cmd->add_option("--beta-min", params.beta_min, "smallest variance increment");
    cmd->add_option("--beta-max", params.beta_max, "largest variance increment");
}

void add_model_flags(CLI::App* cmd, fx::ModelParams& params) {
    cmd->add_option("--dim", params.dim, "state dimension");
    cmd->add_option("--spread", params.spread, "data distribution spread");
    cmd->add_option("--seed", params.seed, "seed for conditioning and state draws");
    cmd->add_option("--z-source", params.z_source, "conditioning mean: unit or zero");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"probability-flow ODE morphing toolkit"};
    app.require_subcommand(1);
    // flat key=value lines, scoped as subcommand.option (or [subcommand] sections)
    app.set_config("--config", "", "config file; keys are subcommand.option=value");

    // schedule dump
    fx::ScheduleDumpConfig dump_config;
    CLI::App* schedule_cmd = app.add_subcommand("schedule", "noise schedule utilities");
    schedule_cmd->require_subcommand(1);
    CLI::App* dump_cmd = schedule_cmd->add_subcommand("dump", "write the beta/alpha/sigma/lambda table");
    add_schedule_flags(dump_cmd, dump_config.schedule);
    dump_cmd->add_option("--out", dump_config.out, "output CSV path")->required();

    // converge
    fx::ConvergeConfig converge_config;
    std::string converge_format = "csv";
    CLI::App* converge_cmd =
        app.add_subcommand("converge", "solver error and order study against the analytic oracle");
    add_schedule_flags(converge_cmd, converge_config.schedule);
    add_model_flags(converge_cmd, converge_config.model);
    converge_cmd->add_option("--solver", converge_config.solvers,
                             "descending solvers to study (repeatable)");
    converge_cmd->add_option("--n-steps", converge_config.n_list, "step counts N (repeatable)");
    converge_cmd->add_option("--transports", converge_config.n_transports,
                             "number of random transports per cell");
    converge_cmd->add_option("--format", converge_format, "csv or json");
    converge_cmd->add_option("--out", converge_config.out, "output path")->required();
    std::string trajectory_dir;
    converge_cmd->add_option("--dump-trajectories", trajectory_dir,
                             "directory for per-cell trajectory CSVs");

    // roundtrip
    fx::RoundtripConfig roundtrip_config;
    std::string roundtrip_format = "csv";
    CLI::App* roundtrip_cmd =
        app.add_subcommand("roundtrip", "encode/decode reconstruction study per forward solver");
    add_schedule_flags(roundtrip_cmd, roundtrip_config.schedule);
    add_model_flags(roundtrip_cmd, roundtrip_config.model);
    roundtrip_cmd->add_option("--forward-solver", roundtrip_config.forward_solvers,
                              "ascending solvers to study (repeatable)");
    roundtrip_cmd->add_option("--n-forward", roundtrip_config.n_forward_list,
                              "encode step counts N_F (repeatable)");
    roundtrip_cmd->add_option("--solver", roundtrip_config.backward_solver,
                              "fixed descending solver");
    roundtrip_cmd->add_option("--n-steps", roundtrip_config.n_backward, "decode step count N");
    roundtrip_cmd->add_option("--samples", roundtrip_config.n_samples, "samples per cell");
    roundtrip_cmd->add_option("--format", roundtrip_format, "csv or json");
    roundtrip_cmd->add_option("--out", roundtrip_config.out, "output path")->required();

    // morph
    fx::MorphRunConfig morph_config;
    std::string morph_forward = "forward-ddim";
    std::string morph_backward = "backward-dpmpp2m";
    CLI::App* morph_cmd = app.add_subcommand("morph", "run the morph pipeline over a pair manifest");
    add_schedule_flags(morph_cmd, morph_config.schedule);
    morph_cmd->add_option("--dim", morph_config.model.dim, "state dimension");
    morph_cmd->add_option("--spread", morph_config.model.spread, "data distribution spread");
    morph_cmd->add_option("--manifest", morph_config.manifest, "JSON manifest of pairs")
        ->required();
    morph_cmd->add_option("--mode", morph_config.mode, "dim or noise");
    morph_cmd->add_option("--forward-solver", morph_forward, "ascending solver");
    morph_cmd->add_option("--solver", morph_backward, "descending solver");
    morph_cmd->add_option("--n-forward", morph_config.morph.n_forward, "encode steps N_F");
    morph_cmd->add_option("--n-steps", morph_config.morph.n_backward, "decode steps N");
    morph_cmd->add_option("--blend", morph_config.morph.blend, "blend factor gamma");
    morph_cmd->add_option("--noise-level", morph_config.noise_level,
                          "noise level t/T for noise mode");
    morph_cmd->add_option("--seed", morph_config.seed, "noise seed");
    morph_cmd->add_option("--out", morph_config.out, "output JSON path")->required();

    // metrics
    fx::MetricsConfig metrics_config;
    std::string metrics_format = "csv";
    CLI::App* metrics_cmd =
        app.add_subcommand("metrics", "vulnerability metrics from similarity scores");
    metrics_cmd->add_option("--scores", metrics_config.scores, "score CSV")->required();
    metrics_cmd->add_option("--thresholds", metrics_config.thresholds, "threshold CSV")
        ->required();
    metrics_cmd->add_option("--format", metrics_format, "csv or json");
    metrics_cmd->add_option("--out", metrics_config.out, "output path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (dump_cmd->parsed()) {
            fx::cmd_schedule_dump(dump_config);
        } else if (converge_cmd->parsed()) {
            converge_config.format = fx::parse_format(converge_format);
            if (!trajectory_dir.empty()) converge_config.trajectory_dir = trajectory_dir;
            fx::cmd_converge(converge_config);
        } else if (roundtrip_cmd->parsed()) {
            roundtrip_config.format = fx::parse_format(roundtrip_format);
            fx::cmd_roundtrip(roundtrip_config);
        } else if (morph_cmd->parsed()) {
            morph_config.morph.forward_kind = fx::parse_solver(morph_forward);
            morph_config.morph.backward_kind = fx::parse_solver(morph_backward);
            fx::cmd_morph(morph_config);
        } else if (metrics_cmd->parsed()) {
            metrics_config.format = fx::parse_format(metrics_format);
            const fx::MetricsReport report = fx::cmd_metrics(metrics_config);
            // files carry fractions; the console summary shows percentages
            for (std::size_t v = 0; v < report.verifier_ids.size(); ++v)
                std::printf("mmpmr[%s] = %.2f%%\n", report.verifier_ids[v].c_str(),
                            100.0 * report.mmpmr_per_verifier[v]);
            for (std::size_t c = 0; c < report.map.size(); ++c)
                std::printf("map[1,%zu] = %.2f%%\n", c + 1, 100.0 * report.map[c]);
        }
    } catch (const std::exception& e) {
        const nlohmann::json err{{"error", {{"message", e.what()}}}};
        std::fprintf(stderr, "%s\n", err.dump().c_str());
        return 1;
    }
    return 0;
}
