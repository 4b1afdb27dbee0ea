// Command-line driver: calibrate steering bases, run the decode modes over
// problem sets, compare runs, and drive sweeps. All randomness comes from the
// config seeds; LPSR_WORKERS controls problem-level parallelism.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lpsr/basis_io.hpp"
#include "lpsr/pipeline.hpp"

namespace {

using namespace lpsr;

struct ConfigOverrides {
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> workers;
    std::optional<std::string> backend;
    std::optional<std::string> mode;
    std::optional<int> l_crit;
    std::optional<double> tau_phi;
    std::optional<double> tau_h;
    std::optional<double> alpha_max;
    std::optional<int> max_steps;
    std::optional<int> rollback_depth;
    std::optional<int> rollback_budget;
    std::optional<int> n;
    std::optional<double> temperature;
    std::optional<std::string> basis_path;
    std::optional<int> basis_k;
    std::optional<int> problem_count;
    std::optional<std::uint64_t> problem_seed;
};

void add_override_flags(CLI::App* cmd, ConfigOverrides& o) {
    cmd->add_option("--config", o.config_path, "JSON run config; flags override its fields");
    cmd->add_option("--seed", o.seed, "root seed");
    cmd->add_option("--out-dir", o.out_dir, "output directory");
    cmd->add_option("--workers", o.workers, "problem-level workers (0: LPSR_WORKERS env)");
    cmd->add_option("--backend", o.backend, "simulator | transformer");
    cmd->add_option("--mode", o.mode, "lpsr | greedy | static_steer | best_of_n");
    cmd->add_option("--l-crit", o.l_crit, "monitored layer");
    cmd->add_option("--tau-phi", o.tau_phi, "cosine gate threshold");
    cmd->add_option("--tau-h", o.tau_h, "entropy gate threshold");
    cmd->add_option("--alpha-max", o.alpha_max, "injection scale ceiling");
    cmd->add_option("--max-steps", o.max_steps, "generation budget");
    cmd->add_option("--rollback-depth", o.rollback_depth, "tokens discarded per event");
    cmd->add_option("--rollback-budget", o.rollback_budget, "max events per problem (-1: unlimited)");
    cmd->add_option("--n", o.n, "rollouts for best_of_n");
    cmd->add_option("--temperature", o.temperature, "sampling temperature for best_of_n");
    cmd->add_option("--basis", o.basis_path, "basis file path");
    cmd->add_option("--k", o.basis_k, "cluster count for calibration");
    cmd->add_option("--problems", o.problem_count, "problem count");
    cmd->add_option("--problem-seed", o.problem_seed, "problem set seed");
}

RunConfig materialize(const ConfigOverrides& o) {
    RunConfig cfg;
    if (o.config_path) cfg = load_config(*o.config_path);
    if (o.seed) cfg.seed = *o.seed;
    if (o.out_dir) cfg.out_dir = *o.out_dir;
    if (o.workers) cfg.workers = *o.workers;
    if (o.backend) cfg.backend = backend_kind_from_string(*o.backend);
    if (o.mode) cfg.engine.mode = decode_mode_from_string(*o.mode);
    if (o.l_crit) cfg.engine.l_crit = *o.l_crit;
    if (o.tau_phi) cfg.engine.gate.tau_phi = *o.tau_phi;
    if (o.tau_h) cfg.engine.gate.tau_h = *o.tau_h;
    if (o.alpha_max) cfg.engine.alpha_max = *o.alpha_max;
    if (o.max_steps) cfg.engine.max_steps = *o.max_steps;
    if (o.rollback_depth) cfg.engine.rollback_depth = *o.rollback_depth;
    if (o.rollback_budget) cfg.engine.rollback_budget = *o.rollback_budget;
    if (o.n) cfg.engine.n = *o.n;
    if (o.temperature) cfg.engine.temperature = *o.temperature;
    if (o.basis_path) cfg.basis.path = *o.basis_path;
    if (o.basis_k) cfg.basis.k = *o.basis_k;
    if (o.problem_count) {
        cfg.sim.count = *o.problem_count;
        cfg.toy.count = *o.problem_count;
    }
    if (o.problem_seed) {
        cfg.sim.seed = *o.problem_seed;
        cfg.toy.seed = *o.problem_seed;
    }
    return cfg;
}

int cmd_calibrate(const ConfigOverrides& o) {
    RunConfig cfg = materialize(o);
    CalibrationReport rep = calibrate(cfg);
    std::printf("problems=%d failed=%d deltas=%d no_shift=%d too_short=%d\n",
                rep.problems, rep.wrong, rep.deltas, rep.no_shift, rep.too_short);
    std::printf("basis_count=%d inertia=%s path=%s\n", rep.basis_count,
                csv_double(rep.inertia).c_str(), rep.basis_path.c_str());
    return 0;
}

int cmd_run(const ConfigOverrides& o) {
    RunConfig cfg = materialize(o);
    RunResult result = run_problems(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    write_traces_jsonl(cfg.out_dir + "/traces.jsonl", result.traces);
    const SummaryRow rows[1] = {result.summary};
    write_summary_csv(cfg.out_dir + "/summary.csv", rows);
    std::printf("mode=%s problems=%d accuracy=%s mean_token_cost=%s rollback_rate=%s "
                "mean_rollbacks=%s\n",
                result.summary.mode.c_str(), result.summary.problems,
                csv_double(result.summary.accuracy).c_str(),
                csv_double(result.summary.mean_token_cost).c_str(),
                csv_double(result.summary.rollback_rate).c_str(),
                csv_double(result.summary.mean_rollbacks).c_str());
    std::printf("traces=%s/traces.jsonl summary=%s/summary.csv\n", cfg.out_dir.c_str(),
                cfg.out_dir.c_str());
    return 0;
}

int cmd_eval(const std::string& path_a, const std::string& path_b,
             const std::string& out_csv, int resamples, std::uint64_t seed) {
    std::vector<GenerationTrace> a = read_traces_jsonl(path_a);
    std::vector<GenerationTrace> b = read_traces_jsonl(path_b);
    ComparisonReport report = compare_traces(std::move(a), std::move(b), resamples, seed);
    std::fputs(comparison_table(report).c_str(), stdout);
    if (!out_csv.empty()) {
        write_comparison_csv(out_csv, report);
        std::printf("report=%s\n", out_csv.c_str());
    }
    return 0;
}

int cmd_sweep(const ConfigOverrides& o, const std::string& axis, std::string out_csv,
              const GridAxes& grid_axes, const std::vector<int>& ks,
              const std::vector<int>& depths) {
    RunConfig cfg = materialize(o);
    std::filesystem::create_directories(cfg.out_dir);
    if (out_csv.empty()) out_csv = cfg.out_dir + "/sweep_" + axis + ".csv";

    std::size_t rows = 0;
    if (axis == "layers") {
        std::vector<LayerAucRow> r = run_layer_sweep(cfg);
        write_layer_sweep_csv(out_csv, r);
        rows = r.size();
    } else if (axis == "hparams") {
        std::vector<GridRow> r = run_grid_search(cfg, grid_axes);
        write_grid_csv(out_csv, r);
        rows = r.size();
    } else if (axis == "basis_k") {
        std::vector<KSweepRow> r = run_basis_k_sweep(cfg, ks);
        write_k_sweep_csv(out_csv, r);
        rows = r.size();
    } else if (axis == "rollback_depth") {
        std::vector<DepthSweepRow> r = run_depth_sweep(cfg, depths);
        write_depth_sweep_csv(out_csv, r);
        rows = r.size();
    } else {
        throw std::invalid_argument("unknown sweep axis: " + axis);
    }
    std::printf("axis=%s rows=%zu csv=%s\n", axis.c_str(), rows, out_csv.c_str());
    return 0;
}

int cmd_export_basis(const std::string& basis_path, const std::string& out_dir) {
    SteeringBasis basis = read_basis(basis_path);
    write_basis_analysis(basis, out_dir);
    std::printf("count=%d dim=%d layer=%d out=%s\n", basis.count(), basis.dim(),
                basis.layer, out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent reversal-gated rollback decoding toolkit"};
    app.require_subcommand(1);

    ConfigOverrides cal_o, run_o, sweep_o;

    CLI::App* cal = app.add_subcommand("calibrate", "build a steering basis file");
    add_override_flags(cal, cal_o);

    CLI::App* run = app.add_subcommand("run", "decode a problem set, write traces + summary");
    add_override_flags(run, run_o);

    std::string eval_a, eval_b, eval_out;
    int eval_resamples = 10000;
    std::uint64_t eval_seed = 0;
    CLI::App* eval = app.add_subcommand("eval", "matched-pair comparison of two trace files");
    eval->add_option("--a", eval_a, "first traces.jsonl")->required();
    eval->add_option("--b", eval_b, "second traces.jsonl")->required();
    eval->add_option("--out", eval_out, "report CSV path");
    eval->add_option("--resamples", eval_resamples, "bootstrap resamples");
    eval->add_option("--seed", eval_seed, "bootstrap seed");

    std::string sweep_axis, sweep_out;
    GridAxes grid_axes;
    grid_axes.tau_phi = {0.3, 0.45, 0.6, 0.75};
    grid_axes.tau_h = {1.5, 2.0, 2.5, 3.0};
    grid_axes.alpha_max = {0.05, 0.10, 0.15, 0.22};
    grid_axes.l_crit = {2, 3, 4, 5, 6};
    std::vector<int> sweep_ks = {4, 8, 16};
    std::vector<int> sweep_depths = {0, 1, 2, 3};
    CLI::App* sweep = app.add_subcommand("sweep", "layer / hyperparameter / basis / depth sweeps");
    add_override_flags(sweep, sweep_o);
    sweep->add_option("--axis", sweep_axis, "layers | hparams | basis_k | rollback_depth")
        ->required();
    sweep->add_option("--out", sweep_out, "sweep CSV path");
    sweep->add_option("--grid-tau-phi", grid_axes.tau_phi, "hparams axis values")
        ->delimiter(',');
    sweep->add_option("--grid-tau-h", grid_axes.tau_h, "hparams axis values")->delimiter(',');
    sweep->add_option("--grid-alpha", grid_axes.alpha_max, "hparams axis values")
        ->delimiter(',');
    sweep->add_option("--grid-l-crit", grid_axes.l_crit, "hparams axis values")
        ->delimiter(',');
    sweep->add_option("--ks", sweep_ks, "basis_k axis values")->delimiter(',');
    sweep->add_option("--depths", sweep_depths, "rollback_depth axis values")->delimiter(',');

    std::string export_basis_path, export_out_dir = "out";
    CLI::App* exp = app.add_subcommand("export-basis", "pairwise cosines + norms of a basis");
    exp->add_option("--basis", export_basis_path, "basis file")->required();
    exp->add_option("--out-dir", export_out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cal->parsed()) return cmd_calibrate(cal_o);
        if (run->parsed()) return cmd_run(run_o);
        if (eval->parsed()) return cmd_eval(eval_a, eval_b, eval_out, eval_resamples, eval_seed);
        if (sweep->parsed())
            return cmd_sweep(sweep_o, sweep_axis, sweep_out, grid_axes, sweep_ks, sweep_depths);
        if (exp->parsed()) return cmd_export_basis(export_basis_path, export_out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
