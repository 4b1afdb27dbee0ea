#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lpsr/run_config.hpp"
#include "lpsr/stats.hpp"
#include "lpsr/sweeps.hpp"
#include "lpsr/trace_io.hpp"

namespace lpsr {

/// Index-parallel loop; results must be written to per-index slots so the
/// outcome is identical for any worker count. The first worker exception is
/// rethrown after join.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

/// cfg_workers > 0 wins; otherwise LPSR_WORKERS from the environment;
/// otherwise 1.
int resolve_workers(int cfg_workers);

struct ToyProblem {
    int id = 0;
    std::vector<int> prompt;
    std::vector<int> gold;  // reference sequence; its last symbol is the answer
    std::string tag;
};

std::vector<ToyProblem> make_toy_problems(const ToyProblemConfig& cfg, int vocab);

struct RunResult {
    std::vector<GenerationTrace> traces;
    SummaryRow summary;
};

/// Runs the configured decode mode over the configured problem set, filling
/// outcomes from ground truth (schedule answers on the simulator, reference
/// answers on the transformer).
RunResult run_problems(const RunConfig& cfg);

struct CalibrationReport {
    int problems = 0;
    int wrong = 0;  // failed traces scanned for deltas
    int deltas = 0;
    int no_shift = 0;
    int too_short = 0;
    int basis_count = 0;
    double inertia = 0.0;
    std::string basis_path;
};

/// Greedy pass over the calibration problems with hidden capture at l_crit,
/// delta extraction against the oracle trajectories, basis build, and write
/// to cfg.basis.path. Fails loudly when no deltas can be extracted.
CalibrationReport calibrate(const RunConfig& cfg);

struct ComparisonReport {
    MatchedPairs pairs;
    std::optional<McNemarResult> test;  // empty when there are no discordant pairs
    std::optional<double> accuracy_a;
    std::optional<double> accuracy_b;
    Interval ci_a;
    Interval ci_b;
    struct TagRow {
        std::string tag;
        long n = 0;
        double accuracy_a = 0.0;
        double accuracy_b = 0.0;
    };
    std::vector<TagRow> by_tag;
};

/// Matched-pair comparison of two runs over the same problem ids (sorted by
/// id; any mismatch is an error).
ComparisonReport compare_traces(std::vector<GenerationTrace> a,
                                std::vector<GenerationTrace> b, int resamples,
                                std::uint64_t seed);

void write_comparison_csv(const std::string& path, const ComparisonReport& report);
std::string comparison_table(const ComparisonReport& report);

/// One greedy pass per problem with all-layer hooks; per-layer AUC of the
/// negated min-cosine score against wrong-answer labels. On the transformer
/// the label is a deterministic synthetic split (answer in the upper half of
/// the vocabulary), since an untrained decoder has no task ground truth.
std::vector<LayerAucRow> run_layer_sweep(const RunConfig& cfg);

/// Full grid over the axes on the simulator backend. A basis is calibrated
/// once per (l_crit, tau_phi) on a derived all-error calibration suite and
/// shared across the remaining axes. Row order follows make_grid.
std::vector<GridRow> run_grid_search(const RunConfig& cfg, const GridAxes& axes);

struct KSweepRow {
    int k = 0;
    int deltas = 0;
    int basis_count = 0;
    double inertia = 0.0;
    std::optional<double> accuracy;
    double rollback_rate = 0.0;
};

std::vector<KSweepRow> run_basis_k_sweep(const RunConfig& cfg, const std::vector<int>& ks);

struct DepthSweepRow {
    int depth = 0;
    std::optional<double> accuracy;
    double rollback_rate = 0.0;
    double mean_token_cost = 0.0;
};

std::vector<DepthSweepRow> run_depth_sweep(const RunConfig& cfg,
                                           const std::vector<int>& depths);

void write_k_sweep_csv(const std::string& path, std::span<const KSweepRow> rows);
void write_depth_sweep_csv(const std::string& path, std::span<const DepthSweepRow> rows);

/// Pairwise cosine matrix and per-vector norms of a basis, as two CSVs
/// (basis_cosines.csv, basis_norms.csv) under out_dir.
void write_basis_analysis(const SteeringBasis& basis, const std::string& out_dir);

/// The fixed steering direction used by static-steer runs: the normalized
/// mean of the basis vectors (first vector when the mean degenerates).
Vec static_steer_delta(const SteeringBasis& basis);

}  // namespace lpsr
