#include "lpsr/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "lpsr/basis_io.hpp"
#include "lpsr/seeding.hpp"

namespace lpsr {

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto work = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (int w = 0; w < workers; ++w) threads.emplace_back(work);
    for (std::thread& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

int resolve_workers(int cfg_workers) {
    if (cfg_workers > 0) return cfg_workers;
    if (const char* env = std::getenv("LPSR_WORKERS")) {
        const int w = std::atoi(env);
        if (w > 0) return w;
    }
    return 1;
}

std::vector<ToyProblem> make_toy_problems(const ToyProblemConfig& cfg, int vocab) {
    if (vocab < 3) throw std::invalid_argument("make_toy_problems: vocabulary too small");
    std::vector<ToyProblem> problems;
    problems.reserve(cfg.count);
    for (int i = 0; i < cfg.count; ++i) {
        ToyProblem p;
        p.id = i;
        p.tag = "level" + std::to_string(1 + i % 5);
        std::mt19937_64 rng(mix_seed({cfg.seed, 0x70BBULL, static_cast<std::uint64_t>(i)}));
        std::uniform_int_distribution<int> sym(1, vocab - 1);  // EOS excluded
        p.prompt.resize(cfg.prompt_len);
        for (int& t : p.prompt) t = sym(rng);
        p.gold.resize(cfg.gold_len);
        for (int& t : p.gold) t = sym(rng);
        problems.push_back(std::move(p));
    }
    return problems;
}

Vec static_steer_delta(const SteeringBasis& basis) {
    if (basis.count() == 0) throw std::invalid_argument("static_steer_delta: empty basis");
    Vec mean = basis.vectors.colwise().mean().transpose();
    const float n = mean.norm();
    if (n > 1e-12f) return mean / n;
    return basis.vectors.row(0).transpose();
}

namespace {

struct ProblemSet {
    // One of the two is populated.
    std::optional<SimSuite> sim;
    std::optional<TinyDecoder> model;
    std::vector<ToyProblem> toy;

    int count() const {
        return sim ? sim->size() : static_cast<int>(toy.size());
    }
};

ProblemSet make_problem_set(const RunConfig& cfg) {
    ProblemSet set;
    if (cfg.backend == BackendKind::Simulator) {
        set.sim.emplace(cfg.sim);
    } else {
        set.model.emplace(cfg.model);
        set.toy = make_toy_problems(cfg.toy, cfg.model.vocab);
    }
    return set;
}

GenerationTrace run_one(const RunConfig& cfg, const EngineConfig& ecfg,
                        const ProblemSet& set, int i, const SteeringBasis* basis,
                        const Vec* static_delta) {
    GenerationTrace trace;
    int truth;
    std::string tag;
    if (set.sim) {
        SimBackend backend(*set.sim, i);
        const SimProblem& p = set.sim->problem(i);
        truth = p.correct_answer;
        tag = p.tag;
        const std::vector<int> prompt = {1};
        switch (ecfg.mode) {
            case DecodeMode::Lpsr:
                trace = generate_lpsr(backend, prompt, ecfg, *basis);
                break;
            case DecodeMode::StaticSteer:
                trace = generate_static_steer(backend, prompt, ecfg, *static_delta);
                break;
            case DecodeMode::BestOfN: {
                BestOfNResult r = generate_best_of_n(
                    backend, prompt, ecfg,
                    mix_seed({cfg.seed, 0xB0F1ULL, static_cast<std::uint64_t>(i)}));
                trace = r.rollouts.front();
                trace.answer = r.vote.winner;
                trace.token_cost = r.token_cost;
                trace.vote = r.vote;
                break;
            }
            case DecodeMode::Greedy:
                trace = generate_greedy(backend, prompt, ecfg);
                break;
        }
    } else {
        const ToyProblem& p = set.toy[i];
        truth = p.gold.back();
        tag = p.tag;
        switch (ecfg.mode) {
            case DecodeMode::Lpsr:
                trace = generate_lpsr(*set.model, p.prompt, ecfg, *basis);
                break;
            case DecodeMode::StaticSteer:
                trace = generate_static_steer(*set.model, p.prompt, ecfg, *static_delta);
                break;
            case DecodeMode::BestOfN: {
                BestOfNResult r = generate_best_of_n(
                    *set.model, p.prompt, ecfg,
                    mix_seed({cfg.seed, 0xB0F1ULL, static_cast<std::uint64_t>(i)}));
                trace = r.rollouts.front();
                trace.answer = r.vote.winner;
                trace.token_cost = r.token_cost;
                trace.vote = r.vote;
                break;
            }
            case DecodeMode::Greedy:
                trace = generate_greedy(*set.model, p.prompt, ecfg);
                break;
        }
    }
    trace.problem_id = i;
    trace.tag = tag;
    trace.outcome = trace.answer == truth;
    return trace;
}

}  // namespace

RunResult run_problems(const RunConfig& cfg) {
    validate_config(cfg);
    ProblemSet set = make_problem_set(cfg);
    const EngineConfig& ecfg = cfg.engine;

    SteeringBasis basis;
    Vec static_delta;
    const bool needs_basis =
        ecfg.mode == DecodeMode::Lpsr || ecfg.mode == DecodeMode::StaticSteer;
    if (needs_basis) {
        basis = read_basis(cfg.basis.path);
        if (ecfg.mode == DecodeMode::StaticSteer) static_delta = static_steer_delta(basis);
    }

    RunResult result;
    result.traces.resize(set.count());
    parallel_for(set.count(), resolve_workers(cfg.workers), [&](int i) {
        result.traces[i] = run_one(cfg, ecfg, set, i, needs_basis ? &basis : nullptr,
                                   ecfg.mode == DecodeMode::StaticSteer ? &static_delta
                                                                        : nullptr);
    });
    result.summary = summarize_traces(result.traces, to_string(ecfg.mode));
    return result;
}

CalibrationReport calibrate(const RunConfig& cfg) {
    validate_config(cfg);
    ProblemSet set = make_problem_set(cfg);

    EngineConfig ecfg = cfg.engine;
    ecfg.mode = DecodeMode::Greedy;
    ecfg.capture_hiddens = true;
    ecfg.capture_all_layers = false;

    std::vector<GenerationTrace> traces(set.count());
    parallel_for(set.count(), resolve_workers(cfg.workers), [&](int i) {
        traces[i] = run_one(cfg, ecfg, set, i, nullptr, nullptr);
    });

    CalibrationReport report;
    report.problems = set.count();
    report.basis_path = cfg.basis.path;

    ExtractStats stats;
    std::vector<CorrectionDelta> deltas;
    for (int i = 0; i < set.count(); ++i) {
        const GenerationTrace& t = traces[i];
        if (t.outcome.value_or(false)) continue;  // only failed runs carry corrections
        ++report.wrong;

        std::vector<Vec> oracle;
        if (set.sim) {
            oracle = set.sim->oracle_hiddens(set.sim->problem(i));
        } else {
            const ToyProblem& p = set.toy[i];
            std::vector<int> forced = p.prompt;
            forced.insert(forced.end(), p.gold.begin(), p.gold.end());
            std::vector<Vec> all =
                set.model->teacher_forced_hiddens(forced, ecfg.l_crit);
            // Positions from the last prompt token onward line up with the
            // generation steps of the free-running trace.
            oracle.assign(all.begin() + (static_cast<long>(p.prompt.size()) - 1), all.end());
        }
        std::optional<CorrectionDelta> d =
            extract_delta(t.captured_hiddens, oracle, cfg.engine.gate.tau_phi, i, &stats);
        if (d) deltas.push_back(std::move(*d));
    }
    report.no_shift = stats.no_shift;
    report.too_short = stats.too_short;
    report.deltas = static_cast<int>(deltas.size());
    if (deltas.empty())
        throw std::runtime_error(
            "calibrate: zero correction deltas extracted (" +
            std::to_string(report.wrong) + " failed traces, " +
            std::to_string(report.no_shift) + " without a reversal, " +
            std::to_string(report.too_short) + " with an out-of-range reversal)");

    BasisBuildOptions opts;
    opts.restarts = cfg.basis.restarts;
    opts.ortho_threshold = cfg.basis.ortho_threshold;
    opts.seed = cfg.seed;
    opts.tau_phi = cfg.engine.gate.tau_phi;
    BasisBuildInfo info;
    SteeringBasis basis = build_basis(deltas, cfg.basis.k, cfg.engine.l_crit, opts, &info);
    report.basis_count = basis.count();
    report.inertia = info.inertia;

    if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);
    const std::filesystem::path path(cfg.basis.path);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_basis(cfg.basis.path, basis);
    return report;
}

ComparisonReport compare_traces(std::vector<GenerationTrace> a,
                                std::vector<GenerationTrace> b, int resamples,
                                std::uint64_t seed) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("compare_traces: empty trace sets");
    auto by_id = [](const GenerationTrace& x, const GenerationTrace& y) {
        return x.problem_id < y.problem_id;
    };
    std::sort(a.begin(), a.end(), by_id);
    std::sort(b.begin(), b.end(), by_id);
    if (a.size() != b.size())
        throw std::invalid_argument("compare_traces: trace counts differ");
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].problem_id != b[i].problem_id)
            throw std::invalid_argument("compare_traces: problem ids do not match");

    ComparisonReport report;
    report.pairs = matched_pairs(a, b);
    if (report.pairs.a_only + report.pairs.b_only > 0)
        report.test = mcnemar(report.pairs.a_only, report.pairs.b_only);

    std::vector<int> oa, ob;
    for (const GenerationTrace& t : a) oa.push_back(*t.outcome);
    for (const GenerationTrace& t : b) ob.push_back(*t.outcome);
    report.accuracy_a =
        static_cast<double>(std::count(oa.begin(), oa.end(), 1)) / oa.size();
    report.accuracy_b =
        static_cast<double>(std::count(ob.begin(), ob.end(), 1)) / ob.size();
    report.ci_a = bootstrap_ci(oa, resamples, 0.95, mix_seed({seed, 0xA}));
    report.ci_b = bootstrap_ci(ob, resamples, 0.95, mix_seed({seed, 0xB}));

    std::map<std::string, std::array<long, 3>> tags;  // n, correct_a, correct_b
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto& t = tags[a[i].tag];
        ++t[0];
        t[1] += *a[i].outcome;
        t[2] += *b[i].outcome;
    }
    for (const auto& [tag, t] : tags) {
        ComparisonReport::TagRow row;
        row.tag = tag;
        row.n = t[0];
        row.accuracy_a = static_cast<double>(t[1]) / t[0];
        row.accuracy_b = static_cast<double>(t[2]) / t[0];
        report.by_tag.push_back(row);
    }
    return report;
}

void write_comparison_csv(const std::string& path, const ComparisonReport& r) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_comparison_csv: cannot open " + path);
    f << "stat,group,a,b\n";
    f << "accuracy,all," << csv_double(r.accuracy_a) << ',' << csv_double(r.accuracy_b)
      << '\n';
    f << "bootstrap_lo,all," << csv_double(r.ci_a.lo) << ',' << csv_double(r.ci_b.lo) << '\n';
    f << "bootstrap_hi,all," << csv_double(r.ci_a.hi) << ',' << csv_double(r.ci_b.hi) << '\n';
    f << "both_correct,all," << r.pairs.both_correct << ",\n";
    f << "a_only,all," << r.pairs.a_only << ",\n";
    f << "b_only,all," << r.pairs.b_only << ",\n";
    f << "both_wrong,all," << r.pairs.both_wrong << ",\n";
    f << "mcnemar_chi2,all," << (r.test ? csv_double(r.test->chi2) : "") << ",\n";
    f << "mcnemar_p,all," << (r.test ? format_p_value(r.test->p) : "") << ",\n";
    for (const auto& row : r.by_tag)
        f << "accuracy," << row.tag << ',' << csv_double(row.accuracy_a) << ','
          << csv_double(row.accuracy_b) << '\n';
}

std::string comparison_table(const ComparisonReport& r) {
    std::ostringstream out;
    out << "                 A        B\n";
    out << "accuracy   " << csv_double(r.accuracy_a) << "    " << csv_double(r.accuracy_b)
        << "\n";
    out << "95% CI     [" << csv_double(r.ci_a.lo) << ", " << csv_double(r.ci_a.hi)
        << "]  [" << csv_double(r.ci_b.lo) << ", " << csv_double(r.ci_b.hi) << "]\n";
    out << "pairs: both_correct=" << r.pairs.both_correct << " a_only=" << r.pairs.a_only
        << " b_only=" << r.pairs.b_only << " both_wrong=" << r.pairs.both_wrong << "\n";
    if (r.test)
        out << "mcnemar: chi2=" << csv_double(r.test->chi2)
            << " p=" << format_p_value(r.test->p) << "\n";
    else
        out << "mcnemar: undefined (no discordant pairs)\n";
    for (const auto& row : r.by_tag)
        out << "  " << row.tag << " (n=" << row.n << "): " << csv_double(row.accuracy_a)
            << " vs " << csv_double(row.accuracy_b) << "\n";
    return out.str();
}

std::vector<LayerAucRow> run_layer_sweep(const RunConfig& cfg) {
    validate_config(cfg);
    ProblemSet set = make_problem_set(cfg);

    EngineConfig ecfg = cfg.engine;
    ecfg.mode = DecodeMode::Greedy;
    ecfg.capture_all_layers = true;

    std::vector<GenerationTrace> traces(set.count());
    parallel_for(set.count(), resolve_workers(cfg.workers), [&](int i) {
        traces[i] = run_one(cfg, ecfg, set, i, nullptr, nullptr);
    });

    std::vector<int> incorrect(set.count());
    for (int i = 0; i < set.count(); ++i) {
        if (set.sim) {
            incorrect[i] = !*traces[i].outcome;
        } else {
            // Synthetic split for the untrained decoder.
            incorrect[i] = traces[i].answer >= cfg.model.vocab / 2;
        }
    }
    return layer_auc(traces, incorrect);
}

namespace {

// All-error companion suite used to build bases for sweeps: same geometry and
// modes, distinct seed, no benign or shallow reversals.
RunConfig derive_calibration_config(const RunConfig& cfg) {
    RunConfig cal = cfg;
    cal.sim.seed = mix_seed({cfg.sim.seed, 0xCA11BULL});
    cal.sim.error_rate = 1.0;
    cal.sim.miss_rate = 0.0;
    cal.sim.benign_low_rate = 0.0;
    cal.sim.benign_mild_rate = 0.0;
    cal.sim.uncorrectable_rate = 0.0;
    cal.sim.onset_step_override = -1;
    cal.engine.mode = DecodeMode::Greedy;
    return cal;
}

}  // namespace

std::vector<GridRow> run_grid_search(const RunConfig& cfg, const GridAxes& axes) {
    if (cfg.backend != BackendKind::Simulator)
        throw std::invalid_argument("run_grid_search: requires the simulator backend");
    std::vector<GridRow> rows = make_grid(axes);

    std::filesystem::create_directories(cfg.out_dir);
    // One basis per (l_crit, tau_phi): both parameters shape the calibration.
    std::map<std::pair<int, double>, std::string> basis_paths;
    for (int lc : axes.l_crit) {
        for (double tp : axes.tau_phi) {
            RunConfig cal = derive_calibration_config(cfg);
            cal.engine.l_crit = lc;
            cal.engine.gate.tau_phi = tp;
            cal.basis.path = cfg.out_dir + "/grid_basis_l" + std::to_string(lc) + "_t" +
                             csv_double(tp) + ".lpsb";
            calibrate(cal);
            basis_paths[{lc, tp}] = cal.basis.path;
        }
    }

    for (GridRow& row : rows) {
        RunConfig cell = cfg;
        cell.engine.mode = DecodeMode::Lpsr;
        cell.engine.l_crit = row.l_crit;
        cell.engine.gate.tau_phi = row.tau_phi;
        cell.engine.gate.tau_h = row.tau_h;
        cell.engine.alpha_max = row.alpha_max;
        cell.basis.path = basis_paths.at({row.l_crit, row.tau_phi});
        RunResult r = run_problems(cell);
        row.accuracy = r.summary.accuracy;
        row.rollback_rate = r.summary.rollback_rate;
        row.mean_rollbacks = r.summary.mean_rollbacks;
    }
    return rows;
}

std::vector<KSweepRow> run_basis_k_sweep(const RunConfig& cfg, const std::vector<int>& ks) {
    if (cfg.backend != BackendKind::Simulator)
        throw std::invalid_argument("run_basis_k_sweep: requires the simulator backend");
    if (ks.empty()) throw std::invalid_argument("run_basis_k_sweep: empty k list");
    std::filesystem::create_directories(cfg.out_dir);

    std::vector<KSweepRow> rows;
    for (int k : ks) {
        RunConfig cal = derive_calibration_config(cfg);
        cal.basis.k = k;
        cal.basis.path = cfg.out_dir + "/k_sweep_basis_" + std::to_string(k) + ".lpsb";
        CalibrationReport rep = calibrate(cal);

        RunConfig run = cfg;
        run.engine.mode = DecodeMode::Lpsr;
        run.basis.path = cal.basis.path;
        RunResult r = run_problems(run);

        KSweepRow row;
        row.k = k;
        row.deltas = rep.deltas;
        row.basis_count = rep.basis_count;
        row.inertia = rep.inertia;
        row.accuracy = r.summary.accuracy;
        row.rollback_rate = r.summary.rollback_rate;
        rows.push_back(row);
    }
    return rows;
}

std::vector<DepthSweepRow> run_depth_sweep(const RunConfig& cfg,
                                           const std::vector<int>& depths) {
    if (cfg.backend != BackendKind::Simulator)
        throw std::invalid_argument("run_depth_sweep: requires the simulator backend");
    if (depths.empty()) throw std::invalid_argument("run_depth_sweep: empty depth list");
    std::filesystem::create_directories(cfg.out_dir);

    RunConfig cal = derive_calibration_config(cfg);
    cal.basis.path = cfg.out_dir + "/depth_sweep_basis.lpsb";
    calibrate(cal);

    std::vector<DepthSweepRow> rows;
    for (int depth : depths) {
        RunConfig run = cfg;
        run.engine.mode = DecodeMode::Lpsr;
        run.engine.rollback_depth = depth;
        run.basis.path = cal.basis.path;
        RunResult r = run_problems(run);
        DepthSweepRow row;
        row.depth = depth;
        row.accuracy = r.summary.accuracy;
        row.rollback_rate = r.summary.rollback_rate;
        row.mean_token_cost = r.summary.mean_token_cost;
        rows.push_back(row);
    }
    return rows;
}

void write_k_sweep_csv(const std::string& path, std::span<const KSweepRow> rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_k_sweep_csv: cannot open " + path);
    f << "k,deltas,basis_count,inertia,accuracy,rollback_rate\n";
    for (const KSweepRow& r : rows)
        f << r.k << ',' << r.deltas << ',' << r.basis_count << ',' << csv_double(r.inertia)
          << ',' << csv_double(r.accuracy) << ',' << csv_double(r.rollback_rate) << '\n';
}

void write_depth_sweep_csv(const std::string& path, std::span<const DepthSweepRow> rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_depth_sweep_csv: cannot open " + path);
    f << "depth,accuracy,rollback_rate,mean_token_cost\n";
    for (const DepthSweepRow& r : rows)
        f << r.depth << ',' << csv_double(r.accuracy) << ',' << csv_double(r.rollback_rate)
          << ',' << csv_double(r.mean_token_cost) << '\n';
}

void write_basis_analysis(const SteeringBasis& basis, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const int n = basis.count();

    std::ofstream cosf(out_dir + "/basis_cosines.csv", std::ios::trunc);
    if (!cosf) throw std::runtime_error("write_basis_analysis: cannot open cosines csv");
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (j > 0) cosf << ',';
            cosf << csv_double(cosine(basis.vectors.row(i), basis.vectors.row(j)));
        }
        cosf << '\n';
    }

    std::ofstream normf(out_dir + "/basis_norms.csv", std::ios::trunc);
    if (!normf) throw std::runtime_error("write_basis_analysis: cannot open norms csv");
    normf << "index,norm\n";
    for (int i = 0; i < n; ++i)
        normf << i << ',' << csv_double(basis.vectors.row(i).cast<double>().norm()) << '\n';
}

}  // namespace lpsr
