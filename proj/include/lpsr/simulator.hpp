#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lpsr/backend.hpp"

namespace lpsr {

enum class Regime {
    Nominal,          // small-angle drift, peaked output distribution
    ErrorOnset,       // directional reversal + flattened distribution
    PostError,        // downstream of an uncorrected onset
    BenignLowEntropy, // strong reversal but near-deterministic distribution
    BenignMild,       // mild reversal with a flat distribution
};

struct SimOnset {
    int position = 0;       // 0-based generation position
    int mode = 0;           // which shared error mode this onset belongs to
    float reflect = 0.75f;  // cosine at the onset is exactly -reflect
    bool correctable = true;
    bool miss = false;      // reflection too shallow for the default gate
    Vec delta;              // oracle hidden minus wrong hidden at the onset
};

// One synthetic trajectory plan: regimes per position, error onsets with
// their ground-truth corrections, and the token script for both branches.
struct SimProblem {
    int id = 0;
    std::uint64_t seed = 0;
    int steps = 0;  // positions 0..steps-1; answer at steps-2, EOS at steps-1
    std::vector<Regime> regime;
    std::vector<SimOnset> onsets;  // sorted by position
    int correct_answer = 0;
    int wrong_answer = 0;
    std::string tag;

    bool has_error() const { return !onsets.empty(); }
};

struct SimSuiteConfig {
    int count = 100;
    std::uint64_t seed = 0;
    int layers = 8;
    int dim = 64;
    int vocab = 64;
    int signal_layer = 4;  // reversals appear in this layer's stream only
    int modes = 8;         // shared error modes; 2*modes <= dim
    int onsets_max = 2;    // onsets per error problem, uniform in [1, onsets_max]
    double error_rate = 0.5;
    double uncorrectable_rate = 0.1;  // onsets whose delta is unrelated noise
    double miss_rate = 0.0;           // onsets reflecting too shallowly to gate
    double benign_low_rate = 0.0;     // problems with a low-entropy strong reversal
    double benign_mild_rate = 0.0;    // problems with a mild high-entropy reversal
    int steps_min = 24;
    int steps_max = 48;
    double drift_deg = 5.0;
    double onset_cosine = -0.75;
    double miss_cosine = -0.5;
    double benign_low_cosine = -0.75;
    double benign_mild_cosine = -0.5;
    double nominal_entropy = 1.5;
    double benign_low_entropy = 1.2;
    double onset_entropy_frac = 0.98;  // onsets sit at this fraction of ln(vocab)
    double noise = 0.08;               // jitter on correction deltas
    double align_threshold = 0.5;      // min cosine(injection, delta) that corrects
    double delta_mag = 1.0;
    int onset_step_override = -1;  // force a single onset at this engine step

    bool operator==(const SimSuiteConfig&) const = default;
};

/// Deterministic problem generator plus the trajectory dynamics shared by the
/// backend and the calibration oracle. Hidden streams are unit-norm random
/// walks; error onsets reflect the signal layer's direction and carry a
/// mode-anchored correction delta, so deltas cluster across problems and a
/// calibrated basis transfers to unseen problems.
class SimSuite {
public:
    explicit SimSuite(const SimSuiteConfig& cfg);

    const SimSuiteConfig& config() const { return cfg_; }
    int size() const { return static_cast<int>(problems_.size()); }
    const SimProblem& problem(int i) const { return problems_.at(i); }

    /// Hidden state of `layer` at `position`, given the per-onset outcome
    /// flags (true = corrected). The flag of an onset at `position` itself
    /// selects between the reflected state and reflected-plus-delta.
    Vec hidden_state(const SimProblem& p, int layer, int position,
                     std::span<const char> corrected) const;

    /// Signal-layer trajectory with every onset corrected: the calibration
    /// oracle paired against a failed greedy run.
    std::vector<Vec> oracle_hiddens(const SimProblem& p) const;

    /// Output logits at `position` for the branch implied by the outcome
    /// flags (argmax equals the scripted token).
    Vec logits_at(const SimProblem& p, int position, std::span<const char> corrected) const;

    int token_at(const SimProblem& p, int position, std::span<const char> corrected) const;

private:
    friend class SimBackend;

    SimSuiteConfig cfg_;
    std::vector<SimProblem> problems_;
    RowMat signatures_;  // modes x dim, orthonormal with targets_
    RowMat targets_;     // modes x dim
    double peak_nominal_ = 0.0;     // logit peak hitting nominal_entropy
    double peak_benign_low_ = 0.0;  // logit peak hitting benign_low_entropy

    SimProblem make_problem(int index) const;
    Vec mode_delta_direction(int mode, std::uint64_t jitter_seed) const;
};

/// DecoderBackend view of one simulated problem. Steps ignore the fed token
/// (the trajectory is scripted); branch state lives in the cache rows, so
/// rollback restores it exactly. An injected step at an onset position whose
/// direction aligns with that onset's delta moves the trajectory onto the
/// corrected branch.
class SimBackend : public DecoderBackend {
public:
    SimBackend(const SimSuite& suite, int problem_index);

    int layers() const override { return suite_.config().layers; }
    int dim() const override { return suite_.config().dim; }
    int vocab() const override { return suite_.config().vocab; }
    int kv_dim() const override { return 4; }

    StepOutput step(const KvCache& cache, int prev_token,
                    const HookRequest& hooks) const override;
    StepOutput step_with_injection(const KvCache& cache, int prev_token,
                                   const HookRequest& hooks, int layer,
                                   const Vec& add) const override;

private:
    StepOutput run(const KvCache& cache, const HookRequest& hooks, const Vec* add) const;

    const SimSuite& suite_;
    const SimProblem& prob_;
};

}  // namespace lpsr
