#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lpsr/backend.hpp"
#include "lpsr/detector.hpp"
#include "lpsr/steering.hpp"

namespace lpsr {

enum class DecodeMode { Lpsr, Greedy, StaticSteer, BestOfN };

struct EngineConfig {
    DecodeMode mode = DecodeMode::Lpsr;
    int l_crit = 4;            // monitored layer
    GateConfig gate;           // tau_phi, tau_h
    double alpha_max = 0.1;    // injection scale ceiling
    int max_steps = 64;        // generation budget T
    int rollback_depth = 1;    // tokens discarded per intervention; 0 disables
    int rollback_budget = -1;  // max interventions per problem; <0 = unlimited
    int n = 16;                // rollouts for BestOfN
    double temperature = 0.7;  // sampling temperature for BestOfN
    // After an intervention the reversal reference follows the re-decoded,
    // post-injection direction; this switches it to the original one.
    bool v_prev_from_original = false;
    // Capture per-layer minimum consecutive cosine in one pass (sweeps).
    bool capture_all_layers = false;
    // Record the monitored layer's hidden per step (calibration).
    bool capture_hiddens = false;
    // Check cache digests around every intervention against the step
    // boundary's checkpoint.
    bool verify_rollback = true;

    bool operator==(const EngineConfig&) const = default;
};

struct RollbackEvent {
    int step = 0;
    double cos = 0.0;
    double entropy = 0.0;
    int delta_index = -1;
    double alpha = 0.0;
    double position_fraction = 0.0;  // emitted position / final length
    double magnitude_ratio = 1.0;    // ||h + alpha*delta|| / ||h||
};

struct VoteRecord {
    std::vector<int> answers;  // per rollout
    int winner = -1;
};

struct GenerationTrace {
    int problem_id = -1;
    std::string tag;
    std::vector<int> prompt;
    std::vector<int> tokens;  // emitted tokens, EOS included when reached
    std::vector<GateDecision> steps;
    std::vector<RollbackEvent> rollbacks;
    int final_length = 0;
    std::int64_t token_cost = 0;  // forward passes spent in the generation loop
    bool truncated = false;       // ran out of steps before EOS
    int answer = -1;              // last emitted symbol before EOS
    std::optional<bool> outcome;  // answer correct, when ground truth exists

    std::vector<double> layer_min_cosine;  // per layer, when captured
    std::vector<Vec> captured_hiddens;     // monitored layer, when captured
    std::optional<VoteRecord> vote;        // vote summary for best-of-n
};

struct BestOfNResult {
    std::vector<GenerationTrace> rollouts;
    VoteRecord vote;
    std::int64_t token_cost = 0;  // sum over rollouts
};

/// Monitored decode loop: per step, gate the monitored layer's directional
/// reversal against the entropy of its unembedded state; on authentication,
/// discard the step's cache rows, pick the basis vector by max inner product
/// with the current hidden, re-decode once with the scaled injection, and
/// emit the re-decoded token without re-gating it.
GenerationTrace generate_lpsr(const DecoderBackend& backend, std::span<const int> prompt,
                              const EngineConfig& cfg, const SteeringBasis& basis);

/// Plain argmax decoding. Gate telemetry is recorded but never acted on.
GenerationTrace generate_greedy(const DecoderBackend& backend, std::span<const int> prompt,
                                const EngineConfig& cfg);

/// Injects alpha_max * delta at the monitored layer on every step. No
/// rollback, no detection-conditioned behavior.
GenerationTrace generate_static_steer(const DecoderBackend& backend,
                                      std::span<const int> prompt, const EngineConfig& cfg,
                                      const Vec& delta);

/// n temperature-sampled rollouts with a majority vote over extracted
/// answers; ties go to the earliest rollout.
BestOfNResult generate_best_of_n(const DecoderBackend& backend, std::span<const int> prompt,
                                 const EngineConfig& cfg, std::uint64_t sample_seed);

/// Last emitted symbol before EOS; the last token when EOS never appeared;
/// -1 when there is nothing before EOS.
int extract_answer(std::span<const int> tokens);

/// Majority answer; ties broken by earliest first occurrence.
int majority_vote(std::span<const int> answers);

}  // namespace lpsr
