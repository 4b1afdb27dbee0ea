#include "lpsr/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "lpsr/numerics.hpp"
#include "lpsr/seeding.hpp"

namespace lpsr {
namespace {

void validate_common(const DecoderBackend& backend, std::span<const int> prompt,
                     const EngineConfig& cfg) {
    if (prompt.empty()) throw std::invalid_argument("engine: empty prompt");
    for (int t : prompt)
        if (t < 0 || t >= backend.vocab())
            throw std::invalid_argument("engine: prompt token out of vocabulary");
    if (cfg.l_crit < 0 || cfg.l_crit >= backend.layers())
        throw std::invalid_argument("engine: l_crit out of range");
    if (cfg.max_steps < 1) throw std::invalid_argument("engine: max_steps must be positive");
    if (cfg.rollback_depth < 0 || cfg.rollback_depth > cfg.max_steps)
        throw std::invalid_argument("engine: rollback_depth out of range");
    if (!(cfg.alpha_max > 0.0)) throw std::invalid_argument("engine: alpha_max must be > 0");
}

Vec unit_or_zero(const Vec& v) {
    const float n = v.norm();
    if (n > 0.0f) return v / n;
    return Vec::Zero(v.size());
}

int sample_token(const Vec& logits, double temperature, std::mt19937_64& rng) {
    if (temperature <= 1e-6) {
        int best = 0;
        for (int i = 1; i < logits.size(); ++i)
            if (logits[i] > logits[best]) best = i;
        return best;
    }
    const Eigen::ArrayXd z = logits.cast<double>().array() / temperature;
    const Eigen::ArrayXd p = (z - z.maxCoeff()).exp();
    const double total = p.sum();
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double r = unif(rng) * total;
    for (int i = 0; i < p.size(); ++i) {
        r -= p[i];
        if (r <= 0.0) return i;
    }
    return static_cast<int>(p.size()) - 1;
}

struct LoopPolicy {
    bool intervene = false;              // LPSR rollback + injection
    const SteeringBasis* basis = nullptr;
    const Vec* static_delta = nullptr;   // inject every step
    std::mt19937_64* sampler = nullptr;  // temperature sampling
    double temperature = 0.0;
};

GenerationTrace run_loop(const DecoderBackend& backend, std::span<const int> prompt,
                         const EngineConfig& cfg, const LoopPolicy& policy) {
    validate_common(backend, prompt, cfg);
    if (policy.intervene) {
        if (policy.basis == nullptr || policy.basis->count() == 0)
            throw std::invalid_argument("engine: missing steering basis");
        if (policy.basis->dim() != backend.dim())
            throw std::invalid_argument("engine: basis dimension mismatch");
        if (policy.basis->layer != cfg.l_crit)
            throw std::invalid_argument("engine: basis layer does not match l_crit");
    }
    if (policy.static_delta != nullptr && policy.static_delta->size() != backend.dim())
        throw std::invalid_argument("engine: static delta dimension mismatch");

    const int n_layers = backend.layers();
    GenerationTrace trace;
    trace.prompt.assign(prompt.begin(), prompt.end());

    KvCache cache(n_layers, backend.kv_dim(),
                  static_cast<int>(prompt.size()) + cfg.max_steps + 1);

    HookRequest no_hooks;
    for (std::size_t i = 0; i + 1 < prompt.size(); ++i) {
        StepOutput out = backend.step(cache, prompt[i], no_hooks);
        cache.append(out.kv_delta);
    }

    HookRequest hooks;
    if (cfg.capture_all_layers) {
        hooks.layers.resize(n_layers);
        for (int l = 0; l < n_layers; ++l) hooks.layers[l] = l;
    } else {
        hooks.layers = {cfg.l_crit};
    }
    hooks.lens_layer = cfg.l_crit;

    Vec static_add;
    if (policy.static_delta != nullptr)
        static_add = static_cast<float>(cfg.alpha_max) * (*policy.static_delta);

    int prev = prompt.back();
    Vec v_prev = Vec::Zero(backend.dim());
    std::vector<Vec> v_prev_layers;
    if (cfg.capture_all_layers) {
        v_prev_layers.assign(n_layers, Vec::Zero(backend.dim()));
        trace.layer_min_cosine.assign(n_layers, std::numeric_limits<double>::infinity());
    }

    long budget = cfg.rollback_budget < 0 ? std::numeric_limits<long>::max()
                                          : cfg.rollback_budget;
    // Step-boundary digests, maintained only when interventions can happen.
    const bool verify = cfg.verify_rollback && policy.intervene;
    std::vector<std::uint64_t> boundary_digests;
    if (verify) boundary_digests.push_back(cache.digest());

    trace.truncated = true;
    for (int t = 1; t <= cfg.max_steps; ++t) {
        StepOutput out = policy.static_delta != nullptr
                             ? backend.step_with_injection(cache, prev, hooks,
                                                           cfg.l_crit, static_add)
                             : backend.step(cache, prev, hooks);
        ++trace.token_cost;

        const Vec& h = out.hidden_at(cfg.l_crit);
        const Vec v = unit_or_zero(h);
        const double c = static_cast<double>(v.dot(v_prev));
        const double entropy = softmax_entropy(out.lens_logits);
        GateDecision decision = authenticate(c, entropy, cfg.gate, t);
        trace.steps.push_back(decision);
        if (cfg.capture_hiddens) trace.captured_hiddens.push_back(h);
        if (cfg.capture_all_layers) {
            for (int l = 0; l < n_layers; ++l) {
                const Vec vl = unit_or_zero(out.hidden_at(l));
                if (t >= 2) {
                    const double cl = static_cast<double>(vl.dot(v_prev_layers[l]));
                    trace.layer_min_cosine[l] = std::min(trace.layer_min_cosine[l], cl);
                }
                v_prev_layers[l] = vl;
            }
        }

        int emitted;
        const bool act = policy.intervene && decision.authenticated && budget > 0 &&
                         cfg.rollback_depth >= 1;
        if (act) {
            // Discard this step's rows (never appended) and optionally pop
            // already-emitted tokens for deeper rewinds.
            const int extra = std::min<int>(cfg.rollback_depth - 1,
                                            static_cast<int>(trace.tokens.size()));
            if (extra > 0) {
                cache.rollback(extra);
                trace.tokens.resize(trace.tokens.size() - extra);
                prev = trace.tokens.empty() ? prompt.back() : trace.tokens.back();
            }
            if (verify) {
                boundary_digests.resize(boundary_digests.size() - extra);
                if (cache.digest() != boundary_digests.back())
                    throw std::logic_error("engine: cache digest mismatch before re-decode");
            }

            DeltaChoice choice = select_delta(*policy.basis, h);
            const double alpha = adaptive_alpha(c, cfg.gate.tau_phi, cfg.alpha_max);
            const Vec add = static_cast<float>(alpha) * choice.delta;
            StepOutput redecode =
                backend.step_with_injection(cache, prev, hooks, cfg.l_crit, add);
            ++trace.token_cost;

            const Vec& h2 = redecode.hidden_at(cfg.l_crit);
            const double hn = h2.norm();
            RollbackEvent ev;
            ev.step = t;
            ev.cos = c;
            ev.entropy = entropy;
            ev.delta_index = choice.index;
            ev.alpha = alpha;
            ev.magnitude_ratio = hn > 0.0 ? (h2 + add).norm() / hn : 1.0;
            // Output slot the intervention landed in; turned into a fraction
            // once the final length is known.
            ev.position_fraction = static_cast<double>(trace.tokens.size() + 1);
            trace.rollbacks.push_back(ev);

            v_prev = cfg.v_prev_from_original ? v : unit_or_zero(Vec(h2 + add));
            emitted = redecode.token;
            cache.append(redecode.kv_delta);
            --budget;
        } else {
            v_prev = v;
            emitted = policy.sampler != nullptr
                          ? sample_token(out.logits, policy.temperature, *policy.sampler)
                          : out.token;
            cache.append(out.kv_delta);
        }
        if (verify) boundary_digests.push_back(cache.digest());

        trace.tokens.push_back(emitted);
        prev = emitted;
        if (emitted == kEosToken) {
            trace.truncated = false;
            break;
        }
    }

    trace.final_length = static_cast<int>(trace.tokens.size());
    for (RollbackEvent& ev : trace.rollbacks)
        ev.position_fraction =
            std::min(1.0, ev.position_fraction / std::max(1, trace.final_length));
    for (int l = 0; l < static_cast<int>(trace.layer_min_cosine.size()); ++l)
        if (!std::isfinite(trace.layer_min_cosine[l])) trace.layer_min_cosine[l] = 1.0;
    trace.answer = extract_answer(trace.tokens);
    return trace;
}

}  // namespace

GenerationTrace generate_lpsr(const DecoderBackend& backend, std::span<const int> prompt,
                              const EngineConfig& cfg, const SteeringBasis& basis) {
    LoopPolicy policy;
    policy.intervene = true;
    policy.basis = &basis;
    return run_loop(backend, prompt, cfg, policy);
}

GenerationTrace generate_greedy(const DecoderBackend& backend, std::span<const int> prompt,
                                const EngineConfig& cfg) {
    return run_loop(backend, prompt, cfg, LoopPolicy{});
}

GenerationTrace generate_static_steer(const DecoderBackend& backend,
                                      std::span<const int> prompt, const EngineConfig& cfg,
                                      const Vec& delta) {
    LoopPolicy policy;
    policy.static_delta = &delta;
    return run_loop(backend, prompt, cfg, policy);
}

BestOfNResult generate_best_of_n(const DecoderBackend& backend, std::span<const int> prompt,
                                 const EngineConfig& cfg, std::uint64_t sample_seed) {
    if (cfg.n < 1) throw std::invalid_argument("engine: n must be >= 1");
    if (cfg.temperature < 0.0)
        throw std::invalid_argument("engine: temperature must be >= 0");
    BestOfNResult result;
    result.rollouts.reserve(cfg.n);
    for (int r = 0; r < cfg.n; ++r) {
        std::mt19937_64 rng(mix_seed({sample_seed, static_cast<std::uint64_t>(r)}));
        LoopPolicy policy;
        policy.sampler = &rng;
        policy.temperature = cfg.temperature;
        GenerationTrace trace = run_loop(backend, prompt, cfg, policy);
        result.token_cost += trace.token_cost;
        result.vote.answers.push_back(trace.answer);
        result.rollouts.push_back(std::move(trace));
    }
    result.vote.winner = majority_vote(result.vote.answers);
    return result;
}

int extract_answer(std::span<const int> tokens) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] == kEosToken)
            return i == 0 ? -1 : tokens[i - 1];
    }
    return tokens.empty() ? -1 : tokens.back();
}

int majority_vote(std::span<const int> answers) {
    if (answers.empty()) throw std::invalid_argument("majority_vote: no answers");
    int winner = answers[0];
    std::size_t winner_count = 0;
    for (std::size_t i = 0; i < answers.size(); ++i) {
        std::size_t count = 0;
        for (int a : answers)
            if (a == answers[i]) ++count;
        if (count > winner_count) {
            winner = answers[i];
            winner_count = count;
        }
    }
    return winner;
}

}  // namespace lpsr
