#include "lpsr/simulator.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "lpsr/seeding.hpp"

namespace lpsr {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr float kUniformTilt = 0.05f;  // keeps argmax defined at near-flat steps

Vec unit_gaussian(int dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = dist(rng);
    return unit_normalize(v);
}

// Unit component of v orthogonal to unit vector u. Falls back to seeded
// directions if v is (numerically) parallel to u.
Vec orthogonal_component(const Vec& v, const Vec& u, std::uint64_t fallback_seed) {
    Vec w = v - v.dot(u) * u;
    for (int attempt = 0; attempt < 16; ++attempt) {
        const float n = w.norm();
        if (n > 1e-5f) return w / n;
        Vec r = unit_gaussian(static_cast<int>(u.size()),
                              mix_seed({fallback_seed, static_cast<std::uint64_t>(attempt)}));
        w = r - r.dot(u) * u;
    }
    throw std::runtime_error("orthogonal_component: degenerate geometry");
}

// Peak logit value z such that softmax((z, 0, ..., 0)) over `vocab` entries
// has the requested entropy. Entropy is monotone decreasing in z.
double peak_logit_for_entropy(int vocab, double target) {
    const double max_h = std::log(static_cast<double>(vocab));
    if (!(target > 0.0 && target < max_h))
        throw std::invalid_argument("peak_logit_for_entropy: target outside (0, ln V)");
    double lo = 0.0, hi = 60.0;
    Vec probe = Vec::Zero(vocab);
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        probe[0] = static_cast<float>(mid);
        if (softmax_entropy(probe) > target)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

SimSuite::SimSuite(const SimSuiteConfig& cfg) : cfg_(cfg) {
    if (cfg.count < 1) throw std::invalid_argument("SimSuite: count must be positive");
    if (cfg.layers < 1 || cfg.dim < 2 || cfg.vocab < 8)
        throw std::invalid_argument("SimSuite: bad geometry");
    if (cfg.signal_layer < 0 || cfg.signal_layer >= cfg.layers)
        throw std::invalid_argument("SimSuite: signal_layer out of range");
    if (cfg.modes < 1 || 2 * cfg.modes > cfg.dim)
        throw std::invalid_argument("SimSuite: need 2*modes <= dim");
    if (cfg.steps_min < 8 || cfg.steps_max < cfg.steps_min)
        throw std::invalid_argument("SimSuite: need steps_max >= steps_min >= 8");
    if (cfg.onsets_max < 1) throw std::invalid_argument("SimSuite: onsets_max must be >= 1");
    for (double rate : {cfg.error_rate, cfg.uncorrectable_rate, cfg.miss_rate,
                        cfg.benign_low_rate, cfg.benign_mild_rate}) {
        if (rate < 0.0 || rate > 1.0)
            throw std::invalid_argument("SimSuite: rates must be in [0, 1]");
    }

    // Orthonormal signature/target pairs shared by every problem of a mode.
    std::mt19937_64 rng(mix_seed({cfg.seed, 0xBA515ULL}));
    std::normal_distribution<float> dist(0.0f, 1.0f);
    Eigen::MatrixXf raw(cfg.dim, 2 * cfg.modes);
    for (int c = 0; c < raw.cols(); ++c)
        for (int r = 0; r < raw.rows(); ++r) raw(r, c) = dist(rng);
    Eigen::HouseholderQR<Eigen::MatrixXf> qr(raw);
    Eigen::MatrixXf q = qr.householderQ() * Eigen::MatrixXf::Identity(cfg.dim, 2 * cfg.modes);
    Eigen::MatrixXf r_diag = qr.matrixQR().topRows(2 * cfg.modes);
    for (int c = 0; c < q.cols(); ++c)
        if (r_diag(c, c) < 0.0f) q.col(c) = -q.col(c);
    signatures_ = q.leftCols(cfg.modes).transpose();
    targets_ = q.rightCols(cfg.modes).transpose();

    peak_nominal_ = peak_logit_for_entropy(cfg.vocab, cfg.nominal_entropy);
    peak_benign_low_ = peak_logit_for_entropy(cfg.vocab, cfg.benign_low_entropy);

    problems_.reserve(cfg.count);
    for (int i = 0; i < cfg.count; ++i) problems_.push_back(make_problem(i));
}

Vec SimSuite::mode_delta_direction(int mode, std::uint64_t jitter_seed) const {
    Vec base = unit_normalize(
        Vec(signatures_.row(mode).transpose() + targets_.row(mode).transpose()));
    Vec jit = unit_gaussian(cfg_.dim, jitter_seed);
    return unit_normalize(Vec(base + static_cast<float>(cfg_.noise) * jit));
}

SimProblem SimSuite::make_problem(int index) const {
    SimProblem p;
    p.id = index;
    p.seed = mix_seed({cfg_.seed, 0x50B1E7ULL, static_cast<std::uint64_t>(index)});
    p.tag = "level" + std::to_string(1 + index % 5);

    std::mt19937_64 rng(p.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int> step_pick(cfg_.steps_min, cfg_.steps_max);
    p.steps = step_pick(rng);
    p.regime.assign(p.steps, Regime::Nominal);

    std::uniform_int_distribution<int> sym(2, cfg_.vocab - 1);
    p.correct_answer = sym(rng);
    p.wrong_answer = 2 + (p.correct_answer - 2 + 1) % (cfg_.vocab - 2);

    const int lo = 2, hi = p.steps - 4;
    auto place = [&](std::vector<int>& taken, int from, int to, int gap) -> int {
        std::uniform_int_distribution<int> pick(from, to);
        for (int attempt = 0; attempt < 256; ++attempt) {
            const int pos = pick(rng);
            bool ok = true;
            for (int t : taken)
                if (std::abs(t - pos) < gap) ok = false;
            if (ok) {
                taken.push_back(pos);
                return pos;
            }
        }
        return -1;
    };

    std::vector<int> occupied;
    const bool forced = cfg_.onset_step_override >= 2;
    bool is_error = forced || unif(rng) < cfg_.error_rate;
    if (is_error) {
        int n_onsets = 1;
        if (!forced && cfg_.onsets_max > 1) {
            std::uniform_int_distribution<int> pick_n(1, cfg_.onsets_max);
            n_onsets = pick_n(rng);
        }
        for (int k = 0; k < n_onsets; ++k) {
            int pos;
            if (forced) {
                pos = std::clamp(cfg_.onset_step_override - 1, 1, hi);
                occupied.push_back(pos);
            } else {
                pos = place(occupied, std::max(lo, static_cast<int>(0.3 * p.steps)),
                            std::max(lo, static_cast<int>(0.75 * p.steps)), 3);
                if (pos < 0) continue;
            }
            SimOnset o;
            o.position = pos;
            std::uniform_int_distribution<int> pick_mode(0, cfg_.modes - 1);
            o.mode = pick_mode(rng);
            o.miss = unif(rng) < cfg_.miss_rate;
            o.correctable = unif(rng) >= cfg_.uncorrectable_rate;
            const double base = o.miss ? std::abs(cfg_.miss_cosine) : std::abs(cfg_.onset_cosine);
            const double spread = o.miss ? 0.05 : 0.1;
            o.reflect = static_cast<float>(std::min(0.95, base + spread * unif(rng)));
            const std::uint64_t dseed =
                mix_seed({p.seed, 0xDE17AULL, static_cast<std::uint64_t>(pos)});
            if (o.correctable && !o.miss)
                o.delta = static_cast<float>(cfg_.delta_mag) * mode_delta_direction(o.mode, dseed);
            else
                o.delta = static_cast<float>(cfg_.delta_mag) * unit_gaussian(cfg_.dim, dseed);
            p.onsets.push_back(std::move(o));
        }
        std::sort(p.onsets.begin(), p.onsets.end(),
                  [](const SimOnset& a, const SimOnset& b) { return a.position < b.position; });
        for (const SimOnset& o : p.onsets) p.regime[o.position] = Regime::ErrorOnset;
        if (!p.onsets.empty()) {
            for (int t = p.onsets.front().position + 1; t < p.steps - 1; ++t)
                if (p.regime[t] == Regime::Nominal) p.regime[t] = Regime::PostError;
        }
    }

    if (unif(rng) < cfg_.benign_low_rate) {
        const int pos = place(occupied, lo, hi, 2);
        if (pos >= 0) p.regime[pos] = Regime::BenignLowEntropy;
    }
    if (unif(rng) < cfg_.benign_mild_rate) {
        // Mild reversals land before the first onset so threshold sweeps see
        // them first; anywhere on error-free problems.
        const int to = p.onsets.empty() ? hi : std::max(lo, p.onsets.front().position - 2);
        const int pos = place(occupied, lo, to, 2);
        if (pos >= 0) p.regime[pos] = Regime::BenignMild;
    }
    return p;
}

Vec SimSuite::hidden_state(const SimProblem& p, int layer, int position,
                           std::span<const char> corrected) const {
    if (layer < 0 || layer >= cfg_.layers)
        throw std::invalid_argument("hidden_state: layer out of range");
    if (position < 0 || position >= p.steps)
        throw std::domain_error("hidden_state: position outside schedule");
    if (corrected.size() != p.onsets.size())
        throw std::invalid_argument("hidden_state: outcome flags mismatch");

    const double theta = cfg_.drift_deg * kPi / 180.0;
    const float ct = static_cast<float>(std::cos(theta));
    const float st = static_cast<float>(std::sin(theta));
    const bool signal = layer == cfg_.signal_layer;

    Vec u = unit_gaussian(cfg_.dim, mix_seed({p.seed, 0xA11CEULL,
                                              static_cast<std::uint64_t>(layer)}));
    for (int t = 1; t <= position; ++t) {
        const std::uint64_t tseed =
            mix_seed({p.seed, static_cast<std::uint64_t>(layer), static_cast<std::uint64_t>(t)});
        const SimOnset* onset = nullptr;
        int onset_idx = -1;
        if (signal) {
            for (std::size_t i = 0; i < p.onsets.size(); ++i) {
                if (p.onsets[i].position == t) {
                    onset = &p.onsets[i];
                    onset_idx = static_cast<int>(i);
                    break;
                }
            }
        }

        Vec next;
        if (onset != nullptr) {
            const Vec sig = signatures_.row(onset->mode).transpose();
            const Vec s_perp = orthogonal_component(sig, u, tseed);
            const float a = onset->reflect;
            const float b = std::sqrt(1.0f - a * a);
            const Vec wrong = -a * u + b * s_perp;
            if (corrected[onset_idx]) {
                Vec right = wrong + onset->delta;
                if (t == position) return right;
                next = unit_normalize(right);
            } else {
                if (t == position) return wrong;
                next = wrong;
            }
        } else if (signal && (p.regime[t] == Regime::BenignLowEntropy ||
                              p.regime[t] == Regime::BenignMild)) {
            std::mt19937_64 brng(mix_seed({tseed, 0xBE419ULL}));
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            const double base = p.regime[t] == Regime::BenignLowEntropy
                                    ? std::abs(cfg_.benign_low_cosine)
                                    : std::abs(cfg_.benign_mild_cosine) - 0.02;
            const double spread = p.regime[t] == Regime::BenignLowEntropy ? 0.1 : 0.08;
            const float a = static_cast<float>(std::min(0.95, base + spread * unif(brng)));
            const float b = std::sqrt(1.0f - a * a);
            const Vec dir = unit_gaussian(cfg_.dim, mix_seed({tseed, 0xD14ULL}));
            next = -a * u + b * orthogonal_component(dir, u, tseed);
            if (t == position) return next;
        } else {
            const Vec r = unit_gaussian(cfg_.dim, tseed);
            next = ct * u + st * orthogonal_component(r, u, mix_seed({tseed, 1}));
            if (t == position) return next;
        }
        u = std::move(next);
    }
    return u;  // position == 0
}

std::vector<Vec> SimSuite::oracle_hiddens(const SimProblem& p) const {
    std::vector<char> all(p.onsets.size(), 1);
    std::vector<Vec> out;
    out.reserve(p.steps);
    for (int t = 0; t < p.steps; ++t)
        out.push_back(hidden_state(p, cfg_.signal_layer, t, all));
    return out;
}

int SimSuite::token_at(const SimProblem& p, int position, std::span<const char> corrected) const {
    if (position < 0 || position >= p.steps)
        throw std::domain_error("token_at: position outside schedule");
    if (position == p.steps - 1) return kEosToken;
    bool wrong = false;
    for (std::size_t i = 0; i < p.onsets.size(); ++i)
        if (p.onsets[i].position <= position && !corrected[i]) wrong = true;
    if (position == p.steps - 2) return wrong ? p.wrong_answer : p.correct_answer;
    const std::uint64_t h = mix_seed({p.seed, 0x70C5ULL, static_cast<std::uint64_t>(position),
                                      static_cast<std::uint64_t>(wrong ? 1 : 0)});
    return 2 + static_cast<int>(h % static_cast<std::uint64_t>(cfg_.vocab - 2));
}

Vec SimSuite::logits_at(const SimProblem& p, int position,
                        std::span<const char> corrected) const {
    const int tok = token_at(p, position, corrected);
    Vec logits = Vec::Zero(cfg_.vocab);

    bool flat = false;
    double peak = peak_nominal_;
    switch (p.regime[position]) {
        case Regime::ErrorOnset: {
            bool corrected_here = false;
            for (std::size_t i = 0; i < p.onsets.size(); ++i)
                if (p.onsets[i].position == position && corrected[i]) corrected_here = true;
            flat = !corrected_here;
            break;
        }
        case Regime::BenignMild:
            flat = true;
            break;
        case Regime::BenignLowEntropy:
            peak = peak_benign_low_;
            break;
        case Regime::Nominal:
        case Regime::PostError:
            break;
    }
    logits[tok] = flat ? kUniformTilt : static_cast<float>(peak);
    return logits;
}

SimBackend::SimBackend(const SimSuite& suite, int problem_index)
    : suite_(suite), prob_(suite.problem(problem_index)) {}

StepOutput SimBackend::run(const KvCache& cache, const HookRequest& hooks,
                           const Vec* add) const {
    const SimSuiteConfig& cfg = suite_.config();
    if (cache.layers() != cfg.layers || cache.kv_dim() != kv_dim())
        throw std::invalid_argument("SimBackend: cache geometry mismatch");
    const int pos = cache.len();
    if (pos >= prob_.steps)
        throw std::domain_error("SimBackend: step beyond schedule");
    if (hooks.lens_layer >= cfg.layers)
        throw std::invalid_argument("SimBackend: lens layer out of range");

    // Branch state: outcome flags of past onsets live in the cache rows, so
    // rollback rewinds them together with everything else.
    std::vector<char> corrected(prob_.onsets.size(), 0);
    int onset_here = -1;
    for (std::size_t i = 0; i < prob_.onsets.size(); ++i) {
        const int opos = prob_.onsets[i].position;
        if (opos < pos)
            corrected[i] = cache.keys(0)(opos, 0) == 2.0f ? 1 : 0;
        else if (opos == pos)
            onset_here = static_cast<int>(i);
    }
    bool corrected_here = false;
    if (add != nullptr && onset_here >= 0 && add->norm() > 0.0f) {
        const SimOnset& o = prob_.onsets[onset_here];
        corrected_here = cosine(*add, o.delta) >= cfg.align_threshold;
    }
    if (onset_here >= 0) corrected[onset_here] = corrected_here ? 1 : 0;

    StepOutput out;
    out.logits = suite_.logits_at(prob_, pos, corrected);
    out.token = suite_.token_at(prob_, pos, corrected);
    if (hooks.lens_layer >= 0) out.lens_logits = out.logits;
    for (int l : hooks.layers)
        out.hidden.emplace_back(l, suite_.hidden_state(prob_, l, pos, corrected));

    const float code = onset_here >= 0 ? (corrected_here ? 2.0f : 1.0f) : 0.0f;
    Vec row(4);
    row << code, static_cast<float>(pos), 0.0f, 0.0f;
    out.kv_delta.k.assign(cfg.layers, row);
    out.kv_delta.v.assign(cfg.layers, row);
    return out;
}

StepOutput SimBackend::step(const KvCache& cache, int prev_token,
                            const HookRequest& hooks) const {
    if (prev_token < 0 || prev_token >= vocab())
        throw std::domain_error("SimBackend: token out of vocabulary");
    return run(cache, hooks, nullptr);
}

StepOutput SimBackend::step_with_injection(const KvCache& cache, int prev_token,
                                           const HookRequest& hooks, int layer,
                                           const Vec& add) const {
    if (prev_token < 0 || prev_token >= vocab())
        throw std::domain_error("SimBackend: token out of vocabulary");
    if (layer < 0 || layer >= layers())
        throw std::invalid_argument("SimBackend: injection layer out of range");
    if (add.size() != dim())
        throw std::invalid_argument("SimBackend: injection dimension mismatch");
    // Correction only takes at the monitored signal layer.
    if (layer != suite_.config().signal_layer) return run(cache, hooks, nullptr);
    return run(cache, hooks, &add);
}

}  // namespace lpsr
