#include "lpsr/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "lpsr/seeding.hpp"

namespace lpsr {

ConfusionMetrics confusion_metrics(const Confusion& c) {
    if (c.tp < 0 || c.fp < 0 || c.fn < 0 || c.tn < 0)
        throw std::invalid_argument("confusion_metrics: negative counts");
    if (c.tp + c.fp + c.fn + c.tn == 0)
        throw std::invalid_argument("confusion_metrics: empty confusion");
    ConfusionMetrics m;
    if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / (c.tp + c.fp);
    if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / (c.tp + c.fn);
    if (m.precision && m.recall && *m.precision + *m.recall > 0.0)
        m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
    if (c.fp + c.tn > 0) m.fpr = static_cast<double>(c.fp) / (c.fp + c.tn);
    return m;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("roc_auc: size mismatch");
    const std::size_t n = scores.size();
    long n_pos = 0;
    for (int l : labels) n_pos += l != 0;
    const long n_neg = static_cast<long>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::domain_error("roc_auc: needs both classes");

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midranks over tie groups, then the Mann-Whitney identity.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t t = i; t <= j; ++t)
            if (labels[idx[t]] != 0) rank_sum_pos += midrank;
        i = j + 1;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

McNemarResult mcnemar(long b, long c, bool continuity_correction) {
    if (b < 0 || c < 0) throw std::invalid_argument("mcnemar: negative counts");
    if (b + c == 0) throw std::domain_error("mcnemar: no discordant pairs");
    const double diff = std::abs(static_cast<double>(b) - static_cast<double>(c));
    const double num = continuity_correction ? (diff - 1.0) * (diff - 1.0) : diff * diff;
    McNemarResult r;
    r.chi2 = num / static_cast<double>(b + c);
    // Chi-square survival, 1 dof.
    r.p = std::erfc(std::sqrt(r.chi2 / 2.0));
    return r;
}

std::string format_p_value(double p) {
    if (p < 1e-16) return "<1e-16";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", p);
    return buf;
}

namespace {

// P(X >= k) for X ~ Binomial(n, p), summed in log space.
double binomial_upper_tail(long k, long n, double p) {
    const double lp = std::log(p);
    const double lq = std::log1p(-p);
    double tail = 0.0;
    for (long j = k; j <= n; ++j) {
        const double lpmf = std::lgamma(n + 1.0) - std::lgamma(j + 1.0) -
                            std::lgamma(n - j + 1.0) + j * lp + (n - j) * lq;
        tail += std::exp(lpmf);
    }
    return tail;
}

}  // namespace

Interval clopper_pearson(long k, long n, double confidence) {
    if (n < 1 || k < 0 || k > n) throw std::domain_error("clopper_pearson: invalid k/n");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw std::invalid_argument("clopper_pearson: confidence must be in (0, 1)");
    const double half_alpha = 0.5 * (1.0 - confidence);

    Interval iv;
    if (k == 0) {
        iv.lo = 0.0;
    } else {
        // P(X >= k | p) rises with p; find where it crosses alpha/2.
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            (binomial_upper_tail(k, n, mid) > half_alpha ? hi : lo) = mid;
        }
        iv.lo = 0.5 * (lo + hi);
    }
    if (k == n) {
        iv.hi = 1.0;
    } else {
        // P(X <= k | p) falls with p.
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double lower_tail = 1.0 - binomial_upper_tail(k + 1, n, mid);
            (lower_tail > half_alpha ? lo : hi) = mid;
        }
        iv.hi = 0.5 * (lo + hi);
    }
    return iv;
}

Interval bootstrap_ci(std::span<const int> outcomes, int resamples, double confidence,
                      std::uint64_t seed) {
    if (outcomes.empty()) throw std::invalid_argument("bootstrap_ci: empty outcomes");
    if (resamples < 1) throw std::invalid_argument("bootstrap_ci: resamples must be >= 1");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw std::invalid_argument("bootstrap_ci: confidence must be in (0, 1)");

    const std::size_t n = outcomes.size();
    std::mt19937_64 rng(mix_seed({seed, 0xB007ULL}));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> means(resamples);
    for (int r = 0; r < resamples; ++r) {
        long hits = 0;
        for (std::size_t i = 0; i < n; ++i) hits += outcomes[pick(rng)] != 0;
        means[r] = static_cast<double>(hits) / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    const double half_alpha = 0.5 * (1.0 - confidence);
    const auto at = [&](double q) {
        const auto i = static_cast<std::size_t>(
            std::llround(q * static_cast<double>(resamples - 1)));
        return means[std::min(i, means.size() - 1)];
    };
    return Interval{at(half_alpha), at(1.0 - half_alpha)};
}

MatchedPairs matched_pairs(std::span<const GenerationTrace> a,
                           std::span<const GenerationTrace> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("matched_pairs: trace count mismatch");
    MatchedPairs mp;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].problem_id != b[i].problem_id)
            throw std::invalid_argument("matched_pairs: problem id mismatch");
        if (!a[i].outcome || !b[i].outcome)
            throw std::invalid_argument("matched_pairs: outcome missing");
        const bool oa = *a[i].outcome, ob = *b[i].outcome;
        if (oa && ob)
            ++mp.both_correct;
        else if (oa)
            ++mp.a_only;
        else if (ob)
            ++mp.b_only;
        else
            ++mp.both_wrong;
    }
    return mp;
}

namespace {

Confusion confusion_from_fired(std::span<const GenerationTrace> traces,
                               bool (*fired)(const GenerationTrace&, double),
                               double tau_phi) {
    Confusion c;
    for (const GenerationTrace& t : traces) {
        if (!t.outcome) continue;
        const bool wrong = !*t.outcome;
        const bool hit = fired(t, tau_phi);
        if (hit && wrong)
            ++c.tp;
        else if (hit)
            ++c.fp;
        else if (wrong)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

}  // namespace

Confusion detector_confusion(std::span<const GenerationTrace> traces) {
    return confusion_from_fired(
        traces,
        [](const GenerationTrace& t, double) {
            for (const GateDecision& d : t.steps)
                if (d.authenticated) return true;
            return false;
        },
        0.0);
}

Confusion detector_confusion_cosine_only(std::span<const GenerationTrace> traces,
                                         double tau_phi) {
    return confusion_from_fired(
        traces,
        [](const GenerationTrace& t, double tau) {
            for (const GateDecision& d : t.steps)
                if (d.cos < -tau) return true;
            return false;
        },
        tau_phi);
}

RollbackStats rollback_stats(std::span<const GenerationTrace> traces) {
    if (traces.empty()) throw std::invalid_argument("rollback_stats: no traces");
    RollbackStats s;
    const char* labels[5] = {"0", "1", "2", "3", "4+"};
    std::array<long, 5> correct{};
    std::array<long, 5> with_outcome{};
    for (int i = 0; i < 5; ++i) s.by_count[i].label = labels[i];

    std::vector<double> fractions;
    for (const GenerationTrace& t : traces) {
        for (const RollbackEvent& e : t.rollbacks) fractions.push_back(e.position_fraction);
        const int bucket = std::min<int>(static_cast<int>(t.rollbacks.size()), 4);
        ++s.by_count[bucket].traces;
        if (t.outcome) {
            ++with_outcome[bucket];
            correct[bucket] += *t.outcome;
        }
    }
    for (int i = 0; i < 5; ++i)
        if (with_outcome[i] > 0)
            s.by_count[i].accuracy = static_cast<double>(correct[i]) / with_outcome[i];

    if (!fractions.empty()) {
        s.mean_fraction = std::accumulate(fractions.begin(), fractions.end(), 0.0) /
                          static_cast<double>(fractions.size());
        std::sort(fractions.begin(), fractions.end());
        const std::size_t m = fractions.size();
        s.median_fraction = m % 2 == 1 ? fractions[m / 2]
                                       : 0.5 * (fractions[m / 2 - 1] + fractions[m / 2]);
    }
    return s;
}

}  // namespace lpsr
