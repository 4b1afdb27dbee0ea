#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lpsr/engine.hpp"

namespace lpsr {

struct Confusion {
    long tp = 0, fp = 0, fn = 0, tn = 0;
};

// Undefined metrics (zero denominators) stay empty instead of collapsing
// to zero.
struct ConfusionMetrics {
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::optional<double> fpr;
};

ConfusionMetrics confusion_metrics(const Confusion& c);

/// Rank-based (Mann-Whitney) AUC of score vs. label; tied scores contribute
/// half credit. Throws when either class is empty.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct McNemarResult {
    double chi2 = 0.0;
    double p = 0.0;
};

/// Matched-pair discordance test over (b, c) = (a-only wins, b-only wins).
/// Default applies the continuity correction (|b-c|-1)^2/(b+c); p-value from
/// the 1-dof chi-square survival function. b + c must be positive.
McNemarResult mcnemar(long b, long c, bool continuity_correction = true);

/// "<1e-16" below that floor, scientific notation otherwise.
std::string format_p_value(double p);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Exact binomial (Clopper-Pearson) interval for k successes in n trials,
/// computed by bisecting the binomial tail probabilities. lo = 0 at k = 0,
/// hi = 1 at k = n.
Interval clopper_pearson(long k, long n, double confidence = 0.95);

/// Percentile bootstrap interval over resampled means of binary outcomes.
/// Deterministic given the seed.
Interval bootstrap_ci(std::span<const int> outcomes, int resamples, double confidence,
                      std::uint64_t seed);

struct MatchedPairs {
    long both_correct = 0;
    long a_only = 0;
    long b_only = 0;
    long both_wrong = 0;

    long total() const { return both_correct + a_only + b_only + both_wrong; }
};

/// Pairs traces by position; both sides must carry outcomes and identical
/// problem ids.
MatchedPairs matched_pairs(std::span<const GenerationTrace> a,
                           std::span<const GenerationTrace> b);

/// Per-problem detector outcome vs. ground truth: predicted positive means
/// the gate authenticated at least one step; actual positive means the
/// trace's outcome is "wrong answer". Traces without outcomes are skipped.
Confusion detector_confusion(std::span<const GenerationTrace> traces);

/// Like detector_confusion, but fired on the reversal condition alone
/// (entropy ignored).
Confusion detector_confusion_cosine_only(std::span<const GenerationTrace> traces,
                                         double tau_phi);

struct RollbackBucket {
    std::string label;  // "0", "1", "2", "3", "4+"
    long traces = 0;
    std::optional<double> accuracy;
};

struct RollbackStats {
    std::optional<double> mean_fraction;
    std::optional<double> median_fraction;
    std::array<RollbackBucket, 5> by_count;
};

/// Where interventions land (as a fraction of the final length) and accuracy
/// bucketed by interventions per trace.
RollbackStats rollback_stats(std::span<const GenerationTrace> traces);

}  // namespace lpsr
