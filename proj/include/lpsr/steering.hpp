#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lpsr/numerics.hpp"

namespace lpsr {

// Difference between the oracle-correct and free-running hidden state at the
// first reversal step of a failed trajectory.
struct CorrectionDelta {
    Vec delta;
    int problem_id = -1;
    int t_star = -1;
};

/// Unit-norm steering directions for one monitored layer. Built offline from
/// correction deltas; immutable and shareable afterwards.
struct SteeringBasis {
    RowMat vectors;            // count x d, unit rows
    int layer = 0;             // layer the calibration hiddens came from
    std::uint64_t cfg_digest = 0;

    int count() const { return static_cast<int>(vectors.rows()); }
    int dim() const { return static_cast<int>(vectors.cols()); }
};

struct ExtractStats {
    int no_shift = 0;   // no step crossed the cosine threshold
    int too_short = 0;  // shift found past the end of the oracle trajectory
};

/// Scans the failed trajectory for the first step whose consecutive cosine
/// drops below -tau_phi and returns oracle[t*] - wrong[t*]. Returns nullopt
/// (and counts why, if stats given) when no step qualifies or the oracle
/// trajectory is too short at t*.
std::optional<CorrectionDelta> extract_delta(std::span<const Vec> wrong,
                                             std::span<const Vec> oracle,
                                             double tau_phi,
                                             int problem_id = -1,
                                             ExtractStats* stats = nullptr);

struct BasisBuildOptions {
    int restarts = 20;
    double ortho_threshold = 0.95;  // max |cosine| allowed between kept vectors
    std::uint64_t seed = 0;
    double tau_phi = 0.6;  // recorded into the config digest
};

struct BasisBuildInfo {
    double inertia = 0.0;               // winning k-means restart
    std::vector<int> cluster_population;  // per centroid, pre-pruning
    int pruned = 0;                     // centroids dropped by orthogonalization
};

/// k-means over raw deltas, centroids unit-normalized, then greedy pruning:
/// centroids are visited by cluster population (descending) and kept only if
/// near-orthogonal (|cos| <= threshold) to everything already kept.
SteeringBasis build_basis(const std::vector<CorrectionDelta>& deltas, int k,
                          int layer, const BasisBuildOptions& opts,
                          BasisBuildInfo* info = nullptr);

struct DeltaChoice {
    int index = 0;
    Vec delta;
};

/// Exhaustive max-inner-product selection: argmax_i <basis[i], h>, ties to
/// the lowest index. h is used raw (not normalized).
DeltaChoice select_delta(const SteeringBasis& basis, const Vec& h);

/// argmax_i <basis[i], target - h>: the exact minimizer of
/// ||h + a*delta - target||^2 over a unit-norm basis at any fixed a > 0.
DeltaChoice select_delta_toward(const SteeringBasis& basis, const Vec& h, const Vec& target);

/// min(alpha_max, |c| / tau_phi * alpha_max). Continuous in c, saturating at
/// alpha_max once |c| reaches tau_phi.
double adaptive_alpha(double c, double tau_phi, double alpha_max);

struct ConcentrationBound {
    double exponent = 0.0;     // -d * tau_phi^2 / 2
    long double bound = 0.0L;  // e^exponent, evaluated in extended precision
};

/// Tail bound on a unit-sphere cap of angular width acos(tau_phi) in
/// dimension d under the isotropic Gaussian approximation.
ConcentrationBound concentration_bound(int d, double tau_phi);

}  // namespace lpsr
