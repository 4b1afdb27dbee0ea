#include "lpsr/steering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lpsr/seeding.hpp"

namespace lpsr {

std::optional<CorrectionDelta> extract_delta(std::span<const Vec> wrong,
                                             std::span<const Vec> oracle,
                                             double tau_phi,
                                             int problem_id,
                                             ExtractStats* stats) {
    if (wrong.empty() || oracle.empty())
        throw std::invalid_argument("extract_delta: empty trajectory");
    int t_star = -1;
    for (std::size_t t = 1; t < wrong.size(); ++t) {
        if (cosine(wrong[t], wrong[t - 1]) < -tau_phi) {
            t_star = static_cast<int>(t);
            break;
        }
    }
    if (t_star < 0) {
        if (stats) ++stats->no_shift;
        return std::nullopt;
    }
    if (t_star >= static_cast<int>(oracle.size())) {
        if (stats) ++stats->too_short;
        return std::nullopt;
    }
    CorrectionDelta d;
    d.delta = oracle[t_star] - wrong[t_star];
    d.problem_id = problem_id;
    d.t_star = t_star;
    return d;
}

SteeringBasis build_basis(const std::vector<CorrectionDelta>& deltas, int k,
                          int layer, const BasisBuildOptions& opts,
                          BasisBuildInfo* info) {
    if (k < 1) throw std::invalid_argument("build_basis: k must be positive");
    if (static_cast<int>(deltas.size()) < k)
        throw std::invalid_argument("build_basis: fewer deltas than clusters");
    if (!(opts.ortho_threshold > 0.0 && opts.ortho_threshold <= 1.0))
        throw std::invalid_argument("build_basis: ortho_threshold must be in (0, 1]");

    const int d = static_cast<int>(deltas.front().delta.size());
    RowMat points(static_cast<int>(deltas.size()), d);
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        if (deltas[i].delta.size() != d)
            throw std::invalid_argument("build_basis: inconsistent delta dims");
        points.row(static_cast<int>(i)) = deltas[i].delta;
    }

    ClusterResult clusters = kmeans(points, k, opts.restarts, opts.seed);

    std::vector<int> population(k, 0);
    for (int a : clusters.assignments) ++population[a];

    // Population-descending visit order; ties keep centroid index order.
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return population[a] > population[b]; });

    std::vector<Vec> kept;
    for (int idx : order) {
        const double norm = clusters.centroids.row(idx).cast<double>().norm();
        if (!(norm > 1e-12)) continue;  // degenerate centroid, nothing to normalize
        Vec u = clusters.centroids.row(idx).transpose() / static_cast<float>(norm);
        bool ok = true;
        for (const Vec& w : kept) {
            if (std::abs(cosine(u, w)) > opts.ortho_threshold) {
                ok = false;
                break;
            }
        }
        if (ok) kept.push_back(std::move(u));
    }

    if (info != nullptr) {
        info->inertia = clusters.inertia;
        info->cluster_population = population;
        info->pruned = k - static_cast<int>(kept.size());
    }

    SteeringBasis basis;
    basis.layer = layer;
    basis.vectors.resize(static_cast<int>(kept.size()), d);
    for (std::size_t i = 0; i < kept.size(); ++i)
        basis.vectors.row(static_cast<int>(i)) = kept[i];

    struct {
        double tau_phi;
        std::int64_t k;
        std::uint64_t seed;
        double ortho;
    } cfg{opts.tau_phi, k, opts.seed, opts.ortho_threshold};
    basis.cfg_digest = fnv1a64(&cfg, sizeof(cfg));
    return basis;
}

namespace {

DeltaChoice argmax_inner(const SteeringBasis& basis, const Vec& query) {
    if (basis.count() == 0) throw std::invalid_argument("select_delta: empty basis");
    if (query.size() != basis.dim())
        throw std::invalid_argument("select_delta: dimension mismatch");
    Eigen::VectorXf scores = basis.vectors * query;
    int best = 0;
    for (int i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return DeltaChoice{best, basis.vectors.row(best).transpose()};
}

}  // namespace

DeltaChoice select_delta(const SteeringBasis& basis, const Vec& h) {
    return argmax_inner(basis, h);
}

DeltaChoice select_delta_toward(const SteeringBasis& basis, const Vec& h, const Vec& target) {
    return argmax_inner(basis, Vec(target - h));
}

double adaptive_alpha(double c, double tau_phi, double alpha_max) {
    if (!(tau_phi > 0.0)) throw std::invalid_argument("adaptive_alpha: tau_phi must be > 0");
    if (!(alpha_max > 0.0)) throw std::invalid_argument("adaptive_alpha: alpha_max must be > 0");
    return std::min(alpha_max, std::abs(c) / tau_phi * alpha_max);
}

ConcentrationBound concentration_bound(int d, double tau_phi) {
    if (d < 1) throw std::invalid_argument("concentration_bound: d must be >= 1");
    if (!(tau_phi > 0.0 && tau_phi <= 1.0))
        throw std::invalid_argument("concentration_bound: tau_phi must be in (0, 1]");
    ConcentrationBound b;
    b.exponent = -static_cast<double>(d) * tau_phi * tau_phi / 2.0;
    b.bound = std::exp(static_cast<long double>(b.exponent));
    return b;
}

}  // namespace lpsr
