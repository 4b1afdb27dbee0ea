#include "lpsr/numerics.hpp"

#include <limits>
#include <random>

#include "lpsr/seeding.hpp"

namespace lpsr {
namespace {

// One restart of Lloyd's algorithm. Initial centroids are k distinct rows
// sampled uniformly; assignment ties go to the lowest centroid index; an
// empty cluster is reseeded to the point currently farthest from its
// assigned centroid (farthest-first over remaining unclaimed points).
ClusterResult lloyd_once(const RowMat& points, int k, std::uint64_t seed,
                         const KMeansOptions& opts) {
    const int n = static_cast<int>(points.rows());
    const int d = static_cast<int>(points.cols());
    std::mt19937_64 rng(seed);

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<int> pick(i, n - 1);
        std::swap(order[i], order[pick(rng)]);
    }

    RowMat centroids(k, d);
    for (int c = 0; c < k; ++c) centroids.row(c) = points.row(order[c]);

    std::vector<int> assign(n, -1);
    ClusterResult result;

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        // Assignment phase.
        bool changed = false;
        double inertia = 0.0;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_d = (points.row(i) - centroids.row(0)).cast<double>().squaredNorm();
            for (int c = 1; c < k; ++c) {
                const double dist = (points.row(i) - centroids.row(c)).cast<double>().squaredNorm();
                if (dist < best_d) {
                    best_d = dist;
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
            inertia += best_d;
        }
        result.inertia_history.push_back(inertia);
        result.inertia = inertia;
        if (!changed && iter > 0) break;

        // Update phase: means in double, then back to float rows.
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, d);
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) {
            sums.row(assign[i]) += points.row(i).cast<double>();
            ++counts[assign[i]];
        }
        std::vector<char> claimed(n, 0);
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                centroids.row(c) = (sums.row(c) / counts[c]).cast<float>();
                continue;
            }
            // Reseed: farthest unclaimed point from its assigned centroid.
            int far_i = -1;
            double far_d = -1.0;
            for (int i = 0; i < n; ++i) {
                if (claimed[i]) continue;
                const double dist =
                    (points.row(i) - centroids.row(assign[i])).cast<double>().squaredNorm();
                if (dist > far_d) {
                    far_d = dist;
                    far_i = i;
                }
            }
            centroids.row(c) = points.row(far_i);
            assign[far_i] = c;
            claimed[far_i] = 1;
        }
    }

    result.centroids = std::move(centroids);
    result.assignments = std::move(assign);
    return result;
}

}  // namespace

ClusterResult kmeans(const RowMat& points, int k, int restarts, std::uint64_t seed,
                     const KMeansOptions& opts) {
    const int n = static_cast<int>(points.rows());
    if (k < 1) throw std::invalid_argument("kmeans: k must be positive");
    if (restarts < 1) throw std::invalid_argument("kmeans: restarts must be positive");
    if (n < k) throw std::invalid_argument("kmeans: fewer points than clusters");
    if (!points.allFinite()) throw std::domain_error("kmeans: non-finite input");

    ClusterResult best;
    double best_inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        ClusterResult cur = lloyd_once(points, k, mix_seed({seed, static_cast<std::uint64_t>(r)}), opts);
        if (cur.inertia < best_inertia) {
            best_inertia = cur.inertia;
            best = std::move(cur);
        }
    }
    return best;
}

}  // namespace lpsr
