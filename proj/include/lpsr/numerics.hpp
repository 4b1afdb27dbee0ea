#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace lpsr {

using Vec = Eigen::VectorXf;
// Sample-per-row float matrix. Row-major so a row (one vector) is contiguous.
using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Cosine similarity of two nonzero vectors of equal dimension, clamped to
/// [-1, 1]. Accumulates in double regardless of input scalar type.
template <typename DerivedA, typename DerivedB>
double cosine(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& v) {
    if (u.size() != v.size()) throw std::invalid_argument("cosine: dimension mismatch");
    const Eigen::VectorXd ud = u.template cast<double>();
    const Eigen::VectorXd vd = v.template cast<double>();
    const double nu = ud.norm();
    const double nv = vd.norm();
    if (nu == 0.0 || nv == 0.0) throw std::domain_error("cosine: zero vector");
    return std::clamp(ud.dot(vd) / (nu * nv), -1.0, 1.0);
}

/// u / ||u||. Throws on the zero vector.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>
unit_normalize(const Eigen::MatrixBase<Derived>& u) {
    const auto n = u.norm();
    if (!(n > 0)) throw std::domain_error("unit_normalize: zero vector");
    return u / n;
}

/// Shannon entropy (natural log) of softmax(logits). Max-subtraction keeps the
/// computation stable for arbitrarily shifted logits; adding a constant to all
/// logits does not change the result.
template <typename Derived>
double softmax_entropy(const Eigen::MatrixBase<Derived>& logits) {
    if (logits.size() < 1) throw std::invalid_argument("softmax_entropy: empty logits");
    const Eigen::ArrayXd z = logits.template cast<double>().array();
    if (!z.isFinite().all()) throw std::domain_error("softmax_entropy: non-finite logits");
    const double m = z.maxCoeff();
    const Eigen::ArrayXd e = (z - m).exp();
    const double s = e.sum();
    const double weighted = ((z - m) * e).sum();
    return std::log(s) - weighted / s;
}

struct ClusterResult {
    RowMat centroids;               // k x d
    std::vector<int> assignments;   // one centroid index per input row
    double inertia = 0.0;           // sum of squared distances to assigned centroid
    std::vector<double> inertia_history;  // per Lloyd iteration, winning restart
};

struct KMeansOptions {
    int max_iterations = 300;
};

/// Lloyd k-means with seeded uniform initialization, deterministic
/// tie-breaking and empty-cluster reseeding. Runs `restarts` independent
/// starts and returns the lowest-inertia solution (ties: lowest restart
/// index). Inertia is non-increasing across iterations within a restart.
ClusterResult kmeans(const RowMat& points, int k, int restarts, std::uint64_t seed,
                     const KMeansOptions& opts = {});

}  // namespace lpsr
