// Copyright (c) 2026 ncatab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ncatab/common.hpp"

namespace ncatab {

enum class DistanceKind { euclid, squared_euclid, l1, neg_cosine, neg_dot };

inline std::string to_string(DistanceKind k) {
    switch (k) {
        case DistanceKind::euclid: return "euclid";
        case DistanceKind::squared_euclid: return "squared_euclid";
        case DistanceKind::l1: return "l1";
        case DistanceKind::neg_cosine: return "neg_cosine";
        case DistanceKind::neg_dot: return "neg_dot";
    }
    fail("unknown DistanceKind");
}

inline DistanceKind distance_from_string(const std::string& s) {
    if (s == "euclid") return DistanceKind::euclid;
    if (s == "squared_euclid") return DistanceKind::squared_euclid;
    if (s == "l1") return DistanceKind::l1;
    if (s == "neg_cosine") return DistanceKind::neg_cosine;
    if (s == "neg_dot") return DistanceKind::neg_dot;
    fail("unknown distance kind '" + s + "'");
}

// sqrt-argument floor for euclid; keeps the gradient finite at zero distance
inline constexpr double kDistanceEps = 1e-12;
// norm floor below which neg_cosine returns distance 0 with zero gradient
inline constexpr double kCosineNormFloor = 1e-12;

/// Cached forward state of a pairwise distance evaluation; owns everything
/// the backward pass needs.
struct PairwiseDistance {
    DistanceKind kind = DistanceKind::euclid;
    Matrix Q;  // B x d'
    Matrix K;  // M x d'
    Matrix D;  // B x M
    Vector q_norms;  // neg_cosine only
    Vector k_norms;
};

inline PairwiseDistance pairwise_distance(const Matrix& Q, const Matrix& K, DistanceKind kind) {
    check(Q.cols() == K.cols(), "pairwise_distance: embedding width mismatch (" +
                                    std::to_string(Q.cols()) + " vs " + std::to_string(K.cols()) +
                                    ")");
    PairwiseDistance pd;
    pd.kind = kind;
    pd.Q = Q;
    pd.K = K;
    const auto b = Q.rows();
    const auto m = K.rows();
    switch (kind) {
        case DistanceKind::squared_euclid:
        case DistanceKind::euclid: {
            const Vector qs = Q.rowwise().squaredNorm();
            const Vector ks = K.rowwise().squaredNorm();
            Matrix sq = (-2.0 * Q * K.transpose());
            sq.colwise() += qs;
            sq.rowwise() += ks.transpose();
            sq = sq.cwiseMax(0.0);
            if (kind == DistanceKind::squared_euclid) {
                pd.D = sq;
            } else {
                pd.D = (sq.array() + kDistanceEps).sqrt().matrix();
            }
            break;
        }
        case DistanceKind::l1: {
            pd.D.resize(b, m);
            for (Eigen::Index i = 0; i < b; ++i)
                for (Eigen::Index j = 0; j < m; ++j)
                    pd.D(i, j) = (Q.row(i) - K.row(j)).cwiseAbs().sum();
            break;
        }
        case DistanceKind::neg_dot: {
            pd.D = -(Q * K.transpose());
            break;
        }
        case DistanceKind::neg_cosine: {
            pd.q_norms = Q.rowwise().norm();
            pd.k_norms = K.rowwise().norm();
            pd.D.resize(b, m);
            const Matrix dots = Q * K.transpose();
            for (Eigen::Index i = 0; i < b; ++i) {
                for (Eigen::Index j = 0; j < m; ++j) {
                    const double nq = pd.q_norms[i], nk = pd.k_norms[j];
                    pd.D(i, j) = (nq < kCosineNormFloor || nk < kCosineNormFloor)
                                     ? 0.0
                                     : -dots(i, j) / (nq * nk);
                }
            }
            break;
        }
    }
    return pd;
}

struct DistanceGrads {
    Matrix dQ;
    Matrix dK;
};

inline DistanceGrads pairwise_distance_backward(const PairwiseDistance& pd, const Matrix& dD) {
    const auto b = pd.Q.rows();
    const auto m = pd.K.rows();
    check(dD.rows() == b && dD.cols() == m, "pairwise_distance_backward: shape mismatch");
    DistanceGrads g;
    g.dQ = Matrix::Zero(b, pd.Q.cols());
    g.dK = Matrix::Zero(m, pd.K.cols());
    switch (pd.kind) {
        case DistanceKind::squared_euclid:
        case DistanceKind::euclid: {
            // euclid: d sqrt(s + eps) / ds = 1 / (2 D)
            Matrix dS = dD;
            if (pd.kind == DistanceKind::euclid)
                dS = dD.cwiseQuotient(2.0 * pd.D.cwiseMax(std::sqrt(kDistanceEps)));
            const Vector row_sums = dS.rowwise().sum();
            const Vector col_sums = dS.colwise().sum();
            g.dQ = 2.0 * (row_sums.asDiagonal() * pd.Q - dS * pd.K);
            g.dK = 2.0 * (col_sums.asDiagonal() * pd.K - dS.transpose() * pd.Q);
            break;
        }
        case DistanceKind::l1: {
            for (Eigen::Index i = 0; i < b; ++i) {
                for (Eigen::Index j = 0; j < m; ++j) {
                    if (dD(i, j) == 0.0) continue;
                    const Eigen::ArrayXd diff = (pd.Q.row(i) - pd.K.row(j)).array();
                    const Eigen::ArrayXd s = diff.sign();
                    g.dQ.row(i).array() += dD(i, j) * s.transpose();
                    g.dK.row(j).array() -= dD(i, j) * s.transpose();
                }
            }
            break;
        }
        case DistanceKind::neg_dot: {
            g.dQ = -(dD * pd.K);
            g.dK = -(dD.transpose() * pd.Q);
            break;
        }
        case DistanceKind::neg_cosine: {
            for (Eigen::Index i = 0; i < b; ++i) {
                for (Eigen::Index j = 0; j < m; ++j) {
                    if (dD(i, j) == 0.0) continue;
                    const double nq = pd.q_norms[i], nk = pd.k_norms[j];
                    if (nq < kCosineNormFloor || nk < kCosineNormFloor) continue;  // flat region
                    const auto q = pd.Q.row(i);
                    const auto k = pd.K.row(j);
                    const double dot = q.dot(k);
                    g.dQ.row(i) += dD(i, j) * (-k / (nq * nk) + dot * q / (nq * nq * nq * nk));
                    g.dK.row(j) += dD(i, j) * (-q / (nq * nk) + dot * k / (nk * nk * nk * nq));
                }
            }
            break;
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Soft-NN weights
// ---------------------------------------------------------------------------

/// Similarity kernel turning distances into unnormalized neighbor mass.
/// `exp_neg` is exp(-d); `t_dist` is the heavy-tailed (1 + d^2/nu)^(-(nu+1)/2).
enum class KernelKind { exp_neg, t_dist };

/// Row-stochastic soft-NN weight matrix with self-exclusion mask and the
/// cached state needed to backpropagate to the distances.
struct NeighborhoodWeights {
    Matrix W;          // B x M, rows sum to 1, masked entries exactly 0
    BoolMatrix mask;   // true = excluded
    Matrix distances;  // cached for backward
    KernelKind kernel = KernelKind::exp_neg;
    double nu = 1.0;
    Matrix kernel_mass;     // t_dist only: unnormalized masses
    Vector kernel_row_sum;  // t_dist only
};

inline BoolMatrix no_mask(Eigen::Index b, Eigen::Index m) {
    return BoolMatrix::Constant(b, m, false);
}

/// mask[i][j] true iff candidate j is the same training row as query i.
inline BoolMatrix build_exclusion_mask(const std::vector<int>& query_global,
                                       const std::vector<int>& candidate_global) {
    BoolMatrix mask = no_mask(static_cast<Eigen::Index>(query_global.size()),
                              static_cast<Eigen::Index>(candidate_global.size()));
    for (std::size_t i = 0; i < query_global.size(); ++i)
        for (std::size_t j = 0; j < candidate_global.size(); ++j)
            if (query_global[i] == candidate_global[j]) mask(static_cast<Eigen::Index>(i),
                                                             static_cast<Eigen::Index>(j)) = true;
    return mask;
}

/// Neighborhood probabilities from a precomputed distance matrix. The
/// exponential path uses the max-subtraction log-sum-exp trick; masked
/// entries get exactly zero weight.
inline NeighborhoodWeights weights_from_distances(const Matrix& D, const BoolMatrix& mask,
                                                  KernelKind kernel = KernelKind::exp_neg,
                                                  double nu = 1.0) {
    check(D.rows() == mask.rows() && D.cols() == mask.cols(),
          "softnn_weights: mask shape mismatch");
    NeighborhoodWeights nw;
    nw.mask = mask;
    nw.distances = D;
    nw.kernel = kernel;
    nw.nu = nu;
    nw.W.setZero(D.rows(), D.cols());
    if (kernel == KernelKind::t_dist) {
        nw.kernel_mass.setZero(D.rows(), D.cols());
        nw.kernel_row_sum.setZero(D.rows());
    }
    for (Eigen::Index i = 0; i < D.rows(); ++i) {
        bool any = false;
        if (kernel == KernelKind::exp_neg) {
            double best = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < D.cols(); ++j)
                if (!mask(i, j)) {
                    best = std::min(best, D(i, j));
                    any = true;
                }
            check(any, "softnn_weights: fully-masked row " + std::to_string(i));
            double denom = 0.0;
            for (Eigen::Index j = 0; j < D.cols(); ++j)
                if (!mask(i, j)) {
                    nw.W(i, j) = std::exp(best - D(i, j));
                    denom += nw.W(i, j);
                }
            nw.W.row(i) /= denom;
        } else {
            check(nu > 0.0, "softnn_weights: t kernel needs nu > 0");
            double denom = 0.0;
            for (Eigen::Index j = 0; j < D.cols(); ++j)
                if (!mask(i, j)) {
                    const double d = D(i, j);
                    const double mass = std::pow(1.0 + d * d / nu, -(nu + 1.0) / 2.0);
                    nw.kernel_mass(i, j) = mass;
                    denom += mass;
                    any = true;
                }
            check(any, "softnn_weights: fully-masked row " + std::to_string(i));
            nw.kernel_row_sum[i] = denom;
            for (Eigen::Index j = 0; j < D.cols(); ++j)
                if (!mask(i, j)) nw.W(i, j) = nw.kernel_mass(i, j) / denom;
        }
    }
    return nw;
}

/// Chain rule from dL/dW back to dL/dD for the kernel used in the forward.
inline Matrix weights_backward(const NeighborhoodWeights& nw, const Matrix& dW) {
    check(dW.rows() == nw.W.rows() && dW.cols() == nw.W.cols(),
          "weights_backward: shape mismatch");
    Matrix dD = Matrix::Zero(nw.W.rows(), nw.W.cols());
    for (Eigen::Index i = 0; i < nw.W.rows(); ++i) {
        double inner = 0.0;
        for (Eigen::Index j = 0; j < nw.W.cols(); ++j) inner += dW(i, j) * nw.W(i, j);
        if (nw.kernel == KernelKind::exp_neg) {
            // W = softmax(-D): dD_j = -W_j (dW_j - sum_l dW_l W_l)
            for (Eigen::Index j = 0; j < nw.W.cols(); ++j)
                if (!nw.mask(i, j)) dD(i, j) = -nw.W(i, j) * (dW(i, j) - inner);
        } else {
            const double denom = nw.kernel_row_sum[i];
            for (Eigen::Index j = 0; j < nw.W.cols(); ++j) {
                if (nw.mask(i, j)) continue;
                const double du = (dW(i, j) - inner) / denom;
                const double d = nw.distances(i, j);
                const double base = 1.0 + d * d / nw.nu;
                const double dmass_dd =
                    -(nw.nu + 1.0) * d / nw.nu * std::pow(base, -(nw.nu + 3.0) / 2.0);
                dD(i, j) = du * dmass_dd;
            }
        }
    }
    return dD;
}

/// Eq.-4-style convenience wrapper: distances, then kernel weights, in one
/// call. Keeps the distance cache for the full backward chain.
struct SoftNN {
    PairwiseDistance dist;
    NeighborhoodWeights weights;
};

inline SoftNN softnn_weights(const Matrix& Q, const Matrix& K, DistanceKind kind,
                             const BoolMatrix& mask, KernelKind kernel = KernelKind::exp_neg,
                             double nu = 1.0) {
    SoftNN s;
    s.dist = pairwise_distance(Q, K, kind);
    s.weights = weights_from_distances(s.dist.D, mask, kernel, nu);
    return s;
}

inline DistanceGrads softnn_backward(const SoftNN& s, const Matrix& dW) {
    return pairwise_distance_backward(s.dist, weights_backward(s.weights, dW));
}

/// Weighted-average prediction: classification gives B x C probability rows
/// from one-hot candidate labels, regression gives the scalar convex
/// combination of candidate labels.
inline Matrix softnn_predict(const NeighborhoodWeights& nw, const Matrix& candidate_labels) {
    check(candidate_labels.rows() == nw.W.cols(),
          "softnn_predict: label count " + std::to_string(candidate_labels.rows()) +
          " != candidate count " + std::to_string(nw.W.cols()));
    return nw.W * candidate_labels;
}

inline Matrix one_hot_labels(const std::vector<int>& classes, int n_classes) {
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(classes.size()), n_classes);
    for (std::size_t i = 0; i < classes.size(); ++i) {
        check(classes[i] >= 0 && classes[i] < n_classes, "one_hot_labels: class out of range");
        out(static_cast<Eigen::Index>(i), classes[i]) = 1.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stochastic neighborhood sampling
// ---------------------------------------------------------------------------

/// ceil(ratio * N) distinct indices, uniform without replacement.
inline std::vector<int> sample_random(int train_size, double ratio, Rng& rng) {
    check(ratio > 0.0 && ratio <= 1.0, "sample_random: ratio must be in (0, 1]");
    check(train_size >= 1, "sample_random: empty training set");
    const int k = static_cast<int>(std::ceil(ratio * train_size));
    return rng.sample_without_replacement(train_size, std::min(k, train_size));
}

/// ceil(ratio * N_c) indices per class; every class stays represented.
inline std::vector<int> sample_classwise(const std::vector<int>& class_labels, double ratio,
                                         Rng& rng) {
    check(ratio > 0.0 && ratio <= 1.0, "sample_classwise: ratio must be in (0, 1]");
    check(!class_labels.empty(), "sample_classwise: empty training set");
    int n_classes = 0;
    for (int c : class_labels) n_classes = std::max(n_classes, c + 1);
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(n_classes));
    for (std::size_t i = 0; i < class_labels.size(); ++i)
        by_class[static_cast<std::size_t>(class_labels[i])].push_back(static_cast<int>(i));
    std::vector<int> out;
    for (const auto& members : by_class) {
        if (members.empty()) continue;
        const int k = std::min<int>(
            static_cast<int>(std::ceil(ratio * static_cast<double>(members.size()))),
            static_cast<int>(members.size()));
        const auto pick = rng.sample_without_replacement(static_cast<int>(members.size()), k);
        for (int p : pick) out.push_back(members[static_cast<std::size_t>(p)]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Per-query candidate sets drawn without replacement with unnormalized mass
/// (dist + eps)^(-tau) under the current embeddings; tau = 0 degrades to
/// uniform. Returns one ascending index list per query row.
inline std::vector<std::vector<int>> sample_distance_weighted(const Matrix& batch_emb,
                                                              const Matrix& train_emb,
                                                              double ratio, double tau, Rng& rng) {
    check(ratio > 0.0 && ratio <= 1.0, "sample_distance_weighted: ratio must be in (0, 1]");
    check(tau >= 0.0, "sample_distance_weighted: tau must be >= 0");
    const auto n = static_cast<int>(train_emb.rows());
    const int k = std::min(static_cast<int>(std::ceil(ratio * n)), n);
    const auto pd = pairwise_distance(batch_emb, train_emb, DistanceKind::euclid);
    std::vector<std::vector<int>> out(static_cast<std::size_t>(batch_emb.rows()));
    for (Eigen::Index i = 0; i < batch_emb.rows(); ++i) {
        if (k == n) {
            auto& dst = out[static_cast<std::size_t>(i)];
            dst.resize(static_cast<std::size_t>(n));
            std::iota(dst.begin(), dst.end(), 0);
            continue;
        }
        // Efraimidis-Spirakis: top-k by log(u)/w ~ weighted draw w/o replacement
        std::vector<std::pair<double, int>> keys(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) {
            const double w = tau == 0.0
                                 ? 1.0
                                 : std::pow(pd.D(i, j) + kDistanceEps, -tau);
            double u = rng.uniform();
            while (u <= 0.0) u = rng.uniform();
            keys[static_cast<std::size_t>(j)] = {std::log(u) / w, j};
        }
        std::partial_sort(keys.begin(), keys.begin() + k, keys.end(),
                          [](const auto& a, const auto& b) { return a.first > b.first; });
        auto& dst = out[static_cast<std::size_t>(i)];
        dst.reserve(static_cast<std::size_t>(k));
        for (int j = 0; j < k; ++j) dst.push_back(keys[static_cast<std::size_t>(j)].second);
        std::sort(dst.begin(), dst.end());
    }
    return out;
}

}  // namespace ncatab
