// Copyright (c) 2026 ncatab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ncatab/common.hpp"
#include "ncatab/neighborhood.hpp"

namespace ncatab {

enum class LossKind { log_softnn, mse_softnn, nca_sum_prob, mcml, t_distribution };

inline std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::log_softnn: return "log_softnn";
        case LossKind::mse_softnn: return "mse_softnn";
        case LossKind::nca_sum_prob: return "nca_sum_prob";
        case LossKind::mcml: return "mcml";
        case LossKind::t_distribution: return "t_distribution";
    }
    fail("unknown LossKind");
}

inline LossKind loss_from_string(const std::string& s) {
    if (s == "log_softnn") return LossKind::log_softnn;
    if (s == "mse_softnn") return LossKind::mse_softnn;
    if (s == "nca_sum_prob") return LossKind::nca_sum_prob;
    if (s == "mcml") return LossKind::mcml;
    if (s == "t_distribution") return LossKind::t_distribution;
    fail("unknown loss kind '" + s + "'");
}

// probability floor inside logs; keeps training alive when SNS leaves a
// query without same-class candidates
inline constexpr double kProbClamp = 1e-12;

struct LossResult {
    double value = 0.0;
    Matrix dW;
    int skipped = 0;  // mcml: queries with no same-class candidate
};

/// 0/1 indicator: entry (i, j) is 1 iff candidate j has query i's class.
inline Matrix same_class_matrix(const std::vector<int>& targets,
                                const std::vector<int>& candidate_classes) {
    Matrix sc = Matrix::Zero(static_cast<Eigen::Index>(targets.size()),
                             static_cast<Eigen::Index>(candidate_classes.size()));
    for (std::size_t i = 0; i < targets.size(); ++i)
        for (std::size_t j = 0; j < candidate_classes.size(); ++j)
            if (targets[i] == candidate_classes[j])
                sc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
    return sc;
}

/// Per-query candidate classes (one row of classes per query).
inline Matrix same_class_matrix(const std::vector<int>& targets,
                                const std::vector<std::vector<int>>& per_query_classes) {
    check(targets.size() == per_query_classes.size(), "same_class_matrix: row count mismatch");
    const auto m = static_cast<Eigen::Index>(per_query_classes.empty() ? 0 : per_query_classes[0].size());
    Matrix sc = Matrix::Zero(static_cast<Eigen::Index>(targets.size()), m);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        check(static_cast<Eigen::Index>(per_query_classes[i].size()) == m,
              "same_class_matrix: ragged candidate rows");
        for (Eigen::Index j = 0; j < m; ++j)
            if (targets[i] == per_query_classes[i][static_cast<std::size_t>(j)])
                sc(static_cast<Eigen::Index>(i), j) = 1.0;
    }
    return sc;
}

inline Matrix broadcast_values(const Vector& candidate_values, Eigen::Index batch) {
    Matrix v(batch, candidate_values.size());
    v.rowwise() = candidate_values.transpose();
    return v;
}

/// Mean over the batch of -log(sum of same-class weight), Eq. 1 + Eq. 3.
inline LossResult loss_log_softnn(const Matrix& W, const Matrix& same_class) {
    check(W.rows() == same_class.rows() && W.cols() == same_class.cols(),
          "loss_log_softnn: shape mismatch");
    const double b = static_cast<double>(W.rows());
    LossResult r;
    r.dW = Matrix::Zero(W.rows(), W.cols());
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
        const double p = (W.row(i).array() * same_class.row(i).array()).sum();
        if (p > kProbClamp) {
            r.value += -std::log(p);
            r.dW.row(i) = same_class.row(i) * (-1.0 / (p * b));
        } else {
            r.value += -std::log(kProbClamp);  // clamped: flat, zero gradient
        }
    }
    r.value /= b;
    return r;
}

/// Soft-NN squared error for regression. `candidate_values` holds each
/// query's candidate labels row-wise (use broadcast_values for a shared set).
inline LossResult loss_mse_softnn(const Matrix& W, const Matrix& candidate_values,
                                  const Vector& targets) {
    check(W.rows() == candidate_values.rows() && W.cols() == candidate_values.cols(),
          "loss_mse_softnn: shape mismatch");
    check(targets.size() == W.rows(), "loss_mse_softnn: target count mismatch");
    const double b = static_cast<double>(W.rows());
    LossResult r;
    r.dW = Matrix::Zero(W.rows(), W.cols());
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
        const double pred = W.row(i).dot(candidate_values.row(i));
        const double err = pred - targets[i];
        r.value += err * err;
        r.dW.row(i) = (2.0 * err / b) * candidate_values.row(i);
    }
    r.value /= b;
    return r;
}

/// The original NCA objective in affine form: mean of (1 - same-class mass).
/// Minimizing it is identical to maximizing the paper's sum of probabilities.
inline LossResult loss_nca_sum_prob(const Matrix& W, const Matrix& same_class) {
    check(W.rows() == same_class.rows() && W.cols() == same_class.cols(),
          "loss_nca_sum_prob: shape mismatch");
    const double b = static_cast<double>(W.rows());
    LossResult r;
    r.dW = Matrix::Zero(W.rows(), W.cols());
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
        const double p = (W.row(i).array() * same_class.row(i).array()).sum();
        r.value += 1.0 - p;
        r.dW.row(i) = same_class.row(i) * (-1.0 / b);
    }
    r.value /= b;
    return r;
}

/// KL(t || W) against a target distribution t that is uniform over the
/// unmasked same-class candidates. Queries with no same-class candidate are
/// skipped and counted.
inline LossResult loss_mcml(const Matrix& W, const Matrix& same_class, const BoolMatrix& mask) {
    check(W.rows() == same_class.rows() && W.cols() == same_class.cols(),
          "loss_mcml: shape mismatch");
    LossResult r;
    r.dW = Matrix::Zero(W.rows(), W.cols());
    std::vector<Eigen::Index> counted;
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
        int support = 0;
        for (Eigen::Index j = 0; j < W.cols(); ++j)
            if (same_class(i, j) > 0.0 && !mask(i, j)) ++support;
        if (support == 0) {
            ++r.skipped;
            continue;
        }
        counted.push_back(i);
    }
    if (counted.empty()) return r;
    const double b = static_cast<double>(counted.size());
    for (const Eigen::Index i : counted) {
        int support = 0;
        for (Eigen::Index j = 0; j < W.cols(); ++j)
            if (same_class(i, j) > 0.0 && !mask(i, j)) ++support;
        const double t = 1.0 / static_cast<double>(support);
        for (Eigen::Index j = 0; j < W.cols(); ++j) {
            if (same_class(i, j) <= 0.0 || mask(i, j)) continue;
            const double w = std::max(W(i, j), kProbClamp);
            r.value += t * (std::log(t) - std::log(w));
            r.dW(i, j) = -t / (w * b);
        }
    }
    r.value /= b;
    return r;
}

/// Heavy-tailed variant: t-distribution kernel weights, then the default
/// head (log soft-NN for classification). Returns the weights so callers can
/// chain weights_backward.
struct TKernelLoss {
    NeighborhoodWeights weights;
    LossResult head;
};

inline TKernelLoss loss_t_distribution_classification(const Matrix& distances,
                                                      const BoolMatrix& mask,
                                                      const Matrix& same_class, double nu = 1.0) {
    TKernelLoss out;
    out.weights = weights_from_distances(distances, mask, KernelKind::t_dist, nu);
    out.head = loss_log_softnn(out.weights.W, same_class);
    return out;
}

inline TKernelLoss loss_t_distribution_regression(const Matrix& distances, const BoolMatrix& mask,
                                                  const Matrix& candidate_values,
                                                  const Vector& targets, double nu = 1.0) {
    TKernelLoss out;
    out.weights = weights_from_distances(distances, mask, KernelKind::t_dist, nu);
    out.head = loss_mse_softnn(out.weights.W, candidate_values, targets);
    return out;
}

}  // namespace ncatab
