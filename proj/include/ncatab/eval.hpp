// Copyright (c) 2026 ncatab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ncatab/common.hpp"
#include "ncatab/data.hpp"

namespace ncatab {

enum class MetricDirection { higher_better, lower_better };

/// Per-(dataset, method) seed metrics.
struct MetricValue {
    std::string dataset_id;
    std::string method_id;
    std::vector<double> seed_values;
    MetricDirection direction = MetricDirection::higher_better;

    double mean() const {
        check(!seed_values.empty(), "MetricValue: no seed values");
        double s = 0.0;
        for (double v : seed_values) s += v;
        return s / static_cast<double>(seed_values.size());
    }
};

/// Classification: exact-match accuracy. Regression: RMSE in the units of
/// `truth` (callers inverse-transform predictions first).
inline double compute_metric(const std::vector<double>& predictions,
                             const std::vector<double>& truth, TaskKind task) {
    check(predictions.size() == truth.size(), "compute_metric: length mismatch");
    check(!predictions.empty(), "compute_metric: empty input");
    const double n = static_cast<double>(truth.size());
    if (task == TaskKind::classification) {
        double hits = 0.0;
        for (std::size_t i = 0; i < truth.size(); ++i)
            if (predictions[i] == truth[i]) hits += 1.0;
        return hits / n;
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double e = predictions[i] - truth[i];
        sq += e * e;
    }
    return std::sqrt(sq / n);
}

inline MetricDirection direction_for(TaskKind task) {
    return task == TaskKind::classification ? MetricDirection::higher_better
                                            : MetricDirection::lower_better;
}

inline bool metric_improves(double candidate, double incumbent, MetricDirection dir) {
    return dir == MetricDirection::higher_better ? candidate > incumbent : candidate < incumbent;
}

// ---------------------------------------------------------------------------
// Student-t CDF via the regularized incomplete beta function.
// ---------------------------------------------------------------------------

namespace detail {

inline double log_gamma(double x) { return std::lgamma(x); }

/// Continued fraction for the incomplete beta function (modified Lentz).
inline double betacf(double a, double b, double x) {
    constexpr int max_iter = 500;
    constexpr double eps = 1e-15;
    constexpr double fpmin = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) return h;
    }
    fail("betacf: continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b), relative accuracy ~1e-14.
inline double reg_incomplete_beta(double a, double b, double x) {
    check(a > 0 && b > 0, "reg_incomplete_beta: a, b must be positive");
    check(x >= 0.0 && x <= 1.0, "reg_incomplete_beta: x out of [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_front = detail::log_gamma(a + b) - detail::log_gamma(a) -
                            detail::log_gamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::betacf(a, b, x) / a;
    return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

/// P(T <= t) for Student's t with df degrees of freedom.
inline double student_t_cdf(double t, double df) {
    check(df > 0, "student_t_cdf: df must be positive");
    if (t == 0.0) return 0.5;
    const double x = df / (df + t * t);
    const double tail = 0.5 * reg_incomplete_beta(df / 2.0, 0.5, x);
    return t < 0 ? tail : 1.0 - tail;
}

// ---------------------------------------------------------------------------
// Welch t-test and the win/tie/lose protocol
// ---------------------------------------------------------------------------

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
    bool significant = false;
};

/// Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom.
/// Both samples having zero variance: equal means -> not significant,
/// different means -> significant (treated as p = 0).
inline WelchResult welch_ttest(const std::vector<double>& a, const std::vector<double>& b,
                               double alpha = 0.05) {
    check(a.size() >= 2 && b.size() >= 2, "welch_ttest: each sample needs >= 2 values");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    double ma = 0.0, mb = 0.0;
    for (double v : a) ma += v;
    for (double v : b) mb += v;
    ma /= na;
    mb /= nb;
    double va = 0.0, vb = 0.0;
    for (double v : a) va += (v - ma) * (v - ma);
    for (double v : b) vb += (v - mb) * (v - mb);
    va /= (na - 1.0);
    vb /= (nb - 1.0);

    const bool const_a = *std::max_element(a.begin(), a.end()) ==
                         *std::min_element(a.begin(), a.end());
    const bool const_b = *std::max_element(b.begin(), b.end()) ==
                         *std::min_element(b.begin(), b.end());
    if (const_a) {
        va = 0.0;
        ma = a[0];
    }
    if (const_b) {
        vb = 0.0;
        mb = b[0];
    }

    WelchResult r;
    const double sa = va / na;
    const double sb = vb / nb;
    if (sa + sb <= 0.0) {
        // degenerate: both samples constant
        if (ma == mb) {
            r.t = 0.0;
            r.df = na + nb - 2.0;
            r.p = 1.0;
            r.significant = false;
        } else {
            r.t = ma < mb ? -std::numeric_limits<double>::infinity()
                          : std::numeric_limits<double>::infinity();
            r.df = na + nb - 2.0;
            r.p = 0.0;
            r.significant = true;
        }
        return r;
    }
    r.t = (ma - mb) / std::sqrt(sa + sb);
    r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    r.p = 2.0 * student_t_cdf(-std::fabs(r.t), r.df);
    r.significant = r.p < alpha;
    return r;
}

enum class Comparison { win, tie, lose };

inline Comparison win_tie_lose(const MetricValue& ours, const MetricValue& theirs,
                               double alpha = 0.05) {
    check(ours.direction == theirs.direction, "win_tie_lose: direction mismatch");
    const auto tt = welch_ttest(ours.seed_values, theirs.seed_values, alpha);
    if (!tt.significant) return Comparison::tie;
    return metric_improves(ours.mean(), theirs.mean(), ours.direction) ? Comparison::win
                                                                       : Comparison::lose;
}

// ---------------------------------------------------------------------------
// Average rank across datasets
// ---------------------------------------------------------------------------

struct RankTable {
    std::vector<std::string> method_ids;
    std::vector<std::string> dataset_ids;
    Matrix ranks;  // methods x datasets, ties share the average of tied positions
    Vector average_rank;
};

/// `grid[m][d]` holds method m's MetricValue on dataset d; the grid must be
/// complete. Exactly equal means tie and share the averaged rank.
inline RankTable average_rank(const std::vector<std::vector<MetricValue>>& grid) {
    check(!grid.empty() && !grid[0].empty(), "average_rank: empty grid");
    const auto n_methods = grid.size();
    const auto n_datasets = grid[0].size();
    for (const auto& row : grid)
        check(row.size() == n_datasets, "average_rank: missing cell (ragged grid)");

    RankTable table;
    table.ranks.resize(static_cast<Eigen::Index>(n_methods), static_cast<Eigen::Index>(n_datasets));
    for (const auto& row : grid) table.method_ids.push_back(row[0].method_id);
    for (std::size_t d = 0; d < n_datasets; ++d) table.dataset_ids.push_back(grid[0][d].dataset_id);

    for (std::size_t d = 0; d < n_datasets; ++d) {
        const auto dir = grid[0][d].direction;
        std::vector<std::size_t> order(n_methods);
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> means(n_methods);
        for (std::size_t m = 0; m < n_methods; ++m) {
            check(grid[m][d].direction == dir, "average_rank: mixed directions on dataset " +
                                                   grid[0][d].dataset_id);
            means[m] = grid[m][d].mean();
        }
        std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
            if (means[i] != means[j])
                return dir == MetricDirection::higher_better ? means[i] > means[j]
                                                             : means[i] < means[j];
            return i < j;
        });
        std::size_t pos = 0;
        while (pos < n_methods) {
            std::size_t end = pos;
            while (end + 1 < n_methods && means[order[end + 1]] == means[order[pos]]) ++end;
            // positions pos..end (0-based) share the average 1-based rank
            const double shared = (static_cast<double>(pos) + static_cast<double>(end)) / 2.0 + 1.0;
            for (std::size_t k = pos; k <= end; ++k)
                table.ranks(static_cast<Eigen::Index>(order[k]), static_cast<Eigen::Index>(d)) = shared;
            pos = end + 1;
        }
    }
    table.average_rank = table.ranks.rowwise().mean();
    return table;
}

inline std::string rank_table_csv(const RankTable& t) {
    std::string out = "method";
    for (const auto& d : t.dataset_ids) out += "," + d;
    out += ",average_rank\n";
    for (Eigen::Index m = 0; m < t.ranks.rows(); ++m) {
        out += t.method_ids[static_cast<std::size_t>(m)];
        for (Eigen::Index d = 0; d < t.ranks.cols(); ++d) out += "," + format_double(t.ranks(m, d));
        out += "," + format_double(t.average_rank[m]) + "\n";
    }
    return out;
}

}  // namespace ncatab
