// Copyright (c) 2026 ncatab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ncatab/common.hpp"
#include "ncatab/data.hpp"
#include "ncatab/diffcore.hpp"
#include "ncatab/eval.hpp"
#include "ncatab/losses.hpp"
#include "ncatab/models.hpp"
#include "ncatab/neighborhood.hpp"
#include "ncatab/training.hpp"

namespace ncatab::verify {

struct CheckResult {
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string note;
};

// ---------------------------------------------------------------------------
// Naive oracles. These deliberately re-derive everything with scalar loops
// (no shared code with the library paths they check).
// ---------------------------------------------------------------------------
namespace oracle {

inline double sq_dist(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
    double s = 0.0;
    for (Eigen::Index t = 0; t < a.cols(); ++t) {
        const double d = a(i, t) - b(j, t);
        s += d * d;
    }
    return s;
}

inline double dist_of(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j,
                      bool squared) {
    const double s = sq_dist(a, i, b, j);
    return squared ? s : std::sqrt(s + 1e-12);
}

/// Leave-one-out neighborhood probabilities over one embedded set
/// (squared-Euclidean kernel, no log-sum-exp tricks).
inline Matrix loo_weights(const Matrix& emb) {
    const auto n = emb.rows();
    Matrix w = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double denom = 0.0;
        for (Eigen::Index l = 0; l < n; ++l) {
            if (l == i) continue;
            denom += std::exp(-sq_dist(emb, i, emb, l));
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            w(i, j) = std::exp(-sq_dist(emb, i, emb, j)) / denom;
        }
    }
    return w;
}

/// Class posterior per query (sum of same-class LOO weights).
inline Vector class_posterior(const Matrix& emb, const std::vector<int>& classes) {
    const Matrix w = loo_weights(emb);
    Vector p = Vector::Zero(emb.rows());
    for (Eigen::Index i = 0; i < emb.rows(); ++i)
        for (Eigen::Index j = 0; j < emb.rows(); ++j)
            if (j != i && classes[static_cast<std::size_t>(j)] == classes[static_cast<std::size_t>(i)])
                p[i] += w(i, j);
    return p;
}

/// Soft-NN weighted average over columns of `labels` (N x C or N x 1).
inline Matrix weighted_prediction(const Matrix& emb, const Matrix& labels) {
    const Matrix w = loo_weights(emb);
    return w * labels;
}

/// Full-candidate-set log soft-NN loss straight from embeddings.
inline double full_loss_classification(const Matrix& query_emb, const std::vector<int>& q_classes,
                                       const Matrix& cand_emb, const std::vector<int>& c_classes,
                                       const std::vector<int>& q_rows,
                                       const std::vector<int>& c_rows, bool squared) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < query_emb.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < cand_emb.rows(); ++j) {
            if (q_rows[static_cast<std::size_t>(i)] == c_rows[static_cast<std::size_t>(j)]) continue;
            best = std::min(best, dist_of(query_emb, i, cand_emb, j, squared));
        }
        double denom = 0.0, same = 0.0;
        for (Eigen::Index j = 0; j < cand_emb.rows(); ++j) {
            if (q_rows[static_cast<std::size_t>(i)] == c_rows[static_cast<std::size_t>(j)]) continue;
            const double mass = std::exp(best - dist_of(query_emb, i, cand_emb, j, squared));
            denom += mass;
            if (c_classes[static_cast<std::size_t>(j)] == q_classes[static_cast<std::size_t>(i)])
                same += mass;
        }
        double p = same / denom;
        if (p < 1e-12) p = 1e-12;
        total += -std::log(p);
    }
    return total / static_cast<double>(query_emb.rows());
}

inline double full_loss_regression(const Matrix& query_emb, const Vector& q_targets,
                                   const Matrix& cand_emb, const Vector& c_values,
                                   const std::vector<int>& q_rows, const std::vector<int>& c_rows,
                                   bool squared) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < query_emb.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < cand_emb.rows(); ++j) {
            if (q_rows[static_cast<std::size_t>(i)] == c_rows[static_cast<std::size_t>(j)]) continue;
            best = std::min(best, dist_of(query_emb, i, cand_emb, j, squared));
        }
        double denom = 0.0, acc = 0.0;
        for (Eigen::Index j = 0; j < cand_emb.rows(); ++j) {
            if (q_rows[static_cast<std::size_t>(i)] == c_rows[static_cast<std::size_t>(j)]) continue;
            const double mass = std::exp(best - dist_of(query_emb, i, cand_emb, j, squared));
            denom += mass;
            acc += mass * c_values[j];
        }
        const double err = acc / denom - q_targets[i];
        total += err * err;
    }
    return total / static_cast<double>(query_emb.rows());
}

}  // namespace oracle

// ---------------------------------------------------------------------------
// Individual checks
// ---------------------------------------------------------------------------
namespace detail {

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    return m;
}

inline CheckResult make_result(const std::string& name, double measured, double tolerance,
                               const std::string& note = "") {
    return CheckResult{name, measured, tolerance, measured <= tolerance, note};
}

}  // namespace detail

/// Linear layer + MSE head against central finite differences.
inline CheckResult check_linear_mse_grad(bool inject_fault = false) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(derive_seed(900, seed));
        const Eigen::Index b = seed % 2 == 0 ? 2 : 8;
        const Eigen::Index in = 1 + static_cast<Eigen::Index>(rng.uniform_int(5));
        const Eigen::Index out = 1 + static_cast<Eigen::Index>(rng.uniform_int(5));
        ParamStore ps(seed + 17);
        Linear lin(ps, "lin", in, out);
        Matrix x = detail::random_matrix(rng, b, in);
        const Matrix target = detail::random_matrix(rng, b, out);
        auto loss_fn = [&]() {
            Matrix y = lin.forward(x, Mode::train);
            lin.discard_contexts();
            return (y - target).squaredNorm() / static_cast<double>(b);
        };
        Matrix y = lin.forward(x, Mode::train);
        const Matrix dy = 2.0 * (y - target) / static_cast<double>(b);
        lin.backward(dy);
        if (inject_fault) lin.weight().grad.array() += 0.5;
        worst = std::max(worst, grad_check(loss_fn, ps).max_rel_err);
    }
    return detail::make_result("grad/linear_mse", worst, 1e-6);
}

/// The gradient checker must reject a sign-flipped backward pass.
inline CheckResult check_grad_checker_sensitivity() {
    Rng rng(4242);
    ParamStore ps(7);
    Linear lin(ps, "lin", 3, 2);
    Matrix x = detail::random_matrix(rng, 4, 3);
    auto loss_fn = [&]() {
        Matrix y = lin.forward(x, Mode::train);
        lin.discard_contexts();
        return y.squaredNorm();
    };
    Matrix y = lin.forward(x, Mode::train);
    lin.backward(-2.0 * y);  // deliberate sign flip
    const double err = grad_check(loss_fn, ps).max_rel_err;
    CheckResult r;
    r.name = "grad/checker_sensitivity";
    r.measured = err;
    r.tolerance = 0.1;  // must EXCEED this
    r.pass = err > 0.1;
    r.note = "corrupted backward must be detected";
    return r;
}

/// Per-layer finite-difference checks (params and inputs) over 20 random
/// instances with B in {2, 8} and widths <= 6.
inline CheckResult check_layer_grads() {
    double worst = 0.0;
    std::string worst_note;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(derive_seed(901, seed));
        const Eigen::Index b = seed % 2 == 0 ? 2 : 8;
        const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.uniform_int(5));

        auto track = [&](double err, const std::string& what) {
            if (err > worst) {
                worst = err;
                worst_note = what;
            }
        };

        {  // batchnorm, train mode
            ParamStore ps(seed);
            BatchNorm1d bn(ps, "bn", d);
            Matrix x = detail::random_matrix(rng, std::max<Eigen::Index>(b, 2), d);
            const Matrix r = detail::random_matrix(rng, x.rows(), d);
            auto loss_fn = [&]() {
                Matrix y = bn.forward(x, Mode::train);
                bn.discard_contexts();
                return y.cwiseProduct(r).sum() + 0.5 * y.squaredNorm();
            };
            Matrix y = bn.forward(x, Mode::train);
            const Matrix dx = bn.backward(r + y);
            track(grad_check(loss_fn, ps).max_rel_err, "batchnorm params");
            track(grad_check_matrix(loss_fn, x, dx), "batchnorm input");
        }
        {  // layernorm
            ParamStore ps(seed);
            LayerNorm ln(ps, "ln", d);
            Matrix x = detail::random_matrix(rng, b, d);
            const Matrix r = detail::random_matrix(rng, b, d);
            auto loss_fn = [&]() {
                Matrix y = ln.forward(x, Mode::train);
                ln.discard_contexts();
                return y.cwiseProduct(r).sum() + 0.5 * y.squaredNorm();
            };
            Matrix y = ln.forward(x, Mode::train);
            const Matrix dx = ln.backward(r + y);
            track(grad_check(loss_fn, ps).max_rel_err, "layernorm params");
            track(grad_check_matrix(loss_fn, x, dx), "layernorm input");
        }
        {  // relu input gradient away from the kink
            Relu relu;
            Matrix x = detail::random_matrix(rng, b, d);
            for (Eigen::Index i = 0; i < x.size(); ++i)
                if (std::fabs(x.data()[i]) < 1e-3) x.data()[i] = 0.1;
            const Matrix r = detail::random_matrix(rng, b, d);
            auto loss_fn = [&]() {
                Matrix y = relu.forward(x, Mode::train);
                relu.discard_contexts();
                return y.cwiseProduct(r).sum();
            };
            relu.forward(x, Mode::train);
            const Matrix dx = relu.backward(r);
            track(grad_check_matrix(loss_fn, x, dx), "relu input");
        }
        {  // dropout in eval mode is the identity
            Dropout drop(0.4);
            Rng drop_rng(1);
            Matrix x = detail::random_matrix(rng, b, d);
            const Matrix r = detail::random_matrix(rng, b, d);
            auto loss_fn = [&]() { return drop.forward(x, Mode::eval, drop_rng).cwiseProduct(r).sum(); };
            // analytic gradient of the eval path is r itself
            track(grad_check_matrix(loss_fn, x, r), "dropout eval input");
        }
        {  // PLR encoder: frequencies, shared linear, and input
            ParamStore ps(seed);
            const Eigen::Index d_num = 1 + static_cast<Eigen::Index>(rng.uniform_int(3));
            PlrEncoder plr(ps, "plr", d_num, /*m=*/3, /*k_out=*/4, /*sigma=*/0.4);
            Matrix x = detail::random_matrix(rng, b, d_num);
            const Matrix r = detail::random_matrix(rng, b, plr.out_width());
            auto loss_fn = [&]() {
                Matrix y = plr.forward(x, Mode::train);
                plr.discard_contexts();
                return y.cwiseProduct(r).sum() + 0.5 * y.squaredNorm();
            };
            Matrix y = plr.forward(x, Mode::train);
            const Matrix dx = plr.backward(r + y);
            track(grad_check(loss_fn, ps).max_rel_err, "plr params");
            track(grad_check_matrix(loss_fn, x, dx), "plr input");
        }
    }
    return detail::make_result("grad/layers", worst, 1e-4, worst_note);
}

/// End-to-end gradient of the full soft-NN loss through the embedding
/// network, for one loss head / distance-kind combination.
inline CheckResult check_full_model_grad(LossKind loss, DistanceKind distance,
                                         KernelKind kernel = KernelKind::exp_neg) {
    double worst = 0.0;
    const bool has_log = loss == LossKind::log_softnn || loss == LossKind::mcml ||
                         loss == LossKind::t_distribution;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Eigen::Index b = seed % 2 == 0 ? 2 : 8;

        // Random instances, but well-posed ones: a query whose same-class
        // probability is ~1e-3 puts 1/p^3 ~ 1e9 into the third derivative and
        // drowns any finite-difference stencil in truncation error. Resample
        // (deterministically) until the instance is far from the log clamp
        // and from coincident embeddings.
        for (std::uint64_t attempt = 0;; ++attempt) {
            check(attempt < 200, "check_full_model_grad: no well-posed instance found");
            Rng rng(derive_seed(902 + static_cast<std::uint64_t>(loss),
                                (seed * 211 + attempt) * 7 + static_cast<std::uint64_t>(distance)));
            const Eigen::Index m_cand = 4 + static_cast<Eigen::Index>(rng.uniform_int(4));
            const Eigen::Index d_num = 2 + static_cast<Eigen::Index>(rng.uniform_int(3));

            ArchConfig arch;
            arch.variant = Variant::modern_nca;
            arch.d_prime = 3;
            arch.n_blocks = 1;
            arch.hidden_width = 4;
            arch.dropout_rate = 0.0;  // dropout-eval path; keeps re-evaluation pure
            arch.use_plr = true;
            arch.plr = PlrConfig{2, 3, 0.3};
            arch.final_batchnorm = true;
            Model model(arch, d_num, 0, seed + 5);

            Matrix q_num = detail::random_matrix(rng, b, d_num);
            Matrix c_num = detail::random_matrix(rng, m_cand, d_num);
            const Matrix empty_q(b, 0), empty_c(m_cand, 0);

            std::vector<int> q_rows(static_cast<std::size_t>(b)),
                c_rows(static_cast<std::size_t>(m_cand));
            for (Eigen::Index i = 0; i < b; ++i)
                q_rows[static_cast<std::size_t>(i)] = static_cast<int>(i);
            for (Eigen::Index j = 0; j < m_cand; ++j)
                c_rows[static_cast<std::size_t>(j)] = static_cast<int>(j);
            const BoolMatrix mask = build_exclusion_mask(q_rows, c_rows);

            std::vector<int> q_classes(static_cast<std::size_t>(b)),
                c_classes(static_cast<std::size_t>(m_cand));
            for (auto& c : q_classes) c = static_cast<int>(rng.uniform_int(2));
            for (auto& c : c_classes) c = static_cast<int>(rng.uniform_int(2));
            Vector q_targets(b), c_values(m_cand);
            for (Eigen::Index i = 0; i < b; ++i) q_targets[i] = rng.normal();
            for (Eigen::Index j = 0; j < m_cand; ++j) c_values[j] = rng.normal();
            const Matrix same_class = same_class_matrix(q_classes, c_classes);
            const Matrix cand_values = broadcast_values(c_values, b);

            {  // conditioning probe (no gradients kept)
                const Matrix emb_q = model.embed(q_num, empty_q, Mode::train);
                const Matrix emb_c = model.embed(c_num, empty_c, Mode::train);
                model.discard_contexts();
                const auto soft = softnn_weights(emb_q, emb_c, distance, mask, kernel, 1.0);
                double min_p = 1.0, min_sq = std::numeric_limits<double>::infinity();
                for (Eigen::Index i = 0; i < b; ++i) {
                    if (has_log || loss == LossKind::nca_sum_prob)
                        min_p = std::min(min_p, (soft.weights.W.row(i).array() *
                                                 same_class.row(i).array()).sum());
                    for (Eigen::Index j = 0; j < m_cand; ++j)
                        if (!mask(i, j))
                            min_sq = std::min(min_sq,
                                              (emb_q.row(i) - emb_c.row(j)).squaredNorm());
                }
                if ((has_log && min_p < 0.05) || min_sq < 0.05) continue;
                if (distance == DistanceKind::neg_cosine) {
                    // the documented zero-vector rule makes cosine
                    // discontinuous at ||v|| = 0; stay away from it
                    double min_norm = std::min(emb_q.rowwise().norm().minCoeff(),
                                               emb_c.rowwise().norm().minCoeff());
                    if (min_norm < 0.05) continue;
                }
            }

            auto eval_loss = [&](bool keep_ctx) {
                const Matrix emb_q = model.embed(q_num, empty_q, Mode::train);
                const Matrix emb_c = model.embed(c_num, empty_c, Mode::train);
                const auto soft = softnn_weights(emb_q, emb_c, distance, mask, kernel, 1.0);
                LossResult r;
                switch (loss) {
                    case LossKind::log_softnn:
                        r = loss_log_softnn(soft.weights.W, same_class);
                        break;
                    case LossKind::mse_softnn:
                        r = loss_mse_softnn(soft.weights.W, cand_values, q_targets);
                        break;
                    case LossKind::nca_sum_prob:
                        r = loss_nca_sum_prob(soft.weights.W, same_class);
                        break;
                    case LossKind::mcml: r = loss_mcml(soft.weights.W, same_class, mask); break;
                    case LossKind::t_distribution:
                        r = loss_log_softnn(soft.weights.W, same_class);
                        break;
                }
                if (keep_ctx) {
                    const auto grads = softnn_backward(soft, r.dW);
                    model.backward(grads.dK);
                    model.backward(grads.dQ);
                } else {
                    model.discard_contexts();
                }
                return r.value;
            };
            eval_loss(/*keep_ctx=*/true);
            auto loss_fn = [&]() { return eval_loss(false); };
            worst = std::max(worst, grad_check(loss_fn, model.params()).max_rel_err);
            break;
        }
    }
    std::string name = "grad/full_" + to_string(loss) + "_" + to_string(distance);
    if (kernel == KernelKind::t_dist) name += "_tkernel";
    return detail::make_result(name, worst, 1e-4);
}

/// softnn_weights + softnn_predict with squared_euclid on a linear phi vs
/// the naive leave-one-out double-loop oracle (N <= 20).
inline CheckResult check_eq2_eq4_oracle() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(derive_seed(903, seed));
        const Eigen::Index n = 5 + static_cast<Eigen::Index>(rng.uniform_int(16));  // <= 20
        const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.uniform_int(4));
        const Eigen::Index d_prime = 2 + static_cast<Eigen::Index>(rng.uniform_int(3));
        const int n_classes = 2 + static_cast<int>(rng.uniform_int(2));

        const Matrix x = detail::random_matrix(rng, n, d, 0.7);
        const Matrix proj = detail::random_matrix(rng, d, d_prime, 0.5);
        std::vector<int> classes(static_cast<std::size_t>(n));
        for (auto& c : classes) c = static_cast<int>(rng.uniform_int(n_classes));
        Vector values(n);
        for (Eigen::Index i = 0; i < n; ++i) values[i] = rng.normal();

        // phi = zero-bias linear map, applied identically on both routes
        const Matrix emb = x * proj;

        std::vector<int> rows(static_cast<std::size_t>(n));
        std::iota(rows.begin(), rows.end(), 0);
        const auto soft = softnn_weights(emb, emb, DistanceKind::squared_euclid,
                                         build_exclusion_mask(rows, rows));

        const Matrix w_oracle = oracle::loo_weights(emb);
        worst = std::max(worst, (soft.weights.W - w_oracle).cwiseAbs().maxCoeff());

        const Matrix onehot = one_hot_labels(classes, n_classes);
        const Matrix posterior = softnn_predict(soft.weights, onehot);
        const Matrix posterior_oracle = oracle::weighted_prediction(emb, onehot);
        worst = std::max(worst, (posterior - posterior_oracle).cwiseAbs().maxCoeff());

        const Vector p_oracle = oracle::class_posterior(emb, classes);
        for (Eigen::Index i = 0; i < n; ++i)
            worst = std::max(worst, std::fabs(posterior(i, classes[static_cast<std::size_t>(i)]) -
                                              p_oracle[i]));

        const Matrix reg = softnn_predict(soft.weights, values);
        const Matrix reg_oracle = oracle::weighted_prediction(emb, values);
        worst = std::max(worst, (reg - reg_oracle).cwiseAbs().maxCoeff());
    }
    return detail::make_result("oracle/eq2_eq4_equivalence", worst, 1e-10);
}

namespace detail {

inline Dataset synthetic_classification(Rng& rng, int n, int d, int n_classes) {
    Dataset ds;
    ds.task = TaskKind::classification;
    ds.n_classes = n_classes;
    ds.numerical = random_matrix(rng, n, d);
    ds.categorical_onehot.resize(n, 0);
    ds.labels.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
        ds.labels[i] = static_cast<double>(rng.uniform_int(n_classes));
    ColumnSchema label{"y", ColumnKind::label, {}};
    for (int c = 0; c < n_classes; ++c) label.categories.push_back("c" + std::to_string(c));
    for (int j = 0; j < d; ++j) ds.schema.push_back({"x" + std::to_string(j), ColumnKind::numerical, {}});
    ds.schema.push_back(label);
    return ds;
}

inline Dataset synthetic_regression(Rng& rng, int n, int d) {
    Dataset ds;
    ds.task = TaskKind::regression;
    ds.numerical = random_matrix(rng, n, d);
    ds.categorical_onehot.resize(n, 0);
    ds.labels.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) ds.labels[i] = rng.normal();
    for (int j = 0; j < d; ++j) ds.schema.push_back({"x" + std::to_string(j), ColumnKind::numerical, {}});
    ds.schema.push_back({"y", ColumnKind::label, {}});
    return ds;
}

}  // namespace detail

/// Training loss with sns_ratio = 1.0 vs the naive full-candidate-set
/// oracle, per batch, dropout disabled.
inline CheckResult check_sns_reduction(TaskKind task) {
    Rng rng(derive_seed(904, static_cast<std::uint64_t>(task)));
    Dataset data = task == TaskKind::classification
                       ? detail::synthetic_classification(rng, 40, 4, 3)
                       : detail::synthetic_regression(rng, 40, 4);
    Dataset val = task == TaskKind::classification
                      ? detail::synthetic_classification(rng, 10, 4, 3)
                      : detail::synthetic_regression(rng, 10, 4);

    TrainConfig cfg;
    cfg.arch.variant = Variant::modern_nca;
    cfg.arch.d_prime = 4;
    cfg.arch.n_blocks = 1;
    cfg.arch.dropout_rate = 0.0;
    cfg.arch.use_plr = true;
    cfg.arch.plr = PlrConfig{3, 4, 0.2};
    cfg.loss = task == TaskKind::classification ? LossKind::log_softnn : LossKind::mse_softnn;
    cfg.distance = DistanceKind::euclid;
    cfg.sns_ratio = 1.0;
    cfg.batch_size = 16;
    cfg.max_epochs = 2;
    cfg.patience = 16;
    cfg.seed = 11;

    std::vector<int> all_classes;
    if (task == TaskKind::classification) all_classes = data.class_labels();

    double worst = 0.0;
    int batches_seen = 0;
    auto observer = [&](const BatchTrace& trace) {
        std::vector<int> q_classes, c_classes;
        Vector q_targets(static_cast<Eigen::Index>(trace.query_rows.size()));
        Vector c_values(static_cast<Eigen::Index>(trace.cand_rows.size()));
        for (std::size_t i = 0; i < trace.query_rows.size(); ++i) {
            if (task == TaskKind::classification)
                q_classes.push_back(all_classes[static_cast<std::size_t>(trace.query_rows[i])]);
            q_targets[static_cast<Eigen::Index>(i)] = data.labels[trace.query_rows[i]];
        }
        for (std::size_t j = 0; j < trace.cand_rows.size(); ++j) {
            if (task == TaskKind::classification)
                c_classes.push_back(all_classes[static_cast<std::size_t>(trace.cand_rows[j])]);
            c_values[static_cast<Eigen::Index>(j)] = data.labels[trace.cand_rows[j]];
        }
        const double oracle_loss =
            task == TaskKind::classification
                ? oracle::full_loss_classification(trace.query_emb, q_classes, trace.cand_emb,
                                                   c_classes, trace.query_rows, trace.cand_rows,
                                                   /*squared=*/false)
                : oracle::full_loss_regression(trace.query_emb, q_targets, trace.cand_emb,
                                               c_values, trace.query_rows, trace.cand_rows,
                                               /*squared=*/false);
        worst = std::max(worst, std::fabs(trace.loss - oracle_loss));
        ++batches_seen;
    };
    train(cfg, data, val, LabelTransform{}, observer);
    CheckResult r = detail::make_result(
        task == TaskKind::classification ? "oracle/sns_reduction_classification"
                                         : "oracle/sns_reduction_regression",
        worst, 1e-10);
    r.note = std::to_string(batches_seen) + " batches";
    if (batches_seen == 0) r.pass = false;
    return r;
}

/// 10^4 randomized soft-NN trials: row-stochastic weights, valid probability
/// rows, and regression outputs inside the candidate label range.
inline CheckResult check_normalization_invariants() {
    Rng rng(905);
    double worst_row_sum = 0.0;
    double worst_prob = 0.0;
    double worst_range = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
        const Eigen::Index b = 1 + static_cast<Eigen::Index>(rng.uniform_int(4));
        const Eigen::Index m = 2 + static_cast<Eigen::Index>(rng.uniform_int(6));
        const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.uniform_int(4));
        const auto kind = static_cast<DistanceKind>(rng.uniform_int(5));
        const auto kernel = trial % 3 == 0 ? KernelKind::t_dist : KernelKind::exp_neg;
        const Matrix q = detail::random_matrix(rng, b, d, 3.0);
        const Matrix k = detail::random_matrix(rng, m, d, 3.0);
        BoolMatrix mask = no_mask(b, m);
        for (Eigen::Index i = 0; i < b; ++i)  // random partial mask, never full
            for (Eigen::Index j = 0; j + 1 < m; ++j) mask(i, j) = rng.uniform() < 0.2;
        const auto soft = softnn_weights(q, k, kind, mask, kernel, 1.0);
        for (Eigen::Index i = 0; i < b; ++i)
            worst_row_sum = std::max(worst_row_sum, std::fabs(soft.weights.W.row(i).sum() - 1.0));

        const int n_classes = 2 + static_cast<int>(rng.uniform_int(3));
        std::vector<int> classes(static_cast<std::size_t>(m));
        for (auto& c : classes) c = static_cast<int>(rng.uniform_int(n_classes));
        const Matrix probs = softnn_predict(soft.weights, one_hot_labels(classes, n_classes));
        for (Eigen::Index i = 0; i < b; ++i) {
            worst_prob = std::max(worst_prob, std::fabs(probs.row(i).sum() - 1.0));
            worst_prob = std::max(worst_prob, std::max(0.0, -probs.row(i).minCoeff()));
        }

        Vector values(m);
        for (Eigen::Index j = 0; j < m; ++j) values[j] = rng.normal(0.0, 2.0);
        const Matrix pred = softnn_predict(soft.weights, values);
        for (Eigen::Index i = 0; i < b; ++i) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (Eigen::Index j = 0; j < m; ++j)
                if (!mask(i, j)) {
                    lo = std::min(lo, values[j]);
                    hi = std::max(hi, values[j]);
                }
            worst_range = std::max(worst_range, std::max(lo - pred(i, 0), pred(i, 0) - hi));
        }
    }
    const double worst = std::max({worst_row_sum, worst_prob, worst_range});
    CheckResult r = detail::make_result("softnn/normalization_10k", worst, 1e-9);
    r.note = "row-sum " + format_double(worst_row_sum) + ", prob " + format_double(worst_prob) +
             ", range " + format_double(worst_range);
    return r;
}

/// Adding a constant to every distance in a row must not move the weights.
inline CheckResult check_shift_stability() {
    Rng rng(906);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Index b = 1 + static_cast<Eigen::Index>(rng.uniform_int(3));
        const Eigen::Index m = 2 + static_cast<Eigen::Index>(rng.uniform_int(6));
        Matrix d = detail::random_matrix(rng, b, m, 2.0).cwiseAbs();
        const BoolMatrix mask = no_mask(b, m);
        const auto w0 = weights_from_distances(d, mask);
        Matrix shifted = d;
        for (Eigen::Index i = 0; i < b; ++i) shifted.row(i).array() += rng.uniform(-50.0, 50.0);
        const auto w1 = weights_from_distances(shifted, mask);
        worst = std::max(worst, (w0.W - w1.W).cwiseAbs().maxCoeff());
    }
    return detail::make_result("softnn/shift_stability", worst, 1e-12);
}

/// Same (dataset, seed) twice: identical split; same config twice: identical
/// history and bit-identical parameters.
inline CheckResult check_determinism() {
    Rng rng(907);
    const auto s1 = split_indices(101, 42);
    const auto s2 = split_indices(101, 42);
    bool ok = s1.train == s2.train && s1.val == s2.val && s1.test == s2.test;
    const auto s3 = split_indices(101, 43);
    ok = ok && s3.train != s1.train;  // different seed should move something

    Dataset data = detail::synthetic_classification(rng, 30, 3, 2);
    Dataset val = detail::synthetic_classification(rng, 10, 3, 2);
    TrainConfig cfg;
    cfg.arch.variant = Variant::modern_nca;
    cfg.arch.d_prime = 4;
    cfg.arch.n_blocks = 1;
    cfg.arch.dropout_rate = 0.2;
    cfg.arch.use_plr = true;
    cfg.arch.plr = PlrConfig{2, 3, 0.2};
    cfg.loss = LossKind::log_softnn;
    cfg.sns_ratio = 0.5;
    cfg.batch_size = 8;
    cfg.max_epochs = 3;
    cfg.seed = 5;
    auto a = train(cfg, data, val);
    auto b = train(cfg, data, val);
    ok = ok && a.history.train_loss == b.history.train_loss &&
         a.history.val_metric == b.history.val_metric &&
         a.history.best_epoch == b.history.best_epoch;
    const auto ta = a.model->params().tensors();
    const auto tb = b.model->params().tensors();
    ok = ok && ta.size() == tb.size();
    for (std::size_t i = 0; ok && i < ta.size(); ++i)
        ok = ta[i]->value == tb[i]->value;
    CheckResult r;
    r.name = "determinism/split_init_train";
    r.measured = ok ? 0.0 : 1.0;
    r.tolerance = 0.0;
    r.pass = ok;
    return r;
}

/// Welch example from an independently verified statistic, the literal
/// sample pair against its true oracle values, rank permutation sums, and
/// win/tie/lose antisymmetry.
inline std::vector<CheckResult> check_eval_protocol() {
    std::vector<CheckResult> out;
    {
        // samples engineered to produce t = -2.828..., df = 8, p = 0.022204
        const std::vector<double> a{1.5, 2.5, 3.0, 3.5, 4.5};
        const std::vector<double> b{3.5, 4.5, 5.0, 5.5, 6.5};
        const auto r = welch_ttest(a, b);
        const double err = std::max({std::fabs(r.t - (-2.8284271247461903)),
                                     std::fabs(r.df - 8.0),
                                     std::fabs(r.p - 0.022203904140)});
        CheckResult c = detail::make_result("eval/welch_example", err, 1e-3);
        c.note = "t=" + format_double(r.t) + " df=" + format_double(r.df) +
                 " p=" + format_double(r.p) + (r.significant ? " significant" : " NOT significant");
        c.pass = c.pass && r.significant;
        out.push_back(c);
    }
    {
        const std::vector<double> a{1, 2, 3, 4, 5};
        const std::vector<double> b{3, 4, 5, 6, 7};
        const auto r = welch_ttest(a, b);
        const double err =
            std::max({std::fabs(r.t - (-2.0)), std::fabs(r.df - 8.0),
                      std::fabs(r.p - 0.0805162380)});
        CheckResult c = detail::make_result("eval/welch_uniform_pair", err, 1e-3);
        c.pass = c.pass && !r.significant;
        c.note = "p=" + format_double(r.p);
        out.push_back(c);
    }
    {
        Rng rng(908);
        double worst = 0.0;
        for (int g = 0; g < 100; ++g) {
            const int methods = 2 + static_cast<int>(rng.uniform_int(5));
            const int datasets = 1 + static_cast<int>(rng.uniform_int(5));
            std::vector<std::vector<MetricValue>> grid(static_cast<std::size_t>(methods));
            for (int m = 0; m < methods; ++m)
                for (int d = 0; d < datasets; ++d) {
                    MetricValue mv;
                    mv.method_id = "m" + std::to_string(m);
                    mv.dataset_id = "d" + std::to_string(d);
                    mv.direction = d % 2 == 0 ? MetricDirection::higher_better
                                              : MetricDirection::lower_better;
                    // occasional exact ties
                    const double v = rng.uniform() < 0.3 ? 0.5 : rng.uniform();
                    mv.seed_values = {v};
                    grid[static_cast<std::size_t>(m)].push_back(mv);
                }
            const auto table = average_rank(grid);
            const double expect = static_cast<double>(methods) * (methods + 1) / 2.0;
            for (Eigen::Index d = 0; d < table.ranks.cols(); ++d)
                worst = std::max(worst, std::fabs(table.ranks.col(d).sum() - expect));
        }
        out.push_back(detail::make_result("eval/rank_permutation_100", worst, 1e-9));
    }
    {
        Rng rng(909);
        bool ok = true;
        for (int t = 0; t < 1000 && ok; ++t) {
            const int n = 3 + static_cast<int>(rng.uniform_int(13));
            MetricValue a, b;
            a.direction = b.direction = t % 2 == 0 ? MetricDirection::higher_better
                                                   : MetricDirection::lower_better;
            for (int i = 0; i < n; ++i) {
                const double base = rng.uniform();
                a.seed_values.push_back(base + (rng.uniform() < 0.5 ? 0.0 : rng.normal(0, 0.1)));
                b.seed_values.push_back(rng.uniform());
            }
            const auto ab = win_tie_lose(a, b);
            const auto ba = win_tie_lose(b, a);
            ok = (ab == Comparison::tie && ba == Comparison::tie) ||
                 (ab == Comparison::win && ba == Comparison::lose) ||
                 (ab == Comparison::lose && ba == Comparison::win);
        }
        CheckResult c;
        c.name = "eval/wtl_antisymmetry_1000";
        c.measured = ok ? 0.0 : 1.0;
        c.tolerance = 0.0;
        c.pass = ok;
        out.push_back(c);
    }
    return out;
}

/// The affine NCA objective must rank parameter settings exactly like the
/// paper's maximization form.
inline CheckResult check_argmin_equivalence() {
    Rng rng(910);
    bool ok = true;
    for (int t = 0; t < 500 && ok; ++t) {
        const Eigen::Index b = 2 + static_cast<Eigen::Index>(rng.uniform_int(4));
        const Eigen::Index m = 3 + static_cast<Eigen::Index>(rng.uniform_int(5));
        auto random_weights = [&]() {
            Matrix w(b, m);
            for (Eigen::Index i = 0; i < b; ++i) {
                double s = 0.0;
                for (Eigen::Index j = 0; j < m; ++j) {
                    w(i, j) = rng.uniform() + 1e-3;
                    s += w(i, j);
                }
                w.row(i) /= s;
            }
            return w;
        };
        std::vector<int> targets(static_cast<std::size_t>(b)), classes(static_cast<std::size_t>(m));
        for (auto& c : targets) c = static_cast<int>(rng.uniform_int(3));
        for (auto& c : classes) c = static_cast<int>(rng.uniform_int(3));
        const Matrix sc = same_class_matrix(targets, classes);
        const Matrix w1 = random_weights(), w2 = random_weights();
        const double ours1 = loss_nca_sum_prob(w1, sc).value;
        const double ours2 = loss_nca_sum_prob(w2, sc).value;
        const double paper1 = (w1.array() * sc.array()).sum();  // sum of posteriors, maximized
        const double paper2 = (w2.array() * sc.array()).sum();
        // summation order differs between the two routes; only rank
        // genuinely distinct settings
        if (std::fabs(paper1 - paper2) < 1e-12) continue;
        ok = paper1 > paper2 ? ours1 < ours2 : ours2 < ours1;
    }
    CheckResult c;
    c.name = "losses/argmin_equivalence";
    c.measured = ok ? 0.0 : 1.0;
    c.tolerance = 0.0;
    c.pass = ok;
    return c;
}

/// modern_nca stripped to 0 blocks / no PLR / no final BN must produce the
/// same per-batch loss as ncav4_lnca at equal parameters.
inline CheckResult check_variant_reduction() {
    Rng rng(911);
    const Eigen::Index n = 12, d = 4;
    const Matrix x = detail::random_matrix(rng, n, d);
    std::vector<int> classes(static_cast<std::size_t>(n));
    for (auto& c : classes) c = static_cast<int>(rng.uniform_int(2));

    ArchConfig stripped;
    stripped.variant = Variant::modern_nca;
    stripped.d_prime = 3;
    stripped.n_blocks = 0;
    stripped.use_plr = false;
    stripped.final_batchnorm = false;
    stripped.dropout_rate = 0.0;
    Model m1(stripped, d, 0, 77);

    ArchConfig lnca;
    lnca.variant = Variant::ncav4_lnca;
    lnca.d_prime = 3;
    lnca.n_blocks = 0;
    lnca.use_plr = false;
    lnca.final_batchnorm = false;
    lnca.dropout_rate = 0.0;
    Model m2(lnca, d, 0, 77);

    const Matrix empty(n, 0);
    std::vector<int> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), 0);
    const BoolMatrix mask = build_exclusion_mask(rows, rows);
    const Matrix sc = same_class_matrix(classes, classes);

    double worst = 0.0;
    const Matrix e1 = m1.embed(x, empty, Mode::eval);
    const Matrix e2 = m2.embed(x, empty, Mode::eval);
    worst = std::max(worst, (e1 - e2).cwiseAbs().maxCoeff());
    const auto s1 = softnn_weights(e1, e1, DistanceKind::euclid, mask);
    const auto s2 = softnn_weights(e2, e2, DistanceKind::euclid, mask);
    worst = std::max(worst, std::fabs(loss_log_softnn(s1.weights.W, sc).value -
                                      loss_log_softnn(s2.weights.W, sc).value));
    return detail::make_result("models/variant_reduction", worst, 1e-10);
}

/// The full invariant suite behind `ncatab verify` (and criteria 1-4, 7 of
/// the acceptance gate). `inject_fault` corrupts one analytic gradient to
/// prove the harness can fail.
inline std::vector<CheckResult> run_invariant_suite(bool inject_fault = false) {
    std::vector<CheckResult> results;
    results.push_back(check_linear_mse_grad(inject_fault));
    results.push_back(check_grad_checker_sensitivity());
    results.push_back(check_layer_grads());
    results.push_back(check_full_model_grad(LossKind::log_softnn, DistanceKind::euclid));
    results.push_back(check_full_model_grad(LossKind::log_softnn, DistanceKind::squared_euclid));
    results.push_back(check_full_model_grad(LossKind::mse_softnn, DistanceKind::euclid));
    results.push_back(check_full_model_grad(LossKind::mse_softnn, DistanceKind::squared_euclid));
    results.push_back(check_full_model_grad(LossKind::nca_sum_prob, DistanceKind::squared_euclid));
    results.push_back(check_full_model_grad(LossKind::mcml, DistanceKind::euclid));
    results.push_back(check_full_model_grad(LossKind::t_distribution, DistanceKind::euclid,
                                            KernelKind::t_dist));
    results.push_back(check_full_model_grad(LossKind::log_softnn, DistanceKind::l1));
    results.push_back(check_full_model_grad(LossKind::log_softnn, DistanceKind::neg_dot));
    results.push_back(check_full_model_grad(LossKind::log_softnn, DistanceKind::neg_cosine));
    results.push_back(check_eq2_eq4_oracle());
    results.push_back(check_sns_reduction(TaskKind::classification));
    results.push_back(check_sns_reduction(TaskKind::regression));
    results.push_back(check_normalization_invariants());
    results.push_back(check_shift_stability());
    results.push_back(check_determinism());
    for (auto& r : check_eval_protocol()) results.push_back(std::move(r));
    results.push_back(check_argmin_equivalence());
    results.push_back(check_variant_reduction());
    return results;
}

}  // namespace ncatab::verify
