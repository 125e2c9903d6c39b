// Copyright (c) 2026 ncatab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdlib>
#include <functional>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ncatab/common.hpp"
#include "ncatab/data.hpp"
#include "ncatab/diffcore.hpp"
#include "ncatab/eval.hpp"
#include "ncatab/losses.hpp"
#include "ncatab/models.hpp"
#include "ncatab/neighborhood.hpp"

namespace ncatab {

enum class SamplingKind { random_uniform, classwise, distance_weighted };

inline std::string to_string(SamplingKind k) {
    switch (k) {
        case SamplingKind::random_uniform: return "random";
        case SamplingKind::classwise: return "classwise";
        case SamplingKind::distance_weighted: return "distance";
    }
    fail("unknown SamplingKind");
}

inline SamplingKind sampling_from_string(const std::string& s) {
    if (s == "random") return SamplingKind::random_uniform;
    if (s == "classwise" || s == "label") return SamplingKind::classwise;
    if (s == "distance") return SamplingKind::distance_weighted;
    fail("unknown sampling kind '" + s + "'");
}

struct TrainConfig {
    ArchConfig arch;
    LossKind loss = LossKind::log_softnn;
    DistanceKind distance = DistanceKind::euclid;
    SamplingKind sampling = SamplingKind::random_uniform;
    double tau = 1.0;        // distance-weighted sampling exponent
    double sns_ratio = 0.3;  // candidate fraction per mini-batch
    int batch_size = 1024;   // capped at the training-set size
    bool full_batch = false; // ncav0/ncav1: one full-set gradient step per epoch
    double lr = 0.05;
    double weight_decay = 0.0;
    int max_epochs = 200;
    int patience = 16;
    std::uint64_t seed = 0;
    bool standardize_targets = true;  // regression label standardization
    PredictionRule prediction = PredictionRule::soft_nn;
    int knn_k = 1;
    double nu = 1.0;  // t-distribution kernel dof
};

inline void validate_train_config(const TrainConfig& cfg, TaskKind task) {
    check(cfg.sns_ratio > 0.0 && cfg.sns_ratio <= 1.0, "config: sns_ratio must be in (0, 1]");
    check(cfg.patience >= 1, "config: patience must be >= 1");
    check(cfg.max_epochs >= 1, "config: max_epochs must be >= 1");
    check(cfg.batch_size >= 1, "config: batch_size must be >= 1");
    check(cfg.lr > 0.0, "config: lr must be positive");
    check(cfg.weight_decay >= 0.0, "config: weight_decay must be >= 0");
    check(cfg.tau >= 0.0, "config: tau must be >= 0");
    check(cfg.nu > 0.0, "config: nu must be positive");
    check(cfg.knn_k >= 1, "config: knn_k must be >= 1");
    if (task == TaskKind::classification) {
        check(cfg.loss != LossKind::mse_softnn, "config: mse_softnn applies to regression only");
    } else {
        check(cfg.loss == LossKind::mse_softnn || cfg.loss == LossKind::t_distribution,
              "config: loss " + to_string(cfg.loss) + " applies to classification only");
        check(cfg.sampling != SamplingKind::classwise,
              "config: class-wise sampling applies to classification only");
    }
}

struct TrainHistory {
    std::vector<double> train_loss;     // per-epoch mean batch loss
    std::vector<double> val_metric;     // per-epoch validation metric
    std::vector<double> epoch_seconds;  // wall-clock, informational only
    int best_epoch = -1;                // 0-based index into the series
    double best_val_metric = 0.0;
    std::string stop_reason;
    long mcml_skipped_queries = 0;  // queries without same-class candidates
};

/// Observer payload for per-batch oracle checks: the train-mode embeddings
/// and candidate bookkeeping behind one loss evaluation.
struct BatchTrace {
    int epoch = 0;
    int batch_index = 0;
    double loss = 0.0;
    Matrix query_emb;
    Matrix cand_emb;
    std::vector<int> query_rows;
    std::vector<int> cand_rows;
    std::vector<std::vector<int>> per_query_rows;  // distance-weighted path only
};

using BatchObserver = std::function<void(const BatchTrace&)>;

struct TrainOutcome {
    std::unique_ptr<Model> model;
    TrainHistory history;
};

namespace detail {

struct LossHead {
    double value = 0.0;
    Matrix dW;
    int skipped = 0;
};

inline LossHead apply_loss_head(const TrainConfig& cfg, TaskKind task, const Matrix& W,
                                const BoolMatrix& mask, const Matrix& same_class,
                                const Matrix& cand_values, const Vector& targets) {
    LossResult r;
    switch (cfg.loss) {
        case LossKind::log_softnn: r = loss_log_softnn(W, same_class); break;
        case LossKind::nca_sum_prob: r = loss_nca_sum_prob(W, same_class); break;
        case LossKind::mcml: r = loss_mcml(W, same_class, mask); break;
        case LossKind::mse_softnn: r = loss_mse_softnn(W, cand_values, targets); break;
        case LossKind::t_distribution:
            // kernel handled upstream; head is the task default
            r = task == TaskKind::classification ? loss_log_softnn(W, same_class)
                                                 : loss_mse_softnn(W, cand_values, targets);
            break;
    }
    return LossHead{r.value, std::move(r.dW), r.skipped};
}

inline std::vector<std::vector<int>> make_batches(std::vector<int> order, int batch_size,
                                                  bool has_batchnorm) {
    std::vector<std::vector<int>> batches;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const auto end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    // a trailing size-1 batch cannot pass train-mode batchnorm; merge it
    if (has_batchnorm && batches.size() >= 2 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back()[0]);
        batches.pop_back();
    }
    return batches;
}

}  // namespace detail

/// Mini-batch training with stochastic neighborhood sampling and
/// validation-based early stopping. Queries come from the mini-batch;
/// candidates are drawn from the full training set; validation uses the full
/// training set as candidates under the configured prediction rule.
inline TrainOutcome train(const TrainConfig& cfg, const Dataset& train_set, const Dataset& val_set,
                          const LabelTransform& label_transform = {},
                          const BatchObserver& observer = nullptr) {
    validate_train_config(cfg, train_set.task);
    check(train_set.rows() >= 2, "train: need at least 2 training rows");
    const auto n = static_cast<int>(train_set.rows());
    const auto task = train_set.task;
    const auto dir = direction_for(task);

    auto model = build_model(cfg.arch, train_set.num_width(), train_set.cat_width(), cfg.seed);
    Rng shuffle_rng(derive_seed(cfg.seed, 3));
    Rng sampling_rng(derive_seed(cfg.seed, 4));

    const KernelKind kernel =
        cfg.loss == LossKind::t_distribution ? KernelKind::t_dist : KernelKind::exp_neg;
    const bool model_has_bn =
        cfg.arch.final_batchnorm || (cfg.arch.n_blocks > 0 && cfg.arch.norm_kind == NormKind::batch);
    const int batch_size = cfg.full_batch ? n : std::min(cfg.batch_size, n);

    InferenceSpec inf;
    inf.rule = cfg.prediction;
    inf.knn_k = std::min(cfg.knn_k, n);
    inf.distance = cfg.distance;
    inf.kernel = kernel;
    inf.nu = cfg.nu;

    std::vector<int> class_labels_all;
    if (task == TaskKind::classification) class_labels_all = train_set.class_labels();

    TrainHistory history;
    std::vector<Matrix> best_snapshot;
    std::string best_dropout_rng_state;
    int epochs_since_best = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        shuffle_rng.shuffle(order);
        const auto batches = detail::make_batches(std::move(order), batch_size, model_has_bn);

        Matrix epoch_train_emb;  // frozen embeddings for distance-weighted sampling
        if (cfg.sampling == SamplingKind::distance_weighted)
            epoch_train_emb = model->embed(train_set, Mode::eval);

        double loss_sum = 0.0;
        long loss_count = 0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const auto& batch_rows = batches[bi];
            const Matrix q_num = gather_rows(train_set.numerical, batch_rows);
            const Matrix q_cat = gather_rows(train_set.categorical_onehot, batch_rows);
            const Vector q_targets = gather(train_set.labels, batch_rows);
            std::vector<int> q_classes;
            if (task == TaskKind::classification) {
                q_classes.resize(batch_rows.size());
                for (std::size_t i = 0; i < batch_rows.size(); ++i)
                    q_classes[i] = class_labels_all[static_cast<std::size_t>(batch_rows[i])];
            }

            BatchTrace trace;
            trace.epoch = epoch;
            trace.batch_index = static_cast<int>(bi);
            trace.query_rows = batch_rows;

            double batch_loss = 0.0;
            if (cfg.sampling != SamplingKind::distance_weighted) {
                std::vector<int> cand_rows =
                    cfg.sampling == SamplingKind::random_uniform
                        ? sample_random(n, cfg.sns_ratio, sampling_rng)
                        : sample_classwise(class_labels_all, cfg.sns_ratio, sampling_rng);
                const Matrix c_num = gather_rows(train_set.numerical, cand_rows);
                const Matrix c_cat = gather_rows(train_set.categorical_onehot, cand_rows);

                const Matrix emb_q = model->embed(q_num, q_cat, Mode::train);
                const Matrix emb_c = model->embed(c_num, c_cat, Mode::train);
                const BoolMatrix mask = build_exclusion_mask(batch_rows, cand_rows);
                for (Eigen::Index i = 0; i < mask.rows(); ++i)
                    check(!mask.row(i).all(), "train: query " + std::to_string(batch_rows[
                              static_cast<std::size_t>(i)]) + " has no unmasked candidate");

                const auto soft = softnn_weights(emb_q, emb_c, cfg.distance, mask, kernel, cfg.nu);

                Matrix same_class, cand_values;
                if (task == TaskKind::classification) {
                    std::vector<int> c_classes(cand_rows.size());
                    for (std::size_t j = 0; j < cand_rows.size(); ++j)
                        c_classes[j] = class_labels_all[static_cast<std::size_t>(cand_rows[j])];
                    same_class = same_class_matrix(q_classes, c_classes);
                } else {
                    cand_values = broadcast_values(gather(train_set.labels, cand_rows),
                                                   static_cast<Eigen::Index>(batch_rows.size()));
                }
                const auto head =
                    detail::apply_loss_head(cfg, task, soft.weights.W, mask, same_class,
                                            cand_values, q_targets);
                batch_loss = head.value;
                history.mcml_skipped_queries += head.skipped;

                const auto grads = softnn_backward(soft, head.dW);
                model->backward(grads.dK);  // LIFO: candidates were embedded last
                model->backward(grads.dQ);

                if (observer) {
                    trace.query_emb = emb_q;
                    trace.cand_emb = emb_c;
                    trace.cand_rows = cand_rows;
                }
            } else {
                // per-query candidate sets under the current-epoch embeddings
                const Matrix batch_epoch_emb = gather_rows(epoch_train_emb, batch_rows);
                const auto per_query = sample_distance_weighted(batch_epoch_emb, epoch_train_emb,
                                                                cfg.sns_ratio, cfg.tau,
                                                                sampling_rng);
                std::vector<int> union_rows;
                for (const auto& rows : per_query)
                    union_rows.insert(union_rows.end(), rows.begin(), rows.end());
                std::sort(union_rows.begin(), union_rows.end());
                union_rows.erase(std::unique(union_rows.begin(), union_rows.end()),
                                 union_rows.end());
                std::vector<int> pos_of_row(static_cast<std::size_t>(n), -1);
                for (std::size_t j = 0; j < union_rows.size(); ++j)
                    pos_of_row[static_cast<std::size_t>(union_rows[j])] = static_cast<int>(j);

                const Matrix emb_q = model->embed(q_num, q_cat, Mode::train);
                const Matrix emb_u = model->embed(gather_rows(train_set.numerical, union_rows),
                                                  gather_rows(train_set.categorical_onehot,
                                                              union_rows),
                                                  Mode::train);

                const auto b = static_cast<Eigen::Index>(batch_rows.size());
                const auto k = static_cast<Eigen::Index>(per_query[0].size());
                Matrix D(b, k);
                BoolMatrix mask(b, k);
                std::vector<PairwiseDistance> row_dists;
                row_dists.reserve(static_cast<std::size_t>(b));
                Matrix cand_values(b, k);
                std::vector<std::vector<int>> per_query_classes(static_cast<std::size_t>(b));
                for (Eigen::Index i = 0; i < b; ++i) {
                    const auto& rows = per_query[static_cast<std::size_t>(i)];
                    Matrix K_i(k, emb_u.cols());
                    for (Eigen::Index j = 0; j < k; ++j) {
                        const int pos = pos_of_row[static_cast<std::size_t>(rows[static_cast<std::size_t>(j)])];
                        K_i.row(j) = emb_u.row(pos);
                        mask(i, j) = rows[static_cast<std::size_t>(j)] ==
                                     batch_rows[static_cast<std::size_t>(i)];
                        if (task == TaskKind::regression)
                            cand_values(i, j) = train_set.labels[rows[static_cast<std::size_t>(j)]];
                        else
                            per_query_classes[static_cast<std::size_t>(i)].push_back(
                                class_labels_all[static_cast<std::size_t>(rows[static_cast<std::size_t>(j)])]);
                    }
                    check(!mask.row(i).all(), "train: query has no unmasked candidate");
                    auto pd = pairwise_distance(emb_q.row(i), K_i, cfg.distance);
                    D.row(i) = pd.D.row(0);
                    row_dists.push_back(std::move(pd));
                }

                const auto weights = weights_from_distances(D, mask, kernel, cfg.nu);
                Matrix same_class;
                if (task == TaskKind::classification)
                    same_class = same_class_matrix(q_classes, per_query_classes);
                const auto head = detail::apply_loss_head(cfg, task, weights.W, mask, same_class,
                                                          cand_values, q_targets);
                batch_loss = head.value;
                history.mcml_skipped_queries += head.skipped;

                const Matrix dD = weights_backward(weights, head.dW);
                Matrix dQ = Matrix::Zero(b, emb_q.cols());
                Matrix dU = Matrix::Zero(emb_u.rows(), emb_u.cols());
                for (Eigen::Index i = 0; i < b; ++i) {
                    const auto g = pairwise_distance_backward(row_dists[static_cast<std::size_t>(i)],
                                                              dD.row(i));
                    dQ.row(i) = g.dQ.row(0);
                    const auto& rows = per_query[static_cast<std::size_t>(i)];
                    for (Eigen::Index j = 0; j < k; ++j)
                        dU.row(pos_of_row[static_cast<std::size_t>(rows[static_cast<std::size_t>(j)])]) +=
                            g.dK.row(j);
                }
                model->backward(dU);
                model->backward(dQ);

                if (observer) {
                    trace.query_emb = emb_q;
                    trace.cand_emb = emb_u;
                    trace.cand_rows = union_rows;
                    trace.per_query_rows = per_query;
                }
            }

            if (!std::isfinite(batch_loss))
                fail("train: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                     std::to_string(bi));
            sgd_step(model->params(), cfg.lr, cfg.weight_decay);

            loss_sum += batch_loss * static_cast<double>(batch_rows.size());
            loss_count += static_cast<long>(batch_rows.size());
            if (observer) {
                trace.loss = batch_loss;
                observer(trace);
            }
        }
        history.train_loss.push_back(loss_sum / static_cast<double>(loss_count));

        // validation with full-training-set candidates, eval mode
        const auto val_pred = predict(*model, train_set, val_set, inf, label_transform);
        std::vector<double> preds(static_cast<std::size_t>(val_pred.values.size()));
        std::vector<double> truth(static_cast<std::size_t>(val_set.rows()));
        for (Eigen::Index i = 0; i < val_set.rows(); ++i) {
            preds[static_cast<std::size_t>(i)] = val_pred.values[i];
            truth[static_cast<std::size_t>(i)] = task == TaskKind::regression
                                                     ? label_transform.inverse(val_set.labels[i])
                                                     : val_set.labels[i];
        }
        const double metric = compute_metric(preds, truth, task);
        history.val_metric.push_back(metric);
        history.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count());

        if (history.best_epoch < 0 || metric_improves(metric, history.best_val_metric, dir)) {
            history.best_epoch = epoch;
            history.best_val_metric = metric;
            best_snapshot = model->params().snapshot();
            best_dropout_rng_state = model->dropout_rng().save_state();
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
        }
        if (epochs_since_best >= cfg.patience) {
            history.stop_reason = "early_stopping";
            break;
        }
    }
    if (history.stop_reason.empty()) history.stop_reason = "max_epochs";
    model->params().restore(best_snapshot);
    model->dropout_rng().load_state(best_dropout_rng_state);
    return TrainOutcome{std::move(model), std::move(history)};
}

// ---------------------------------------------------------------------------
// Multi-seed evaluation
// ---------------------------------------------------------------------------

inline int env_thread_count() {
    if (const char* s = std::getenv("NCATAB_THREADS")) {
        const int v = std::atoi(s);
        if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(0..n-1) on up to `threads` workers. Each index owns its own
/// deterministic state, so parallel and serial schedules give identical
/// results.
inline void parallel_for(int n, const std::function<void(int)>& fn, int threads) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t]() {
            try {
                for (int i = t; i < n; i += threads) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct PreparedSplit {
    Dataset train, val, test;
    Standardizer standardizer;
    LabelTransform label_transform;
};

/// 64/16/20 split, feature standardization with train statistics, and the
/// optional regression label transform.
inline PreparedSplit prepare_split(const Dataset& full, std::uint64_t split_seed,
                                   bool standardize_targets) {
    PreparedSplit out;
    auto split = split_dataset(full, split_seed);
    out.standardizer = fit_standardizer(split.train);
    out.train = apply_standardizer(out.standardizer, split.train);
    out.val = apply_standardizer(out.standardizer, split.val);
    out.test = apply_standardizer(out.standardizer, split.test);
    if (full.task == TaskKind::regression && standardize_targets)
        out.label_transform = standardize_regression_labels(out.train, out.val, out.test);
    return out;
}

struct SeedRunResult {
    std::vector<double> metrics;  // one test metric per seed
    double mean = 0.0;
    double stddev = 0.0;  // sample std; 0 for a single seed
    std::vector<TrainHistory> histories;
    std::unique_ptr<Model> first_model;  // the model trained with seeds[0]
    Standardizer standardizer;
    LabelTransform label_transform;
};

inline double test_metric(Model& model, const Dataset& train_set, const Dataset& test_set,
                          const InferenceSpec& inf, const LabelTransform& lt) {
    const auto pred = predict(model, train_set, test_set, inf, lt);
    std::vector<double> preds(static_cast<std::size_t>(pred.values.size()));
    std::vector<double> truth(static_cast<std::size_t>(test_set.rows()));
    for (Eigen::Index i = 0; i < test_set.rows(); ++i) {
        preds[static_cast<std::size_t>(i)] = pred.values[i];
        truth[static_cast<std::size_t>(i)] = test_set.task == TaskKind::regression
                                                 ? lt.inverse(test_set.labels[i])
                                                 : test_set.labels[i];
    }
    return compute_metric(preds, truth, test_set.task);
}

inline InferenceSpec inference_spec(const TrainConfig& cfg, Eigen::Index train_rows) {
    InferenceSpec inf;
    inf.rule = cfg.prediction;
    inf.knn_k = static_cast<int>(std::min<Eigen::Index>(cfg.knn_k, train_rows));
    inf.distance = cfg.distance;
    inf.kernel = cfg.loss == LossKind::t_distribution ? KernelKind::t_dist : KernelKind::exp_neg;
    inf.nu = cfg.nu;
    return inf;
}

/// Fixed split, then one independent (re-initialized) training run per seed.
inline SeedRunResult run_seeds(const TrainConfig& cfg, const Dataset& full,
                               const std::vector<std::uint64_t>& seeds, std::uint64_t split_seed) {
    check(!seeds.empty(), "run_seeds: need at least one seed");
    const auto prep = prepare_split(full, split_seed, cfg.standardize_targets);
    SeedRunResult out;
    out.metrics.resize(seeds.size());
    out.histories.resize(seeds.size());
    out.standardizer = prep.standardizer;
    out.label_transform = prep.label_transform;
    parallel_for(
        static_cast<int>(seeds.size()),
        [&](int i) {
            TrainConfig c = cfg;
            c.seed = seeds[static_cast<std::size_t>(i)];
            auto run = train(c, prep.train, prep.val, prep.label_transform);
            const auto inf = inference_spec(c, prep.train.rows());
            out.metrics[static_cast<std::size_t>(i)] =
                test_metric(*run.model, prep.train, prep.test, inf, prep.label_transform);
            out.histories[static_cast<std::size_t>(i)] = std::move(run.history);
            if (i == 0) out.first_model = std::move(run.model);
        },
        env_thread_count());
    double sum = 0.0;
    for (double m : out.metrics) sum += m;
    out.mean = sum / static_cast<double>(out.metrics.size());
    if (out.metrics.size() > 1) {
        double ss = 0.0;
        for (double m : out.metrics) ss += (m - out.mean) * (m - out.mean);
        out.stddev = std::sqrt(ss / static_cast<double>(out.metrics.size() - 1));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Random hyperparameter search
// ---------------------------------------------------------------------------

struct SearchSpace {
    int n_trials = 100;
    double lr_lo = 1e-4, lr_hi = 1e-1;         // log-uniform
    double wd_lo = 1e-6, wd_hi = 1e-3;         // log-uniform
    double ratio_lo = 0.05, ratio_hi = 0.6;    // uniform
    double dropout_lo = 0.0, dropout_hi = 0.5; // uniform
    double sigma_lo = 0.01, sigma_hi = 1.0;    // log-uniform (PLR frequency scale)
    int d_prime_lo = 16, d_prime_hi = 128;
    int hidden_lo = 0, hidden_hi = 0;  // 0 keeps hidden = d_prime
    int blocks_lo = 1, blocks_hi = 2;
    bool search_arch = true;  // false: only lr/wd/ratio (fixed-architecture ablations)
};

inline TrainConfig sample_config(const SearchSpace& space, const TrainConfig& base, Rng& rng) {
    TrainConfig cfg = base;
    cfg.lr = rng.log_uniform(space.lr_lo, space.lr_hi);
    cfg.weight_decay = rng.log_uniform(space.wd_lo, space.wd_hi);
    cfg.sns_ratio = rng.uniform(space.ratio_lo, space.ratio_hi);
    if (space.search_arch) {
        cfg.arch.dropout_rate = rng.uniform(space.dropout_lo, space.dropout_hi);
        cfg.arch.d_prime =
            space.d_prime_lo +
            static_cast<int>(rng.uniform_int(space.d_prime_hi - space.d_prime_lo + 1));
        if (space.hidden_hi > 0)
            cfg.arch.hidden_width =
                space.hidden_lo +
                static_cast<int>(rng.uniform_int(space.hidden_hi - space.hidden_lo + 1));
        if (cfg.arch.variant == Variant::modern_nca)
            cfg.arch.n_blocks =
                space.blocks_lo +
                static_cast<int>(rng.uniform_int(space.blocks_hi - space.blocks_lo + 1));
        if (cfg.arch.use_plr) cfg.arch.plr.sigma = rng.log_uniform(space.sigma_lo, space.sigma_hi);
    }
    return cfg;
}

struct TrialRecord {
    int trial = 0;
    TrainConfig cfg;
    double val_metric = 0.0;
    double seconds = 0.0;
    bool failed = false;
    std::string error;
};

struct SearchResult {
    TrainConfig best;
    int best_trial = -1;
    double best_val_metric = 0.0;
    std::vector<TrialRecord> trials;
};

/// Plain random search: n_trials sampled configs, each trained once;
/// the best validation metric wins, ties going to the earlier trial.
inline SearchResult random_search(const SearchSpace& space, const TrainConfig& base,
                                  const Dataset& train_set, const Dataset& val_set,
                                  const LabelTransform& lt, std::uint64_t master_seed) {
    check(space.n_trials >= 1, "random_search: n_trials must be >= 1");
    validate_train_config(base, train_set.task);
    const auto dir = direction_for(train_set.task);
    SearchResult result;
    for (int t = 0; t < space.n_trials; ++t) {
        TrialRecord rec;
        rec.trial = t;
        Rng rng(derive_seed(master_seed, static_cast<std::uint64_t>(2 * t)));
        rec.cfg = sample_config(space, base, rng);
        rec.cfg.seed = derive_seed(master_seed, static_cast<std::uint64_t>(2 * t + 1));
        const auto t0 = std::chrono::steady_clock::now();
        try {
            auto run = train(rec.cfg, train_set, val_set, lt);
            rec.val_metric = run.history.best_val_metric;
        } catch (const std::exception& e) {
            rec.failed = true;
            rec.error = e.what();
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!rec.failed &&
            (result.best_trial < 0 || metric_improves(rec.val_metric, result.best_val_metric, dir))) {
            result.best_trial = t;
            result.best_val_metric = rec.val_metric;
            result.best = rec.cfg;
        }
        result.trials.push_back(std::move(rec));
    }
    check(result.best_trial >= 0, "random_search: all trials failed");
    return result;
}

// ---------------------------------------------------------------------------
// Variant presets (the Table-2 ladder plus ModernNCA)
// ---------------------------------------------------------------------------

/// Desk-scale defaults for each rung of the ladder. The regression ladder
/// substitutes the regression-legal soft-NN MSE loss for the classification
/// losses (the paper only runs the ladder on classification).
inline TrainConfig variant_preset(Variant v, TaskKind task, Eigen::Index d_input_raw) {
    TrainConfig cfg;
    cfg.arch.variant = v;
    cfg.arch.n_blocks = 0;
    cfg.arch.use_plr = false;
    cfg.arch.final_batchnorm = false;
    cfg.arch.dropout_rate = 0.0;
    cfg.distance = DistanceKind::squared_euclid;
    cfg.loss = task == TaskKind::classification ? LossKind::nca_sum_prob : LossKind::mse_softnn;
    cfg.sampling = SamplingKind::random_uniform;
    cfg.sns_ratio = 1.0;
    cfg.full_batch = true;
    cfg.prediction = PredictionRule::hard_knn;
    cfg.knn_k = 1;
    cfg.lr = 0.1;
    switch (v) {
        case Variant::ncav0:
            cfg.arch.d_prime = static_cast<int>(d_input_raw);
            break;
        case Variant::ncav1:
            cfg.arch.d_prime = 64;
            break;
        case Variant::ncav2:
            cfg.arch.d_prime = 64;
            cfg.full_batch = false;
            cfg.batch_size = 1024;
            break;
        case Variant::ncav3:
            cfg.arch.d_prime = 64;
            cfg.full_batch = false;
            cfg.batch_size = 1024;
            if (task == TaskKind::classification) cfg.loss = LossKind::log_softnn;
            break;
        case Variant::ncav4_lnca:
            cfg.arch.d_prime = 64;
            cfg.full_batch = false;
            cfg.batch_size = 1024;
            if (task == TaskKind::classification) cfg.loss = LossKind::log_softnn;
            cfg.prediction = PredictionRule::soft_nn;
            break;
        case Variant::modern_nca:
            cfg.arch.d_prime = 32;
            cfg.arch.n_blocks = 1;
            cfg.arch.use_plr = true;
            cfg.arch.final_batchnorm = true;
            cfg.arch.dropout_rate = 0.1;
            cfg.distance = DistanceKind::euclid;
            cfg.loss = task == TaskKind::classification ? LossKind::log_softnn
                                                        : LossKind::mse_softnn;
            cfg.sns_ratio = 0.3;
            cfg.full_batch = false;
            cfg.batch_size = 1024;
            cfg.prediction = PredictionRule::soft_nn;
            cfg.lr = 0.05;
            break;
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// JSON serialization of configs (documented structured text formats)
// ---------------------------------------------------------------------------

inline nlohmann::json arch_to_json(const ArchConfig& a) {
    return nlohmann::json{{"variant", to_string(a.variant)},
                          {"d_prime", a.d_prime},
                          {"n_blocks", a.n_blocks},
                          {"hidden_width", a.hidden_width},
                          {"dropout_rate", a.dropout_rate},
                          {"norm", a.norm_kind == NormKind::batch ? "batch" : "layer"},
                          {"residual", a.residual},
                          {"use_plr", a.use_plr},
                          {"plr_frequencies", a.plr.n_frequencies},
                          {"plr_k_out", a.plr.k_out},
                          {"plr_sigma", a.plr.sigma},
                          {"final_batchnorm", a.final_batchnorm}};
}

inline ArchConfig arch_from_json(const nlohmann::json& j) {
    ArchConfig a;
    a.variant = variant_from_string(j.value("variant", "modern_nca"));
    a.d_prime = j.value("d_prime", a.d_prime);
    a.n_blocks = j.value("n_blocks", a.n_blocks);
    a.hidden_width = j.value("hidden_width", a.hidden_width);
    a.dropout_rate = j.value("dropout_rate", a.dropout_rate);
    const std::string norm = j.value("norm", "batch");
    check(norm == "batch" || norm == "layer", "config: unknown norm '" + norm + "'");
    a.norm_kind = norm == "batch" ? NormKind::batch : NormKind::layer;
    a.residual = j.value("residual", a.residual);
    a.use_plr = j.value("use_plr", a.use_plr);
    a.plr.n_frequencies = j.value("plr_frequencies", a.plr.n_frequencies);
    a.plr.k_out = j.value("plr_k_out", a.plr.k_out);
    a.plr.sigma = j.value("plr_sigma", a.plr.sigma);
    a.final_batchnorm = j.value("final_batchnorm", a.final_batchnorm);
    return a;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    return nlohmann::json{{"arch", arch_to_json(c.arch)},
                          {"loss", to_string(c.loss)},
                          {"distance", to_string(c.distance)},
                          {"sampling", to_string(c.sampling)},
                          {"tau", c.tau},
                          {"sns_ratio", c.sns_ratio},
                          {"batch_size", c.batch_size},
                          {"full_batch", c.full_batch},
                          {"lr", c.lr},
                          {"weight_decay", c.weight_decay},
                          {"max_epochs", c.max_epochs},
                          {"patience", c.patience},
                          {"seed", c.seed},
                          {"standardize_targets", c.standardize_targets},
                          {"prediction", c.prediction == PredictionRule::soft_nn ? "soft_nn"
                                                                                 : "hard_knn"},
                          {"knn_k", c.knn_k},
                          {"nu", c.nu}};
}

/// Overrides only the keys present in `j` on top of `base` (so a variant
/// preset can serve as the starting point).
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base) {
    TrainConfig c = std::move(base);
    if (j.contains("arch")) c.arch = arch_from_json(j["arch"]);
    if (j.contains("loss")) c.loss = loss_from_string(j["loss"].get<std::string>());
    if (j.contains("distance")) c.distance = distance_from_string(j["distance"].get<std::string>());
    if (j.contains("sampling")) c.sampling = sampling_from_string(j["sampling"].get<std::string>());
    c.tau = j.value("tau", c.tau);
    c.sns_ratio = j.value("sns_ratio", c.sns_ratio);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.full_batch = j.value("full_batch", c.full_batch);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.standardize_targets = j.value("standardize_targets", c.standardize_targets);
    if (j.contains("prediction")) {
        const std::string p = j["prediction"].get<std::string>();
        check(p == "soft_nn" || p == "hard_knn", "config: unknown prediction rule '" + p + "'");
        c.prediction = p == "soft_nn" ? PredictionRule::soft_nn : PredictionRule::hard_knn;
    }
    c.knn_k = j.value("knn_k", c.knn_k);
    c.nu = j.value("nu", c.nu);
    return c;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    return train_config_from_json(j, TrainConfig{});
}

/// Expands {"variant": "..."} shorthand into the variant preset before
/// applying the file's explicit overrides.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TaskKind task,
                                          Eigen::Index d_input_raw) {
    TrainConfig base;
    if (j.contains("variant") && !j.contains("arch"))
        base = variant_preset(variant_from_string(j["variant"].get<std::string>()), task,
                              d_input_raw);
    return train_config_from_json(j, std::move(base));
}

inline nlohmann::json search_space_to_json(const SearchSpace& s) {
    return nlohmann::json{{"n_trials", s.n_trials},
                          {"lr", {s.lr_lo, s.lr_hi}},
                          {"weight_decay", {s.wd_lo, s.wd_hi}},
                          {"sns_ratio", {s.ratio_lo, s.ratio_hi}},
                          {"dropout", {s.dropout_lo, s.dropout_hi}},
                          {"plr_sigma", {s.sigma_lo, s.sigma_hi}},
                          {"d_prime", {s.d_prime_lo, s.d_prime_hi}},
                          {"hidden_width", {s.hidden_lo, s.hidden_hi}},
                          {"n_blocks", {s.blocks_lo, s.blocks_hi}},
                          {"search_arch", s.search_arch}};
}

inline SearchSpace search_space_from_json(const nlohmann::json& j) {
    SearchSpace s;
    s.n_trials = j.value("n_trials", s.n_trials);
    auto paird = [&](const char* key, double& lo, double& hi) {
        if (j.contains(key)) {
            lo = j[key][0].get<double>();
            hi = j[key][1].get<double>();
        }
    };
    auto pairi = [&](const char* key, int& lo, int& hi) {
        if (j.contains(key)) {
            lo = j[key][0].get<int>();
            hi = j[key][1].get<int>();
        }
    };
    paird("lr", s.lr_lo, s.lr_hi);
    paird("weight_decay", s.wd_lo, s.wd_hi);
    paird("sns_ratio", s.ratio_lo, s.ratio_hi);
    paird("dropout", s.dropout_lo, s.dropout_hi);
    paird("plr_sigma", s.sigma_lo, s.sigma_hi);
    pairi("d_prime", s.d_prime_lo, s.d_prime_hi);
    pairi("hidden_width", s.hidden_lo, s.hidden_hi);
    pairi("n_blocks", s.blocks_lo, s.blocks_hi);
    s.search_arch = j.value("search_arch", s.search_arch);
    return s;
}

}  // namespace ncatab
