// Copyright (c) 2026 ncatab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ncatab/common.hpp"
#include "ncatab/data.hpp"
#include "ncatab/diffcore.hpp"
#include "ncatab/neighborhood.hpp"

namespace ncatab {

enum class Variant { ncav0, ncav1, ncav2, ncav3, ncav4_lnca, modern_nca };
enum class NormKind { batch, layer };
enum class PredictionRule { soft_nn, hard_knn };

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::ncav0: return "ncav0";
        case Variant::ncav1: return "ncav1";
        case Variant::ncav2: return "ncav2";
        case Variant::ncav3: return "ncav3";
        case Variant::ncav4_lnca: return "ncav4_lnca";
        case Variant::modern_nca: return "modern_nca";
    }
    fail("unknown Variant");
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "ncav0") return Variant::ncav0;
    if (s == "ncav1") return Variant::ncav1;
    if (s == "ncav2") return Variant::ncav2;
    if (s == "ncav3") return Variant::ncav3;
    if (s == "ncav4_lnca" || s == "lnca") return Variant::ncav4_lnca;
    if (s == "modern_nca" || s == "mnca") return Variant::modern_nca;
    fail("unknown variant '" + s + "'");
}

struct PlrConfig {
    int n_frequencies = 16;
    int k_out = 32;
    double sigma = 0.1;
};

struct ArchConfig {
    Variant variant = Variant::modern_nca;
    int d_prime = 32;
    int n_blocks = 1;
    int hidden_width = 0;  // 0 means d_prime (expansion factor 1)
    double dropout_rate = 0.1;
    NormKind norm_kind = NormKind::batch;
    bool residual = false;
    bool use_plr = true;
    PlrConfig plr;
    bool final_batchnorm = true;

    int effective_hidden() const { return hidden_width > 0 ? hidden_width : d_prime; }
    bool is_linear_variant() const { return variant != Variant::modern_nca; }
};

inline void validate_arch(const ArchConfig& cfg, Eigen::Index d_input_raw) {
    check(cfg.d_prime >= 1, "arch: d_prime must be >= 1");
    check(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0, "arch: dropout_rate out of [0, 1)");
    check(cfg.n_blocks >= 0, "arch: n_blocks must be >= 0");
    switch (cfg.variant) {
        case Variant::ncav0:
            check(cfg.d_prime <= d_input_raw,
                  "arch: ncav0 performs dimensionality reduction, d_prime " +
                      std::to_string(cfg.d_prime) + " > input width " +
                      std::to_string(d_input_raw));
            check(cfg.n_blocks == 0, "arch: ncav0 must have no blocks");
            check(!cfg.use_plr, "arch: ncav0 must not use PLR");
            check(!cfg.final_batchnorm, "arch: ncav0 must not use final batchnorm");
            break;
        case Variant::ncav1:
        case Variant::ncav2:
        case Variant::ncav3:
        case Variant::ncav4_lnca:
            check(cfg.n_blocks == 0, "arch: " + to_string(cfg.variant) + " keeps phi linear");
            break;
        case Variant::modern_nca:
            // n_blocks >= 1 in presets; 0 is allowed so the variant-reduction
            // equivalence with ncav4_lnca stays expressible
            break;
    }
}

/// One Eq.-5 block: Norm -> Linear(d' -> hidden) -> ReLU -> Dropout ->
/// Linear(hidden -> d'), optionally with a residual link.
class Block {
public:
    Block(ParamStore& ps, const std::string& name, Eigen::Index width, Eigen::Index hidden,
          double dropout_rate, NormKind norm, bool residual)
        : lin1_(ps, name + ".lin1", width, hidden),
          lin2_(ps, name + ".lin2", hidden, width),
          dropout_(dropout_rate),
          residual_(residual) {
        if (norm == NormKind::batch)
            bn_.emplace(ps, name + ".bn", width);
        else
            ln_.emplace(ps, name + ".ln", width);
    }

    Matrix forward(const Matrix& x, Mode mode, Rng& rng) {
        Matrix h = bn_ ? bn_->forward(x, mode) : ln_->forward(x, mode);
        h = lin1_.forward(h, mode);
        h = relu_.forward(h, mode);
        h = dropout_.forward(h, mode, rng);
        h = lin2_.forward(h, mode);
        if (residual_) h += x;
        return h;
    }

    Matrix backward(const Matrix& dy) {
        Matrix d = lin2_.backward(dy);
        d = dropout_.backward(d);
        d = relu_.backward(d);
        d = lin1_.backward(d);
        d = bn_ ? bn_->backward(d) : ln_->backward(d);
        if (residual_) d += dy;
        return d;
    }

    void discard_contexts() {
        if (bn_) bn_->discard_contexts();
        if (ln_) ln_->discard_contexts();
        lin1_.discard_contexts();
        lin2_.discard_contexts();
        relu_.discard_contexts();
        dropout_.discard_contexts();
    }

private:
    std::optional<BatchNorm1d> bn_;
    std::optional<LayerNorm> ln_;
    Linear lin1_;
    Linear lin2_;
    Relu relu_;
    Dropout dropout_;
    bool residual_;
};

/// The embedding network phi. Input is the standardized numerical block
/// (optionally PLR-encoded) concatenated with the one-hot categorical block;
/// output width is d_prime for every variant.
class Model {
public:
    Model(const ArchConfig& cfg, Eigen::Index d_num, Eigen::Index d_cat, std::uint64_t seed)
        : cfg_(cfg),
          d_num_(d_num),
          d_cat_(d_cat),
          params_(seed),
          dropout_rng_(derive_seed(seed, /*stream=*/2)) {
        if (cfg_.use_plr && d_num_ == 0) cfg_.use_plr = false;  // nothing to encode
        validate_arch(cfg_, d_num + d_cat);
        if (cfg_.use_plr)
            plr_.emplace(params_, "plr", d_num_, cfg_.plr.n_frequencies, cfg_.plr.k_out,
                         cfg_.plr.sigma);
        const Eigen::Index d_in = encoded_width();
        check(d_in >= 1, "model: zero input width");
        const bool with_bias = cfg_.variant != Variant::ncav0;
        initial_.emplace(params_, "proj", d_in, cfg_.d_prime, with_bias);
        for (int i = 0; i < cfg_.n_blocks; ++i)
            blocks_.push_back(std::make_unique<Block>(params_, "block" + std::to_string(i),
                                                      cfg_.d_prime, cfg_.effective_hidden(),
                                                      cfg_.dropout_rate, cfg_.norm_kind,
                                                      cfg_.residual));
        if (cfg_.final_batchnorm) final_bn_.emplace(params_, "final_bn", cfg_.d_prime);
    }

    Eigen::Index encoded_width() const {
        return (cfg_.use_plr ? plr_->out_width() : d_num_) + d_cat_;
    }

    Matrix embed(const Matrix& x_num, const Matrix& x_cat, Mode mode) {
        check(x_num.cols() == d_num_ && x_cat.cols() == d_cat_, "embed: input width mismatch");
        check(x_num.rows() == x_cat.rows(), "embed: row count mismatch");
        Matrix h;
        if (cfg_.use_plr) {
            const Matrix enc = plr_->forward(x_num, mode);
            h.resize(enc.rows(), enc.cols() + d_cat_);
            h << enc, x_cat;
        } else {
            h.resize(x_num.rows(), d_num_ + d_cat_);
            h << x_num, x_cat;
        }
        h = initial_->forward(h, mode);
        for (auto& b : blocks_) h = b->forward(h, mode, dropout_rng_);
        if (final_bn_) h = final_bn_->forward(h, mode);
        return h;
    }

    Matrix embed(const Dataset& data, Mode mode) {
        return embed(data.numerical, data.categorical_onehot, mode);
    }

    /// Accumulates parameter gradients for the most recent un-consumed
    /// forward (LIFO when several are pending).
    void backward(const Matrix& d_embedding) {
        Matrix d = d_embedding;
        if (final_bn_) d = final_bn_->backward(d);
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) d = (*it)->backward(d);
        d = initial_->backward(d);
        if (cfg_.use_plr) plr_->backward(d.leftCols(plr_->out_width()));
    }

    void discard_contexts() {
        if (plr_) plr_->discard_contexts();
        initial_->discard_contexts();
        for (auto& b : blocks_) b->discard_contexts();
        if (final_bn_) final_bn_->discard_contexts();
    }

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    Rng& dropout_rng() { return dropout_rng_; }
    const Rng& dropout_rng() const { return dropout_rng_; }
    const ArchConfig& arch() const { return cfg_; }
    Eigen::Index d_num() const { return d_num_; }
    Eigen::Index d_cat() const { return d_cat_; }
    Eigen::Index d_prime() const { return cfg_.d_prime; }
    std::size_t parameter_count() const { return params_.trainable_scalar_count(); }

private:
    ArchConfig cfg_;
    Eigen::Index d_num_;
    Eigen::Index d_cat_;
    ParamStore params_;
    Rng dropout_rng_;
    std::optional<PlrEncoder> plr_;
    std::optional<Linear> initial_;
    std::vector<std::unique_ptr<Block>> blocks_;
    std::optional<BatchNorm1d> final_bn_;
};

inline std::unique_ptr<Model> build_model(const ArchConfig& cfg, Eigen::Index d_num,
                                          Eigen::Index d_cat, std::uint64_t seed) {
    return std::make_unique<Model>(cfg, d_num, d_cat, seed);
}

// ---------------------------------------------------------------------------
// Hard KNN baseline
// ---------------------------------------------------------------------------

/// Exact k nearest Euclidean neighbors. Classification: majority vote, ties
/// to the smallest class index; regression: mean of neighbor labels.
inline Vector knn_predict(const Matrix& train_emb, const Vector& train_labels,
                          const Matrix& query_emb, int k, TaskKind task, int n_classes = 0) {
    check(k >= 1 && k <= train_emb.rows(),
          "knn_predict: k=" + std::to_string(k) + " out of range [1, " +
              std::to_string(train_emb.rows()) + "]");
    check(train_emb.rows() == train_labels.size(), "knn_predict: label count mismatch");
    const auto pd = pairwise_distance(query_emb, train_emb, DistanceKind::squared_euclid);
    Vector out(query_emb.rows());
    std::vector<std::pair<double, int>> order(static_cast<std::size_t>(train_emb.rows()));
    for (Eigen::Index i = 0; i < query_emb.rows(); ++i) {
        for (Eigen::Index j = 0; j < train_emb.rows(); ++j)
            order[static_cast<std::size_t>(j)] = {pd.D(i, j), static_cast<int>(j)};
        std::partial_sort(order.begin(), order.begin() + k, order.end());
        if (task == TaskKind::classification) {
            std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
            for (int j = 0; j < k; ++j)
                ++counts[static_cast<std::size_t>(train_labels[order[static_cast<std::size_t>(j)].second])];
            int best = 0;
            for (int c = 1; c < n_classes; ++c)
                if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)])
                    best = c;  // strict >: ties keep the smallest class index
            out[i] = best;
        } else {
            double sum = 0.0;
            for (int j = 0; j < k; ++j) sum += train_labels[order[static_cast<std::size_t>(j)].second];
            out[i] = sum / k;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

/// Inference-time knobs that belong with a trained model.
struct InferenceSpec {
    PredictionRule rule = PredictionRule::soft_nn;
    int knn_k = 1;
    DistanceKind distance = DistanceKind::euclid;
    KernelKind kernel = KernelKind::exp_neg;
    double nu = 1.0;
};

struct PredictOutput {
    Vector values;        // class index (classification) or original-unit value
    Matrix probabilities;  // classification soft-NN path only: B x C rows
};

/// Embeds the full training set and the queries in eval mode and predicts
/// with an all-false exclusion mask (inference never self-excludes).
inline PredictOutput predict(Model& model, const Dataset& train, const Dataset& queries,
                             const InferenceSpec& spec, const LabelTransform& label_transform) {
    check(train.rows() >= 1, "predict: empty training set");
    PredictOutput out;
    const Matrix train_emb = model.embed(train, Mode::eval);
    const Matrix query_emb = model.embed(queries, Mode::eval);
    if (spec.rule == PredictionRule::hard_knn) {
        out.values = knn_predict(train_emb, train.labels, query_emb, spec.knn_k, train.task,
                                 train.n_classes);
        if (train.task == TaskKind::regression)
            for (Eigen::Index i = 0; i < out.values.size(); ++i)
                out.values[i] = label_transform.inverse(out.values[i]);
        return out;
    }
    const auto soft = softnn_weights(query_emb, train_emb, spec.distance,
                                     no_mask(query_emb.rows(), train_emb.rows()), spec.kernel,
                                     spec.nu);
    if (train.task == TaskKind::classification) {
        out.probabilities = softnn_predict(soft.weights, one_hot_labels(train.class_labels(),
                                                                        train.n_classes));
        out.values.resize(out.probabilities.rows());
        for (Eigen::Index i = 0; i < out.probabilities.rows(); ++i) {
            int best = 0;
            for (int c = 1; c < train.n_classes; ++c)
                if (out.probabilities(i, c) > out.probabilities(i, best)) best = c;
            out.values[i] = best;
        }
    } else {
        const Matrix pred = softnn_predict(soft.weights, train.labels);
        out.values.resize(pred.rows());
        for (Eigen::Index i = 0; i < pred.rows(); ++i)
            out.values[i] = label_transform.inverse(pred(i, 0));
    }
    return out;
}

}  // namespace ncatab
