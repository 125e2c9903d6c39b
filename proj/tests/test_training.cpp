// Copyright (c) 2026 ncatab contributors
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "ncatab/training.hpp"

using namespace ncatab;
using Catch::Matchers::ContainsSubstring;

namespace {

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.arch.variant = Variant::modern_nca;
    cfg.arch.d_prime = 4;
    cfg.arch.n_blocks = 1;
    cfg.arch.dropout_rate = 0.1;
    cfg.arch.use_plr = true;
    cfg.arch.plr = PlrConfig{3, 4, 0.2};
    cfg.loss = LossKind::log_softnn;
    cfg.sns_ratio = 0.5;
    cfg.batch_size = 16;
    cfg.max_epochs = 4;
    cfg.patience = 8;
    cfg.seed = 3;
    return cfg;
}

}  // namespace

TEST_CASE("config validation") {
    TrainConfig cfg = small_config();
    SECTION("mse on classification is rejected") {
        cfg.loss = LossKind::mse_softnn;
        REQUIRE_THROWS_WITH(validate_train_config(cfg, TaskKind::classification),
                            ContainsSubstring("regression only"));
    }
    SECTION("classification losses on regression are rejected") {
        cfg.loss = LossKind::log_softnn;
        REQUIRE_THROWS_WITH(validate_train_config(cfg, TaskKind::regression),
                            ContainsSubstring("classification only"));
    }
    SECTION("classwise sampling needs classes") {
        cfg.loss = LossKind::mse_softnn;
        cfg.sampling = SamplingKind::classwise;
        REQUIRE_THROWS(validate_train_config(cfg, TaskKind::regression));
    }
    SECTION("ratio bounds") {
        cfg.sns_ratio = 0.0;
        REQUIRE_THROWS(validate_train_config(cfg, TaskKind::classification));
    }
}

TEST_CASE("trailing singleton batches merge ahead of batchnorm") {
    std::vector<int> order(33);
    std::iota(order.begin(), order.end(), 0);
    const auto merged = detail::make_batches(order, 16, /*has_batchnorm=*/true);
    REQUIRE(merged.size() == 2);
    CHECK(merged[0].size() == 16);
    CHECK(merged[1].size() == 17);
    const auto kept = detail::make_batches(order, 16, /*has_batchnorm=*/false);
    REQUIRE(kept.size() == 3);
    CHECK(kept[2].size() == 1);
}

TEST_CASE("training runs deterministically") {
    Dataset data = testutil::make_random_classification(40, 3, 2, 8);
    Dataset val = testutil::make_random_classification(12, 3, 2, 9);
    const TrainConfig cfg = small_config();
    auto a = train(cfg, data, val);
    auto b = train(cfg, data, val);
    CHECK(a.history.train_loss == b.history.train_loss);
    CHECK(a.history.val_metric == b.history.val_metric);
    CHECK(a.history.best_epoch == b.history.best_epoch);
    const auto ta = a.model->params().tensors();
    const auto tb = b.model->params().tensors();
    for (std::size_t i = 0; i < ta.size(); ++i) {
        INFO(ta[i]->name);
        CHECK(ta[i]->value == tb[i]->value);
    }
}

TEST_CASE("early stopping fires after patience epochs without improvement") {
    Dataset data = testutil::make_random_classification(30, 3, 2, 10);
    Dataset val = testutil::make_random_classification(10, 3, 2, 11);
    TrainConfig cfg = small_config();
    cfg.patience = 1;
    cfg.max_epochs = 50;
    cfg.lr = 1e-300;  // updates vanish in double precision: metric is constant
    cfg.arch.dropout_rate = 0.0;
    const auto run = train(cfg, data, val);
    CHECK(run.history.val_metric.size() == 2);  // epoch 0 sets best, epoch 1 stops
    CHECK(run.history.stop_reason == "early_stopping");
    CHECK(run.history.best_epoch == 0);
}

TEST_CASE("returned model carries the best validation epoch") {
    Dataset data = testutil::make_separable(60, 4, 1.0, 12);
    Dataset val = testutil::make_separable(20, 4, 1.0, 13);
    TrainConfig cfg = small_config();
    cfg.max_epochs = 8;
    const auto run = train(cfg, data, val);
    double best = run.history.val_metric[0];
    for (double m : run.history.val_metric) best = std::max(best, m);
    CHECK(run.history.best_val_metric == best);
    CHECK(run.history.val_metric[static_cast<std::size_t>(run.history.best_epoch)] == best);
}

TEST_CASE("exploding training aborts with a non-finite report") {
    Dataset data = testutil::make_random_classification(20, 3, 2, 14);
    Dataset val = testutil::make_random_classification(8, 3, 2, 15);
    TrainConfig cfg = small_config();
    cfg.lr = 1e150;  // blow the parameters up
    cfg.max_epochs = 20;
    // surfaces either as a non-finite batch loss or a non-finite gradient
    REQUIRE_THROWS_WITH(train(cfg, data, val), ContainsSubstring("non-finite"));
}

TEST_CASE("non-finite loss aborts with epoch and batch context") {
    Dataset data = testutil::make_sine(20, 14);
    data.numerical(3, 0) = std::numeric_limits<double>::quiet_NaN();
    Dataset val = testutil::make_sine(8, 15);
    TrainConfig cfg = small_config();
    cfg.loss = LossKind::mse_softnn;
    cfg.sns_ratio = 1.0;
    cfg.max_epochs = 2;
    REQUIRE_THROWS_WITH(train(cfg, data, val),
                        ContainsSubstring("non-finite loss") && ContainsSubstring("epoch"));
}

TEST_CASE("sampling strategies train end to end") {
    Dataset data = testutil::make_random_classification(40, 3, 2, 16);
    Dataset val = testutil::make_random_classification(10, 3, 2, 17);
    TrainConfig cfg = small_config();
    cfg.max_epochs = 2;
    SECTION("classwise") {
        cfg.sampling = SamplingKind::classwise;
        const auto run = train(cfg, data, val);
        CHECK(run.history.train_loss.size() == 2);
        CHECK(std::isfinite(run.history.train_loss.back()));
    }
    SECTION("distance-weighted is deterministic too") {
        cfg.sampling = SamplingKind::distance_weighted;
        cfg.tau = 1.0;
        const auto r1 = train(cfg, data, val);
        const auto r2 = train(cfg, data, val);
        CHECK(r1.history.train_loss == r2.history.train_loss);
    }
}

TEST_CASE("candidate subsets never include the query's own row") {
    Dataset data = testutil::make_random_classification(24, 3, 2, 18);
    Dataset val = testutil::make_random_classification(8, 3, 2, 19);
    TrainConfig cfg = small_config();
    cfg.sns_ratio = 1.0;  // every batch sees itself among the candidates
    cfg.max_epochs = 1;
    bool saw_self_pair = false;
    auto observer = [&](const BatchTrace& trace) {
        const auto mask = build_exclusion_mask(trace.query_rows, trace.cand_rows);
        for (std::size_t i = 0; i < trace.query_rows.size(); ++i)
            for (std::size_t j = 0; j < trace.cand_rows.size(); ++j)
                if (trace.query_rows[i] == trace.cand_rows[j]) {
                    saw_self_pair = true;
                    CHECK(mask(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
                }
    };
    train(cfg, data, val, LabelTransform{}, observer);
    CHECK(saw_self_pair);
}

TEST_CASE("run_seeds returns one metric per seed, reproducibly") {
    Dataset data = testutil::make_separable(80, 3, 1.0, 20);
    TrainConfig cfg = small_config();
    cfg.max_epochs = 3;
    std::vector<std::uint64_t> seeds(15);
    std::iota(seeds.begin(), seeds.end(), 0);
    const auto a = run_seeds(cfg, data, seeds, 5);
    REQUIRE(a.metrics.size() == 15);
    const auto b = run_seeds(cfg, data, seeds, 5);
    CHECK(a.metrics == b.metrics);  // bit-exact
    CHECK(a.first_model != nullptr);

    SECTION("single seed has zero std") {
        const auto one = run_seeds(cfg, data, {7}, 5);
        REQUIRE(one.metrics.size() == 1);
        CHECK(one.mean == one.metrics[0]);
        CHECK(one.stddev == 0.0);
    }
}

TEST_CASE("random search picks the best validation trial with earlier-tie rule") {
    Dataset data = testutil::make_separable(60, 3, 1.0, 22);
    const auto prep = prepare_split(data, 3, true);
    TrainConfig base = small_config();
    base.max_epochs = 2;
    SearchSpace space;
    space.n_trials = 4;
    space.blocks_lo = space.blocks_hi = 1;
    space.d_prime_lo = 4;
    space.d_prime_hi = 8;

    const auto result = random_search(space, base, prep.train, prep.val, prep.label_transform, 99);
    REQUIRE(result.trials.size() == 4);
    REQUIRE(result.best_trial >= 0);
    double best = -1.0;
    int best_idx = -1;
    for (const auto& t : result.trials)
        if (!t.failed && t.val_metric > best) {
            best = t.val_metric;
            best_idx = t.trial;
        }
    CHECK(result.best_trial == best_idx);
    CHECK(result.best_val_metric == best);

    SECTION("same master seed reproduces the winner") {
        const auto again =
            random_search(space, base, prep.train, prep.val, prep.label_transform, 99);
        CHECK(again.best_trial == result.best_trial);
        CHECK(again.best_val_metric == result.best_val_metric);
    }
    SECTION("single trial returns that trial") {
        SearchSpace one = space;
        one.n_trials = 1;
        const auto r = random_search(one, base, prep.train, prep.val, prep.label_transform, 1);
        CHECK(r.best_trial == 0);
    }
}

TEST_CASE("config json round trip") {
    TrainConfig cfg = small_config();
    cfg.distance = DistanceKind::l1;
    cfg.sampling = SamplingKind::distance_weighted;
    cfg.tau = 2.5;
    cfg.prediction = PredictionRule::hard_knn;
    cfg.knn_k = 3;
    const auto j = train_config_to_json(cfg);
    const auto back = train_config_from_json(j);
    CHECK(back.distance == cfg.distance);
    CHECK(back.sampling == cfg.sampling);
    CHECK(back.tau == cfg.tau);
    CHECK(back.prediction == cfg.prediction);
    CHECK(back.knn_k == cfg.knn_k);
    CHECK(back.arch.d_prime == cfg.arch.d_prime);
    CHECK(back.arch.plr.sigma == cfg.arch.plr.sigma);

    SECTION("variant shorthand expands the preset") {
        nlohmann::json shorthand{{"variant", "ncav2"}, {"lr", 0.02}};
        const auto c = train_config_from_json(shorthand, TaskKind::classification, 10);
        CHECK(c.arch.variant == Variant::ncav2);
        CHECK(c.loss == LossKind::nca_sum_prob);
        CHECK(c.prediction == PredictionRule::hard_knn);
        CHECK_FALSE(c.full_batch);
        CHECK(c.lr == 0.02);  // explicit override wins
    }
}

TEST_CASE("variant presets encode the Table-2 ladder") {
    const auto v0 = variant_preset(Variant::ncav0, TaskKind::classification, 12);
    CHECK(v0.arch.d_prime == 12);
    CHECK(v0.full_batch);
    CHECK(v0.loss == LossKind::nca_sum_prob);
    CHECK(v0.distance == DistanceKind::squared_euclid);
    CHECK(v0.prediction == PredictionRule::hard_knn);

    const auto v1 = variant_preset(Variant::ncav1, TaskKind::classification, 12);
    CHECK(v1.full_batch);  // SGD arrives at v2
    CHECK(v1.arch.d_prime > 12);

    const auto v2 = variant_preset(Variant::ncav2, TaskKind::classification, 12);
    CHECK_FALSE(v2.full_batch);
    CHECK(v2.loss == LossKind::nca_sum_prob);

    const auto v3 = variant_preset(Variant::ncav3, TaskKind::classification, 12);
    CHECK(v3.loss == LossKind::log_softnn);
    CHECK(v3.prediction == PredictionRule::hard_knn);

    const auto v4 = variant_preset(Variant::ncav4_lnca, TaskKind::classification, 12);
    CHECK(v4.prediction == PredictionRule::soft_nn);
    CHECK(v4.arch.n_blocks == 0);

    const auto m = variant_preset(Variant::modern_nca, TaskKind::classification, 12);
    CHECK(m.arch.n_blocks >= 1);
    CHECK(m.arch.use_plr);
    CHECK(m.distance == DistanceKind::euclid);
    CHECK(m.sns_ratio < 1.0);
}
