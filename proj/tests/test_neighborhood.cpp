// Copyright (c) 2026 ncatab contributors
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "ncatab/diffcore.hpp"
#include "ncatab/neighborhood.hpp"

using namespace ncatab;
using Catch::Matchers::ContainsSubstring;

namespace {

Matrix rand_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double s = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = s * rng.normal();
    return m;
}

}  // namespace

TEST_CASE("pairwise distance kinds") {
    Matrix q(1, 2), k(1, 2);
    q << 0, 0;
    k << 3, 4;
    CHECK(pairwise_distance(q, k, DistanceKind::euclid).D(0, 0) == Catch::Approx(5.0).margin(1e-9));
    CHECK(pairwise_distance(q, k, DistanceKind::squared_euclid).D(0, 0) == Catch::Approx(25.0));
    CHECK(pairwise_distance(q, k, DistanceKind::l1).D(0, 0) == Catch::Approx(7.0));

    SECTION("coincident points") {
        const auto d = pairwise_distance(k, k, DistanceKind::euclid);
        CHECK(d.D(0, 0) <= 1.1e-6);  // sqrt(eps)
        const auto nd = pairwise_distance(k, k, DistanceKind::neg_dot);
        CHECK(nd.D(0, 0) == Catch::Approx(-25.0));
    }
    SECTION("orthogonal unit vectors") {
        Matrix a(1, 2), b(1, 2);
        a << 1, 0;
        b << 0, 1;
        CHECK(pairwise_distance(a, b, DistanceKind::neg_cosine).D(0, 0) ==
              Catch::Approx(0.0).margin(1e-15));
        CHECK(pairwise_distance(a, b, DistanceKind::euclid).D(0, 0) ==
              Catch::Approx(std::sqrt(2.0)).margin(1e-9));
    }
    SECTION("width mismatch") {
        Matrix bad(1, 3);
        REQUIRE_THROWS_WITH(pairwise_distance(q, bad, DistanceKind::euclid),
                            ContainsSubstring("width mismatch"));
    }
    SECTION("zero vector under neg_cosine gives distance 0") {
        Matrix z = Matrix::Zero(1, 2);
        const auto d = pairwise_distance(z, k, DistanceKind::neg_cosine);
        CHECK(d.D(0, 0) == 0.0);
        const auto g = pairwise_distance_backward(d, Matrix::Ones(1, 1));
        CHECK(g.dQ.cwiseAbs().maxCoeff() == 0.0);  // flat by contract
    }
}

TEST_CASE("softnn weights") {
    SECTION("single unmasked candidate takes all the weight") {
        Matrix d(1, 3);
        d << 0.3, 0.9, 2.0;
        BoolMatrix mask(1, 3);
        mask << true, false, true;
        const auto w = weights_from_distances(d, mask);
        CHECK(w.W(0, 0) == 0.0);
        CHECK(w.W(0, 1) == 1.0);
        CHECK(w.W(0, 2) == 0.0);
    }
    SECTION("equidistant candidates split evenly") {
        Matrix d = Matrix::Constant(1, 2, 1.7);
        const auto w = weights_from_distances(d, no_mask(1, 2));
        CHECK(w.W(0, 0) == Catch::Approx(0.5).margin(1e-15));
        CHECK(w.W(0, 1) == Catch::Approx(0.5).margin(1e-15));
    }
    SECTION("distances (0, ln 2) give weights (2/3, 1/3)") {
        Matrix d(1, 2);
        d << 0.0, std::log(2.0);
        const auto w = weights_from_distances(d, no_mask(1, 2));
        CHECK(w.W(0, 0) == Catch::Approx(2.0 / 3.0).margin(1e-12));
        CHECK(w.W(0, 1) == Catch::Approx(1.0 / 3.0).margin(1e-12));
    }
    SECTION("fully masked row is an error") {
        Matrix d = Matrix::Ones(1, 2);
        BoolMatrix mask = BoolMatrix::Constant(1, 2, true);
        REQUIRE_THROWS_WITH(weights_from_distances(d, mask),
                            ContainsSubstring("fully-masked"));
    }
    SECTION("rows sum to one under extreme distances") {
        Matrix d(2, 3);
        d << 1e4, 0.0, 2e4, -3e3, -3e3, 5.0;  // log-sum-exp territory
        const auto w = weights_from_distances(d, no_mask(2, 3));
        CHECK(std::fabs(w.W.row(0).sum() - 1.0) < 1e-12);
        CHECK(std::fabs(w.W.row(1).sum() - 1.0) < 1e-12);
        CHECK(w.W.allFinite());
    }
}

TEST_CASE("softnn predict") {
    SECTION("all candidates share the target class") {
        Matrix d = Matrix::Ones(1, 3);
        const auto w = weights_from_distances(d, no_mask(1, 3));
        const Matrix pred = softnn_predict(w, one_hot_labels({2, 2, 2}, 3));
        CHECK(pred(0, 2) == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("weighted scalar average") {
        Matrix d(1, 2);
        d << 0.0, std::log(2.0);  // weights (2/3, 1/3)
        const auto w = weights_from_distances(d, no_mask(1, 2));
        Vector labels(2);
        labels << 3.0, 0.0;
        CHECK(softnn_predict(w, labels)(0, 0) == Catch::Approx(2.0).margin(1e-12));
    }
    SECTION("even split over two one-hot labels") {
        Matrix d = Matrix::Constant(1, 2, 0.4);
        const auto w = weights_from_distances(d, no_mask(1, 2));
        const Matrix pred = softnn_predict(w, one_hot_labels({0, 1}, 2));
        CHECK(pred(0, 0) == Catch::Approx(0.5).margin(1e-15));
        CHECK(pred(0, 1) == Catch::Approx(0.5).margin(1e-15));
    }
    SECTION("label count mismatch") {
        Matrix d = Matrix::Ones(1, 2);
        const auto w = weights_from_distances(d, no_mask(1, 2));
        REQUIRE_THROWS(softnn_predict(w, one_hot_labels({0}, 2)));
    }
}

TEST_CASE("t-distribution kernel") {
    SECTION("equidistant split is kernel independent") {
        Matrix d = Matrix::Constant(1, 2, 1.3);
        const auto w = weights_from_distances(d, no_mask(1, 2), KernelKind::t_dist, 1.0);
        CHECK(w.W(0, 0) == Catch::Approx(0.5).margin(1e-15));
    }
    SECTION("nu=1 distances (0,1) give (2/3, 1/3)") {
        Matrix d(1, 2);
        d << 0.0, 1.0;
        const auto w = weights_from_distances(d, no_mask(1, 2), KernelKind::t_dist, 1.0);
        CHECK(w.W(0, 0) == Catch::Approx(2.0 / 3.0).margin(1e-12));
        CHECK(w.W(0, 1) == Catch::Approx(1.0 / 3.0).margin(1e-12));
    }
    SECTION("kernel mass decreases in distance for all nu > 0") {
        for (double nu : {0.5, 1.0, 2.0, 10.0}) {
            double prev = std::numeric_limits<double>::infinity();
            for (double dist : {0.0, 0.5, 1.0, 2.0, 5.0}) {
                const double mass = std::pow(1.0 + dist * dist / nu, -(nu + 1.0) / 2.0);
                CHECK(mass < prev);
                prev = mass;
            }
        }
    }
}

TEST_CASE("exclusion mask") {
    SECTION("query subset of candidates marks exactly one entry per row") {
        const auto mask = build_exclusion_mask({3, 5}, {1, 3, 5, 7});
        CHECK(mask.cast<int>().rowwise().sum()(0) == 1);
        CHECK(mask.cast<int>().rowwise().sum()(1) == 1);
        CHECK(mask(0, 1));
        CHECK(mask(1, 2));
    }
    SECTION("disjoint sets give an all-false mask") {
        const auto mask = build_exclusion_mask({0, 1}, {2, 3, 4});
        CHECK(!mask.any());
    }
}

TEST_CASE("softnn weight gradients match finite differences for every kind") {
    Rng rng(77);
    for (auto kind : {DistanceKind::euclid, DistanceKind::squared_euclid, DistanceKind::l1,
                      DistanceKind::neg_cosine, DistanceKind::neg_dot}) {
        for (auto kernel : {KernelKind::exp_neg, KernelKind::t_dist}) {
            Matrix q = rand_matrix(rng, 3, 4);
            Matrix k = rand_matrix(rng, 5, 4);
            const Matrix r = rand_matrix(rng, 3, 5);  // random linear functional of W
            BoolMatrix mask = no_mask(3, 5);
            mask(0, 2) = true;
            auto loss_fn = [&]() {
                const auto s = softnn_weights(q, k, kind, mask, kernel, 1.5);
                return s.weights.W.cwiseProduct(r).sum();
            };
            const auto s = softnn_weights(q, k, kind, mask, kernel, 1.5);
            const auto g = softnn_backward(s, r);
            INFO(to_string(kind) << (kernel == KernelKind::t_dist ? " t" : " exp"));
            CHECK(grad_check_matrix(loss_fn, q, g.dQ) < 1e-4);
            CHECK(grad_check_matrix(loss_fn, k, g.dK) < 1e-4);
        }
    }
}

TEST_CASE("sample_random") {
    Rng rng(4);
    SECTION("ratio 1 returns every index") {
        const auto all = sample_random(10, 1.0, rng);
        std::vector<int> expect(10);
        std::iota(expect.begin(), expect.end(), 0);
        CHECK(all == expect);
    }
    SECTION("ceiling rule") { CHECK(sample_random(10, 0.3, rng).size() == 3); }
    SECTION("uniform marginals over many draws") {
        std::vector<int> counts(10, 0);
        const int trials = 10000;
        for (int t = 0; t < trials; ++t)
            for (int i : sample_random(10, 0.5, rng)) ++counts[static_cast<std::size_t>(i)];
        // each index is a Bernoulli(0.5) per draw: 3 sigma = 3*sqrt(n/4)
        const double expect = trials * 0.5;
        const double band = 3.0 * std::sqrt(trials * 0.25);
        for (int c : counts) CHECK(std::fabs(c - expect) <= band);
    }
    SECTION("ratio validation") { REQUIRE_THROWS(sample_random(10, 0.0, rng)); }
}

TEST_CASE("sample_classwise") {
    Rng rng(5);
    const std::vector<int> labels{0, 0, 0, 0, 0, 0, 0, 0, 1, 1};  // sizes (8, 2)
    SECTION("ratio 1 returns everything") {
        CHECK(sample_classwise(labels, 1.0, rng).size() == 10);
    }
    SECTION("ceiling per class keeps both classes present") {
        for (int t = 0; t < 200; ++t) {
            const auto s = sample_classwise(labels, 0.5, rng);
            CHECK(s.size() == 5);  // 4 + 1
            bool has0 = false, has1 = false;
            for (int i : s) (labels[static_cast<std::size_t>(i)] == 0 ? has0 : has1) = true;
            CHECK(has0);
            CHECK(has1);
        }
    }
    SECTION("tiny ratios never empty a class") {
        for (int t = 0; t < 200; ++t) {
            const auto s = sample_classwise(labels, 0.01, rng);
            bool has1 = false;
            for (int i : s) has1 = has1 || labels[static_cast<std::size_t>(i)] == 1;
            CHECK(has1);
        }
    }
}

TEST_CASE("sample_distance_weighted") {
    Rng rng(6);
    SECTION("tau 0 degrades to uniform") {
        Matrix batch = Matrix::Zero(1, 2);
        Matrix train = rand_matrix(rng, 10, 2);
        std::vector<int> counts(10, 0);
        const int trials = 10000;
        for (int t = 0; t < trials; ++t) {
            const auto sets = sample_distance_weighted(batch, train, 0.5, 0.0, rng);
            for (int i : sets[0]) ++counts[static_cast<std::size_t>(i)];
        }
        const double expect = trials * 0.5;
        const double band = 3.0 * std::sqrt(trials * 0.25);
        for (int c : counts) CHECK(std::fabs(c - expect) <= band);
    }
    SECTION("reciprocal-distance marginals for a single draw") {
        Matrix batch = Matrix::Zero(1, 1);
        Matrix train(2, 1);
        train << 1.0, 2.0;  // distances (1, 2); tau=1 -> probabilities (2/3, 1/3)
        int first = 0;
        const int trials = 30000;
        for (int t = 0; t < trials; ++t)
            if (sample_distance_weighted(batch, train, 0.5, 1.0, rng)[0][0] == 0) ++first;
        const double p = 2.0 / 3.0;
        const double band = 3.0 * std::sqrt(trials * p * (1 - p));
        CHECK(std::fabs(first - trials * p) <= band);
    }
    SECTION("ratio 1 returns all indices regardless of tau") {
        Matrix batch = rand_matrix(rng, 2, 3);
        Matrix train = rand_matrix(rng, 7, 3);
        const auto sets = sample_distance_weighted(batch, train, 1.0, 3.0, rng);
        for (const auto& s : sets) CHECK(s.size() == 7);
    }
}

TEST_CASE("regression prediction stays in candidate range") {
    Rng rng(14);
    for (int t = 0; t < 300; ++t) {
        Matrix q = rand_matrix(rng, 2, 3);
        Matrix k = rand_matrix(rng, 6, 3);
        const auto s = softnn_weights(q, k, DistanceKind::euclid, no_mask(2, 6));
        Vector vals(6);
        for (int j = 0; j < 6; ++j) vals[j] = rng.normal(0, 5);
        const Matrix pred = softnn_predict(s.weights, vals);
        for (Eigen::Index i = 0; i < 2; ++i) {
            CHECK(pred(i, 0) >= vals.minCoeff() - 1e-12);
            CHECK(pred(i, 0) <= vals.maxCoeff() + 1e-12);
        }
    }
}
