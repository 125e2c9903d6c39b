// Copyright (c) 2026 ncatab contributors
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "ncatab/losses.hpp"

using namespace ncatab;

namespace {

Matrix weights_2x2(double a, double b, double c, double d) {
    Matrix w(2, 2);
    w << a, b, c, d;
    return w;
}

}  // namespace

TEST_CASE("log soft-NN loss") {
    SECTION("all candidates share the target class") {
        Matrix w = weights_2x2(0.4, 0.6, 0.3, 0.7);
        const Matrix sc = Matrix::Ones(2, 2);
        const auto r = loss_log_softnn(w, sc);
        CHECK(r.value == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("half weight on the target class costs ln 2") {
        Matrix w(1, 2);
        w << 0.5, 0.5;
        const Matrix sc = same_class_matrix({0}, std::vector<int>{0, 1});
        const auto r = loss_log_softnn(w, sc);
        CHECK(r.value == Catch::Approx(std::log(2.0)).margin(1e-12));
        // gradient routes -1/(p B) into the same-class entry
        CHECK(r.dW(0, 0) == Catch::Approx(-2.0).margin(1e-12));
        CHECK(r.dW(0, 1) == 0.0);
    }
    SECTION("no same-class candidate stays finite with zero gradient") {
        Matrix w(1, 2);
        w << 0.5, 0.5;
        const Matrix sc = Matrix::Zero(1, 2);
        const auto r = loss_log_softnn(w, sc);
        CHECK(r.value == Catch::Approx(-std::log(1e-12)));
        CHECK(std::isfinite(r.value));
        CHECK(r.dW.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("soft-NN mse loss") {
    SECTION("single candidate equal to the target") {
        Matrix w = Matrix::Ones(1, 1);
        Matrix vals = Matrix::Constant(1, 1, 3.0);
        Vector targets = Vector::Constant(1, 3.0);
        CHECK(loss_mse_softnn(w, vals, targets).value == 0.0);
    }
    SECTION("squared error contribution") {
        Matrix w = Matrix::Ones(1, 1);
        Matrix vals = Matrix::Constant(1, 1, 2.0);  // prediction 2
        Vector targets = Vector::Zero(1);
        CHECK(loss_mse_softnn(w, vals, targets).value == Catch::Approx(4.0));
    }
    SECTION("gradient direction") {
        Matrix w(1, 2);
        w << 0.5, 0.5;
        Matrix vals(1, 2);
        vals << 1.0, 3.0;  // prediction 2
        Vector targets = Vector::Zero(1);
        const auto r = loss_mse_softnn(w, vals, targets);
        CHECK(r.dW(0, 0) == Catch::Approx(2.0 * 2.0 * 1.0));  // 2 err v_j / B
        CHECK(r.dW(0, 1) == Catch::Approx(2.0 * 2.0 * 3.0));
    }
}

TEST_CASE("original NCA sum-of-probability loss in affine form") {
    const Matrix sc = same_class_matrix({0, 0}, std::vector<int>{0, 1});
    SECTION("p = 1 gives 0") {
        Matrix w = weights_2x2(1.0, 0.0, 1.0, 0.0);
        CHECK(loss_nca_sum_prob(w, sc).value == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("p = 0.25 gives 0.75") {
        Matrix w(1, 2);
        w << 0.25, 0.75;
        const Matrix sc1 = same_class_matrix({0}, std::vector<int>{0, 1});
        CHECK(loss_nca_sum_prob(w, sc1).value == Catch::Approx(0.75));
    }
    SECTION("batch mean of (1, 0.5) posteriors") {
        Matrix w = weights_2x2(1.0, 0.0, 0.5, 0.5);
        CHECK(loss_nca_sum_prob(w, sc).value == Catch::Approx(0.25));
    }
}

TEST_CASE("mcml KL loss") {
    const BoolMatrix mask = BoolMatrix::Constant(1, 2, false);
    SECTION("uniform weights on exactly the same-class set give zero") {
        Matrix w(1, 2);
        w << 0.5, 0.5;
        const Matrix sc = Matrix::Ones(1, 2);
        const auto r = loss_mcml(w, sc, mask);
        CHECK(r.value == Catch::Approx(0.0).margin(1e-12));
        CHECK(r.skipped == 0);
    }
    SECTION("t=(1,0) against W=(0.5,0.5) costs ln 2") {
        Matrix w(1, 2);
        w << 0.5, 0.5;
        const Matrix sc = same_class_matrix({0}, std::vector<int>{0, 1});
        CHECK(loss_mcml(w, sc, mask).value == Catch::Approx(std::log(2.0)).margin(1e-12));
    }
    SECTION("queries without same-class support are skipped and counted") {
        Matrix w = weights_2x2(0.5, 0.5, 0.9, 0.1);
        Matrix sc(2, 2);
        sc << 0, 0, 1, 0;  // first query has no same-class candidate
        const auto r = loss_mcml(w, sc, BoolMatrix::Constant(2, 2, false));
        CHECK(r.skipped == 1);
        CHECK(std::isfinite(r.value));
        CHECK(r.dW.row(0).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("clamp keeps gradients finite when W vanishes on the support") {
        Matrix w(1, 2);
        w << 0.0, 1.0;
        const Matrix sc = same_class_matrix({0}, std::vector<int>{0, 1});
        const auto r = loss_mcml(w, sc, mask);
        CHECK(std::isfinite(r.value));
        CHECK(r.dW.allFinite());
    }
}

TEST_CASE("t-distribution loss wraps the task head") {
    Matrix d(1, 2);
    d << 0.0, 1.0;
    const BoolMatrix mask = BoolMatrix::Constant(1, 2, false);
    SECTION("classification head sees the t-kernel weights") {
        const Matrix sc = same_class_matrix({0}, std::vector<int>{0, 1});
        const auto out = loss_t_distribution_classification(d, mask, sc, 1.0);
        // weights (2/3, 1/3) -> -log(2/3)
        CHECK(out.head.value == Catch::Approx(-std::log(2.0 / 3.0)).margin(1e-12));
    }
    SECTION("regression head") {
        Matrix vals(1, 2);
        vals << 3.0, 0.0;
        Vector targets = Vector::Constant(1, 2.0);
        const auto out = loss_t_distribution_regression(d, mask, vals, targets, 1.0);
        CHECK(out.head.value == Catch::Approx(0.0).margin(1e-12));  // prediction 2
    }
}

TEST_CASE("losses are nonnegative and vanish exactly at their optimum") {
    Rng rng(21);
    for (int t = 0; t < 200; ++t) {
        const Eigen::Index b = 1 + static_cast<Eigen::Index>(rng.uniform_int(3));
        const Eigen::Index m = 2 + static_cast<Eigen::Index>(rng.uniform_int(4));
        Matrix w(b, m);
        for (Eigen::Index i = 0; i < b; ++i) {
            double s = 0;
            for (Eigen::Index j = 0; j < m; ++j) {
                w(i, j) = rng.uniform() + 1e-6;
                s += w(i, j);
            }
            w.row(i) /= s;
        }
        std::vector<int> targets(static_cast<std::size_t>(b)), classes(static_cast<std::size_t>(m));
        for (auto& c : targets) c = static_cast<int>(rng.uniform_int(2));
        for (auto& c : classes) c = static_cast<int>(rng.uniform_int(2));
        // keep at least one same-class candidate per query
        classes[0] = targets.empty() ? 0 : targets[0];
        const Matrix sc = same_class_matrix(targets, classes);
        // rows are normalized in floating point, so p can exceed 1 by ~1 ulp
        CHECK(loss_log_softnn(w, sc).value >= -1e-12);
        CHECK(loss_nca_sum_prob(w, sc).value >= -1e-12);
        CHECK(loss_mcml(w, sc, BoolMatrix::Constant(b, m, false)).value >= -1e-12);
    }
}
