// Copyright (c) 2026 ncatab contributors
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "ncatab/diffcore.hpp"

using namespace ncatab;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("linear forward") {
    ParamStore ps(1);
    Linear lin(ps, "lin", 2, 2);
    lin.weight().value = Matrix::Identity(2, 2);
    lin.bias()->value.setZero();
    Matrix x(3, 2);
    x << 1, 2, 3, 4, 5, 6;
    CHECK(lin.forward(x, Mode::eval) == x);

    ParamStore ps2(1);
    Linear lin2(ps2, "lin", 2, 1);
    lin2.weight().value << 1, 1;
    lin2.bias()->value << 0.5;
    Matrix x2(1, 2);
    x2 << 1, 2;
    CHECK(lin2.forward(x2, Mode::eval)(0, 0) == 3.5);
}

TEST_CASE("linear gradient vs finite differences") {
    Rng rng(12);
    ParamStore ps(3);
    Linear lin(ps, "lin", 3, 2);
    Matrix x(4, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const Matrix target = Matrix::Ones(4, 2);
    auto loss_fn = [&]() {
        Matrix y = lin.forward(x, Mode::train);
        lin.discard_contexts();
        return (y - target).squaredNorm();
    };
    Matrix y = lin.forward(x, Mode::train);
    const Matrix dx = lin.backward(2.0 * (y - target));
    CHECK(grad_check(loss_fn, ps).max_rel_err < 1e-6);
    CHECK(grad_check_matrix(loss_fn, x, dx) < 1e-6);
}

TEST_CASE("relu forward and backward") {
    Relu relu;
    Matrix x(1, 3);
    x << -1, 0, 2;
    Matrix y = relu.forward(x, Mode::train);
    CHECK(y(0, 0) == 0.0);
    CHECK(y(0, 1) == 0.0);
    CHECK(y(0, 2) == 2.0);
    const Matrix dx = relu.backward(Matrix::Ones(1, 3));
    CHECK(dx(0, 0) == 0.0);
    CHECK(dx(0, 1) == 0.0);  // subgradient at 0 is 0
    CHECK(dx(0, 2) == 1.0);
}

TEST_CASE("dropout") {
    Rng rng(5);
    Matrix x = Matrix::Ones(200, 500);

    SECTION("rate 0 is the identity in both modes") {
        Dropout drop(0.0);
        CHECK(drop.forward(x, Mode::train, rng) == x);
        CHECK(drop.forward(x, Mode::eval, rng) == x);
        drop.discard_contexts();
    }
    SECTION("eval mode is the identity for any rate") {
        Dropout drop(0.7);
        CHECK(drop.forward(x, Mode::eval, rng) == x);
    }
    SECTION("inverted scaling keeps the expectation") {
        Dropout drop(0.5);
        Matrix y = drop.forward(x, Mode::train, rng);  // 1e5 samples
        drop.discard_contexts();
        CHECK(std::fabs(y.mean() - 1.0) < 0.05);
    }
    SECTION("rate validation") { REQUIRE_THROWS(Dropout(1.0)); }
}

TEST_CASE("batchnorm statistics") {
    ParamStore ps(7);
    BatchNorm1d bn(ps, "bn", 3, 0.1, 1e-12);
    Rng rng(8);
    Matrix x(32, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal(2.0, 3.0);
    const Matrix y = bn.forward(x, Mode::train);
    bn.discard_contexts();
    for (Eigen::Index j = 0; j < 3; ++j) {
        CHECK(std::fabs(y.col(j).mean()) < 1e-10);
        const double var = (y.col(j).array() - y.col(j).mean()).square().sum() / 32.0;
        CHECK(std::fabs(var - 1.0) < 1e-6);
    }

    SECTION("already-normalized input passes through") {
        ParamStore ps2(7);
        BatchNorm1d bn2(ps2, "bn", 2, 0.1, 1e-14);
        Matrix z(4, 2);
        z << 1, -1, -1, 1, 1, 1, -1, -1;  // cols have mean 0 var 1
        const Matrix out = bn2.forward(z, Mode::train);
        bn2.discard_contexts();
        CHECK((out - z).cwiseAbs().maxCoeff() < 1e-6);
    }
    SECTION("train mode rejects single-row batches") {
        REQUIRE_THROWS_WITH(bn.forward(Matrix::Ones(1, 3), Mode::train),
                            ContainsSubstring("batch size >= 2"));
    }
    SECTION("eval mode uses running statistics only") {
        const Matrix e1 = bn.forward(x, Mode::eval);
        const Matrix e2 = bn.forward(x, Mode::eval);
        CHECK(e1 == e2);
    }
}

TEST_CASE("sgd_step") {
    ParamStore ps(0);
    Tensor& t = ps.create("theta", 1, 1);
    t.value(0, 0) = 1.0;
    t.grad(0, 0) = 2.0;
    sgd_step(ps, 0.1);
    CHECK(t.value(0, 0) == Catch::Approx(0.8).margin(1e-15));
    CHECK(t.grad(0, 0) == 0.0);  // gradients zeroed

    SECTION("zero gradient leaves parameters unchanged") {
        const double before = t.value(0, 0);
        sgd_step(ps, 0.5);
        CHECK(t.value(0, 0) == before);
    }
    SECTION("quadratic bowl contracts") {
        t.value(0, 0) = 1.0;
        for (int i = 0; i < 50; ++i) {
            t.grad(0, 0) = 2.0 * t.value(0, 0);  // d/dx x^2
            sgd_step(ps, 0.1);
        }
        CHECK(std::fabs(t.value(0, 0)) < 1e-4);
        // closed form: (1 - 2 lr)^50
        CHECK(t.value(0, 0) == Catch::Approx(std::pow(0.8, 50)).epsilon(1e-12));
    }
    SECTION("non-finite gradient is reported with the parameter name") {
        t.grad(0, 0) = std::numeric_limits<double>::quiet_NaN();
        REQUIRE_THROWS_WITH(sgd_step(ps, 0.1), ContainsSubstring("theta"));
    }
    SECTION("weight decay") {
        t.value(0, 0) = 1.0;
        t.grad(0, 0) = 0.0;
        sgd_step(ps, 0.1, 0.5);
        CHECK(t.value(0, 0) == Catch::Approx(0.95).margin(1e-15));
    }
}

TEST_CASE("plr encoder") {
    ParamStore ps(4);
    PlrEncoder plr(ps, "plr", 2, 3, 4, 0.2);

    SECTION("x = 0 gives the sin/cos base point") {
        // periodic stage at 0 is [sin 0, cos 0, ...] = [0, 1, 0, 1, 0, 1];
        // the output is relu(bias + sum of cos-row weights), per feature
        Matrix x = Matrix::Zero(1, 2);
        Matrix y = plr.forward(x, Mode::eval);
        Tensor* W = ps.find("plr.shared.W");
        Tensor* b = ps.find("plr.shared.b");
        for (int f = 0; f < 2; ++f) {
            for (int k = 0; k < 4; ++k) {
                double z = b->value(0, k);
                for (int t = 0; t < 3; ++t) z += W->value(2 * t + 1, k);  // cos rows
                CHECK(y(0, f * 4 + k) == Catch::Approx(std::max(0.0, z)).margin(1e-14));
            }
        }
    }
    SECTION("shared linear map affects every feature block") {
        Matrix x(2, 2);
        x << 0.3, -0.7, 1.1, 0.4;
        const Matrix y0 = plr.forward(x, Mode::eval);
        ps.find("plr.shared.W")->value.array() += 0.25;
        const Matrix y1 = plr.forward(x, Mode::eval);
        const Matrix diff = (y1 - y0).cwiseAbs();
        CHECK(diff.leftCols(4).maxCoeff() > 1e-6);   // feature 0 block moved
        CHECK(diff.rightCols(4).maxCoeff() > 1e-6);  // feature 1 block moved
    }
    SECTION("frequency gradients match finite differences") {
        Rng rng(13);
        Matrix x(4, 2);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
        const Matrix r = Matrix::Ones(4, plr.out_width());
        auto loss_fn = [&]() {
            Matrix y = plr.forward(x, Mode::train);
            plr.discard_contexts();
            return y.cwiseProduct(r).sum() + y.squaredNorm();
        };
        Matrix y = plr.forward(x, Mode::train);
        const Matrix dx = plr.backward(r + 2.0 * y);
        CHECK(grad_check(loss_fn, ps).max_rel_err < 1e-5);
        CHECK(grad_check_matrix(loss_fn, x, dx) < 1e-5);
    }
}

TEST_CASE("deterministic initialization and dropout masks") {
    ParamStore a(42), b(42);
    Linear la(a, "l", 5, 4), lb(b, "l", 5, 4);
    CHECK(la.weight().value == lb.weight().value);
    CHECK(la.bias()->value == lb.bias()->value);

    Rng ra(derive_seed(42, 2)), rb(derive_seed(42, 2));
    Dropout da(0.4), db(0.4);
    Matrix x = Matrix::Ones(6, 6);
    CHECK(da.forward(x, Mode::train, ra) == db.forward(x, Mode::train, rb));
    da.discard_contexts();
    db.discard_contexts();
}

TEST_CASE("param store text serialization is bit-exact") {
    ParamStore ps(11);
    Linear lin(ps, "lin", 3, 2);
    BatchNorm1d bn(ps, "bn", 2);
    Rng drop_rng(derive_seed(11, 2));
    Matrix x(5, 3);
    Rng rng(1);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    bn.forward(lin.forward(x, Mode::eval), Mode::train);  // move running stats off init
    bn.discard_contexts();
    drop_rng.uniform();  // advance

    std::ostringstream os;
    write_param_store(os, ps, drop_rng);

    ParamStore ps2(11);
    Linear lin2(ps2, "lin", 3, 2);
    BatchNorm1d bn2(ps2, "bn", 2);
    Rng drop_rng2(0);
    std::istringstream is(os.str());
    read_param_store(is, ps2, drop_rng2);

    const auto ta = ps.tensors();
    const auto tb = ps2.tensors();
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
        INFO(ta[i]->name);
        CHECK(ta[i]->value == tb[i]->value);  // exact doubles
    }
    CHECK(drop_rng.save_state() == drop_rng2.save_state());
    CHECK(ps.init_rng().save_state() == ps2.init_rng().save_state());
}

TEST_CASE("grad_check detects a corrupted backward pass") {
    ParamStore ps(2);
    Linear lin(ps, "lin", 3, 2);
    Rng rng(3);
    Matrix x(4, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    auto loss_fn = [&]() {
        Matrix y = lin.forward(x, Mode::train);
        lin.discard_contexts();
        return y.squaredNorm();
    };
    Matrix y = lin.forward(x, Mode::train);
    lin.backward(-2.0 * y);  // sign flip
    CHECK(grad_check(loss_fn, ps).max_rel_err > 0.1);
}

TEST_CASE("layer context discipline") {
    ParamStore ps(1);
    Linear lin(ps, "lin", 2, 2);
    REQUIRE_THROWS_WITH(lin.backward(Matrix::Ones(1, 2)),
                        ContainsSubstring("backward without matching forward"));
    // LIFO: two forwards, then two backwards in reverse order
    Matrix a = Matrix::Ones(1, 2), b = 2.0 * Matrix::Ones(2, 2);
    lin.forward(a, Mode::train);
    lin.forward(b, Mode::train);
    lin.backward(Matrix::Ones(2, 2));
    lin.backward(Matrix::Ones(1, 2));
    REQUIRE_THROWS(lin.backward(Matrix::Ones(1, 2)));
}
