// Copyright (c) 2026 ncatab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ncatab/common.hpp"

namespace ncatab {

enum class Mode { train, eval };

/// Named parameter tensor with a gradient accumulator of identical shape.
/// Non-trainable tensors (batch-norm running statistics) ride along so that
/// checkpointing and best-epoch snapshots cover them uniformly.
struct Tensor {
    std::string name;
    Matrix value;
    Matrix grad;
    bool trainable = true;
};

class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0)
        : init_seed_(seed), init_rng_(derive_seed(seed, /*stream=*/1)) {}

    Tensor& create(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                   bool trainable = true) {
        check(find(name) == nullptr, "ParamStore: duplicate tensor name '" + name + "'");
        auto t = std::make_unique<Tensor>();
        t->name = name;
        t->value.setZero(rows, cols);
        t->grad.setZero(rows, cols);
        t->trainable = trainable;
        tensors_.push_back(std::move(t));
        return *tensors_.back();
    }

    Tensor* find(const std::string& name) {
        for (auto& t : tensors_)
            if (t->name == name) return t.get();
        return nullptr;
    }

    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out;
        out.reserve(tensors_.size());
        for (auto& t : tensors_) out.push_back(t.get());
        return out;
    }

    std::vector<const Tensor*> tensors() const {
        std::vector<const Tensor*> out;
        out.reserve(tensors_.size());
        for (const auto& t : tensors_) out.push_back(t.get());
        return out;
    }

    void zero_grads() {
        for (auto& t : tensors_) t->grad.setZero();
    }

    std::size_t trainable_scalar_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors_)
            if (t->trainable) n += static_cast<std::size_t>(t->value.size());
        return n;
    }

    std::vector<Matrix> snapshot() const {
        std::vector<Matrix> out;
        out.reserve(tensors_.size());
        for (const auto& t : tensors_) out.push_back(t->value);
        return out;
    }

    void restore(const std::vector<Matrix>& snap) {
        check(snap.size() == tensors_.size(), "ParamStore::restore: snapshot size mismatch");
        for (std::size_t i = 0; i < snap.size(); ++i) tensors_[i]->value = snap[i];
    }

    Rng& init_rng() { return init_rng_; }
    const Rng& init_rng() const { return init_rng_; }
    std::uint64_t init_seed() const { return init_seed_; }

private:
    std::vector<std::unique_ptr<Tensor>> tensors_;
    std::uint64_t init_seed_;
    Rng init_rng_;
};

/// theta <- theta - lr * (grad + weight_decay * theta), then zero all grads.
inline void sgd_step(ParamStore& params, double lr, double weight_decay = 0.0) {
    check(lr > 0.0, "sgd_step: lr must be positive");
    check(weight_decay >= 0.0, "sgd_step: weight_decay must be >= 0");
    for (Tensor* t : params.tensors()) {
        if (!t->trainable) continue;
        if (!t->grad.allFinite())
            fail("sgd_step: non-finite gradient in parameter '" + t->name + "'");
        t->value.noalias() -= lr * (t->grad + weight_decay * t->value);
    }
    params.zero_grads();
}

// ---------------------------------------------------------------------------
// Layers. Each forward in train mode pushes a context; backward pops it
// (LIFO), so two forwards through the same model may precede their two
// backwards as long as the order is reversed.
// ---------------------------------------------------------------------------

class Linear {
public:
    Linear(ParamStore& ps, const std::string& name, Eigen::Index in, Eigen::Index out,
           bool with_bias = true)
        : W_(&ps.create(name + ".W", in, out)),
          b_(with_bias ? &ps.create(name + ".b", 1, out) : nullptr) {
        const double k = 1.0 / std::sqrt(static_cast<double>(in));
        Rng& rng = ps.init_rng();
        for (Eigen::Index i = 0; i < in; ++i)
            for (Eigen::Index j = 0; j < out; ++j) W_->value(i, j) = rng.uniform(-k, k);
        if (b_)
            for (Eigen::Index j = 0; j < out; ++j) b_->value(0, j) = rng.uniform(-k, k);
    }

    Matrix forward(const Matrix& x, Mode mode) {
        check(x.cols() == W_->value.rows(),
              "linear '" + W_->name + "': input width " + std::to_string(x.cols()) +
                  " != " + std::to_string(W_->value.rows()));
        Matrix y = x * W_->value;
        if (b_) y.rowwise() += b_->value.row(0);
        if (mode == Mode::train) ctx_.push_back(x);
        return y;
    }

    Matrix backward(const Matrix& dy) {
        check(!ctx_.empty(), "linear '" + W_->name + "': backward without matching forward");
        const Matrix x = std::move(ctx_.back());
        ctx_.pop_back();
        W_->grad.noalias() += x.transpose() * dy;
        if (b_) b_->grad.row(0) += dy.colwise().sum();
        return dy * W_->value.transpose();
    }

    Eigen::Index out_width() const { return W_->value.cols(); }
    Tensor& weight() { return *W_; }
    Tensor* bias() { return b_; }
    void discard_contexts() { ctx_.clear(); }

private:
    Tensor* W_;
    Tensor* b_;
    std::vector<Matrix> ctx_;
};

class Relu {
public:
    Matrix forward(const Matrix& x, Mode mode) {
        Matrix y = x.cwiseMax(0.0);
        if (mode == Mode::train) ctx_.push_back((x.array() > 0.0).cast<double>().matrix());
        return y;
    }

    // subgradient at exactly 0 is 0
    Matrix backward(const Matrix& dy) {
        check(!ctx_.empty(), "relu: backward without matching forward");
        const Matrix mask = std::move(ctx_.back());
        ctx_.pop_back();
        return dy.cwiseProduct(mask);
    }

    void discard_contexts() { ctx_.clear(); }

private:
    std::vector<Matrix> ctx_;
};

/// Inverted dropout: survivors are scaled by 1/(1-rate) at train time and
/// eval is the identity.
class Dropout {
public:
    explicit Dropout(double rate) : rate_(rate) {
        check(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
    }

    Matrix forward(const Matrix& x, Mode mode, Rng& rng) {
        if (mode == Mode::eval || rate_ == 0.0) {
            if (mode == Mode::train) ctx_.push_back(Matrix());  // empty = identity
            return x;
        }
        const double keep = 1.0 - rate_;
        Matrix mask(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            for (Eigen::Index j = 0; j < x.cols(); ++j)
                mask(i, j) = rng.uniform() < rate_ ? 0.0 : 1.0 / keep;
        ctx_.push_back(mask);
        return x.cwiseProduct(mask);
    }

    Matrix backward(const Matrix& dy) {
        check(!ctx_.empty(), "dropout: backward without matching forward");
        const Matrix mask = std::move(ctx_.back());
        ctx_.pop_back();
        if (mask.size() == 0) return dy;
        return dy.cwiseProduct(mask);
    }

    double rate() const { return rate_; }
    void discard_contexts() { ctx_.clear(); }

private:
    double rate_;
    std::vector<Matrix> ctx_;
};

/// One-dimensional batch normalization with learned scale/shift and running
/// statistics for eval mode. Train mode normalizes by batch statistics
/// (population variance) and requires B >= 2.
class BatchNorm1d {
public:
    BatchNorm1d(ParamStore& ps, const std::string& name, Eigen::Index width,
                double momentum = 0.1, double epsilon = 1e-5)
        : gamma_(&ps.create(name + ".gamma", 1, width)),
          beta_(&ps.create(name + ".beta", 1, width)),
          running_mean_(&ps.create(name + ".running_mean", 1, width, /*trainable=*/false)),
          running_var_(&ps.create(name + ".running_var", 1, width, /*trainable=*/false)),
          momentum_(momentum),
          epsilon_(epsilon) {
        check(momentum > 0.0 && momentum <= 1.0, "batchnorm: momentum must be in (0, 1]");
        check(epsilon > 0.0, "batchnorm: epsilon must be positive");
        gamma_->value.setOnes();
        running_var_->value.setOnes();
    }

    Matrix forward(const Matrix& x, Mode mode) {
        const auto p = gamma_->value.cols();
        check(x.cols() == p, "batchnorm: width mismatch");
        if (mode == Mode::eval) {
            Matrix y(x.rows(), p);
            for (Eigen::Index j = 0; j < p; ++j) {
                const double inv = 1.0 / std::sqrt(running_var_->value(0, j) + epsilon_);
                y.col(j) = ((x.col(j).array() - running_mean_->value(0, j)) * inv) *
                               gamma_->value(0, j) +
                           beta_->value(0, j);
            }
            return y;
        }
        const double b = static_cast<double>(x.rows());
        check(x.rows() >= 2, "batchnorm: train mode requires batch size >= 2");
        Ctx ctx;
        ctx.xhat.resize(x.rows(), p);
        ctx.invstd.resize(p);
        for (Eigen::Index j = 0; j < p; ++j) {
            const double mean = x.col(j).mean();
            const double var = (x.col(j).array() - mean).square().sum() / b;
            const double invstd = 1.0 / std::sqrt(var + epsilon_);
            ctx.xhat.col(j) = (x.col(j).array() - mean) * invstd;
            ctx.invstd[j] = invstd;
            // running update: unbiased variance estimate
            const double unbiased = b > 1.5 ? var * b / (b - 1.0) : var;
            running_mean_->value(0, j) =
                (1.0 - momentum_) * running_mean_->value(0, j) + momentum_ * mean;
            running_var_->value(0, j) =
                (1.0 - momentum_) * running_var_->value(0, j) + momentum_ * unbiased;
        }
        Matrix y = ctx.xhat;
        for (Eigen::Index j = 0; j < p; ++j)
            y.col(j) = y.col(j) * gamma_->value(0, j) + Vector::Constant(x.rows(), beta_->value(0, j));
        ctx_.push_back(std::move(ctx));
        return y;
    }

    Matrix backward(const Matrix& dy) {
        check(!ctx_.empty(), "batchnorm: backward without matching forward");
        Ctx ctx = std::move(ctx_.back());
        ctx_.pop_back();
        const double b = static_cast<double>(dy.rows());
        const auto p = dy.cols();
        Matrix dx(dy.rows(), p);
        for (Eigen::Index j = 0; j < p; ++j) {
            const auto xhat = ctx.xhat.col(j).array();
            const auto g = dy.col(j).array();
            gamma_->grad(0, j) += (g * xhat).sum();
            beta_->grad(0, j) += g.sum();
            const double sum_g = g.sum();
            const double sum_gx = (g * xhat).sum();
            // full batch-statistics chain rule at fixed gamma
            dx.col(j) = (gamma_->value(0, j) * ctx.invstd[j] / b) *
                        (b * g - sum_g - xhat * sum_gx).matrix();
        }
        return dx;
    }

    double epsilon() const { return epsilon_; }
    double momentum() const { return momentum_; }
    void discard_contexts() { ctx_.clear(); }
    Tensor& running_mean() { return *running_mean_; }
    Tensor& running_var() { return *running_var_; }

private:
    struct Ctx {
        Matrix xhat;
        Vector invstd;
    };
    Tensor* gamma_;
    Tensor* beta_;
    Tensor* running_mean_;
    Tensor* running_var_;
    double momentum_;
    double epsilon_;
    std::vector<Ctx> ctx_;
};

/// Per-row normalization with learned scale/shift (the Table-3 ablation of
/// the block norm). No running state; train and eval agree.
class LayerNorm {
public:
    LayerNorm(ParamStore& ps, const std::string& name, Eigen::Index width, double epsilon = 1e-5)
        : gamma_(&ps.create(name + ".gamma", 1, width)),
          beta_(&ps.create(name + ".beta", 1, width)),
          epsilon_(epsilon) {
        gamma_->value.setOnes();
    }

    Matrix forward(const Matrix& x, Mode mode) {
        const auto p = x.cols();
        check(p == gamma_->value.cols(), "layernorm: width mismatch");
        Ctx ctx;
        ctx.xhat.resize(x.rows(), p);
        ctx.invstd.resize(x.rows());
        Matrix y(x.rows(), p);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double mean = x.row(i).mean();
            const double var = (x.row(i).array() - mean).square().sum() / static_cast<double>(p);
            const double invstd = 1.0 / std::sqrt(var + epsilon_);
            ctx.xhat.row(i) = (x.row(i).array() - mean) * invstd;
            ctx.invstd[i] = invstd;
            y.row(i) = ctx.xhat.row(i).cwiseProduct(gamma_->value.row(0)) + beta_->value.row(0);
        }
        if (mode == Mode::train) ctx_.push_back(std::move(ctx));
        return y;
    }

    Matrix backward(const Matrix& dy) {
        check(!ctx_.empty(), "layernorm: backward without matching forward");
        Ctx ctx = std::move(ctx_.back());
        ctx_.pop_back();
        const auto p = dy.cols();
        const double pd = static_cast<double>(p);
        using RowArray = Eigen::Array<double, 1, Eigen::Dynamic>;
        Matrix dx(dy.rows(), p);
        for (Eigen::Index i = 0; i < dy.rows(); ++i) {
            const RowArray xhat = ctx.xhat.row(i).array();
            const RowArray g = dy.row(i).array();
            gamma_->grad.row(0).array() += g * xhat;
            beta_->grad.row(0).array() += g;
            const RowArray gh = g * gamma_->value.row(0).array();
            const double sum_gh = gh.sum();
            const double sum_ghx = (gh * xhat).sum();
            dx.row(i) = ((ctx.invstd[i] / pd) * (pd * gh - sum_gh - xhat * sum_ghx)).matrix();
        }
        return dx;
    }

    void discard_contexts() { ctx_.clear(); }

private:
    struct Ctx {
        Matrix xhat;
        Vector invstd;
    };
    Tensor* gamma_;
    Tensor* beta_;
    double epsilon_;
    std::vector<Ctx> ctx_;
};

/// PLR (lite) numerical feature encoding: per scalar feature, a trainable
/// frequency bank feeds interleaved [sin(2*pi*c_t x), cos(2*pi*c_t x)] pairs
/// into one linear map shared across all features, followed by ReLU. Output
/// blocks are concatenated feature by feature: B x (d_num * k_out).
class PlrEncoder {
public:
    PlrEncoder(ParamStore& ps, const std::string& name, Eigen::Index d_num, int n_frequencies,
               int k_out, double freq_sigma)
        : freq_(&ps.create(name + ".freq", d_num, n_frequencies)),
          shared_W_(&ps.create(name + ".shared.W", 2 * n_frequencies, k_out)),
          shared_b_(&ps.create(name + ".shared.b", 1, k_out)),
          d_num_(d_num),
          m_(n_frequencies),
          k_out_(k_out) {
        check(d_num >= 1, "plr: no numerical features");
        check(n_frequencies >= 1 && k_out >= 1, "plr: m and k_out must be >= 1");
        Rng& rng = ps.init_rng();
        for (Eigen::Index f = 0; f < d_num; ++f)
            for (int t = 0; t < n_frequencies; ++t) freq_->value(f, t) = rng.normal(0.0, freq_sigma);
        const double k = 1.0 / std::sqrt(2.0 * n_frequencies);
        for (Eigen::Index i = 0; i < shared_W_->value.rows(); ++i)
            for (Eigen::Index j = 0; j < k_out; ++j) shared_W_->value(i, j) = rng.uniform(-k, k);
        for (Eigen::Index j = 0; j < k_out; ++j) shared_b_->value(0, j) = rng.uniform(-k, k);
    }

    Eigen::Index out_width() const { return d_num_ * k_out_; }

    Matrix forward(const Matrix& x, Mode mode) {
        check(x.cols() == d_num_, "plr: input width mismatch");
        const auto rows = x.rows();
        Ctx ctx;
        ctx.x = x;
        ctx.periodic.assign(static_cast<std::size_t>(d_num_), Matrix());
        ctx.relu_mask.assign(static_cast<std::size_t>(d_num_), Matrix());
        Matrix out(rows, out_width());
        for (Eigen::Index f = 0; f < d_num_; ++f) {
            Matrix per(rows, 2 * m_);
            for (int t = 0; t < m_; ++t) {
                const double w = two_pi_ * freq_->value(f, t);
                per.col(2 * t) = (w * x.col(f).array()).sin();
                per.col(2 * t + 1) = (w * x.col(f).array()).cos();
            }
            Matrix z = per * shared_W_->value;
            z.rowwise() += shared_b_->value.row(0);
            const Matrix mask = (z.array() > 0.0).cast<double>().matrix();
            out.middleCols(f * k_out_, k_out_) = z.cwiseProduct(mask);
            if (mode == Mode::train) {
                ctx.periodic[static_cast<std::size_t>(f)] = std::move(per);
                ctx.relu_mask[static_cast<std::size_t>(f)] = mask;
            }
        }
        if (mode == Mode::train) ctx_.push_back(std::move(ctx));
        return out;
    }

    Matrix backward(const Matrix& dy) {
        check(!ctx_.empty(), "plr: backward without matching forward");
        Ctx ctx = std::move(ctx_.back());
        ctx_.pop_back();
        const auto rows = dy.rows();
        Matrix dx = Matrix::Zero(rows, d_num_);
        for (Eigen::Index f = 0; f < d_num_; ++f) {
            const Matrix& per = ctx.periodic[static_cast<std::size_t>(f)];
            const Matrix dz =
                dy.middleCols(f * k_out_, k_out_).cwiseProduct(ctx.relu_mask[static_cast<std::size_t>(f)]);
            shared_W_->grad.noalias() += per.transpose() * dz;
            shared_b_->grad.row(0) += dz.colwise().sum();
            const Matrix dper = dz * shared_W_->value.transpose();
            for (int t = 0; t < m_; ++t) {
                const auto s = per.col(2 * t).array();    // sin(2 pi c x)
                const auto c = per.col(2 * t + 1).array();  // cos(2 pi c x)
                const auto ds = dper.col(2 * t).array();
                const auto dc = dper.col(2 * t + 1).array();
                const auto xf = ctx.x.col(f).array();
                freq_->grad(f, t) += (two_pi_ * xf * (ds * c - dc * s)).sum();
                dx.col(f).array() += two_pi_ * freq_->value(f, t) * (ds * c - dc * s);
            }
        }
        return dx;
    }

    void discard_contexts() { ctx_.clear(); }

private:
    struct Ctx {
        Matrix x;
        std::vector<Matrix> periodic;
        std::vector<Matrix> relu_mask;
    };
    static constexpr double two_pi_ = 6.283185307179586476925286766559;
    Tensor* freq_;
    Tensor* shared_W_;
    Tensor* shared_b_;
    Eigen::Index d_num_;
    int m_;
    int k_out_;
    std::vector<Ctx> ctx_;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_coordinate;
};

inline double fd_rel_err(double analytic, double numeric) {
    return std::fabs(analytic - numeric) /
           std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
}

namespace detail {

/// Central difference around one scalar coordinate. Order 2 is the plain
/// two-point stencil; order 4 is the five-point stencil, which keeps the
/// truncation error manageable on stiff compositions (periodic encodings
/// feeding exponential kernels).
template <typename Get, typename Set>
double central_difference(const std::function<double()>& loss_fn, const Get& get, const Set& set,
                          double h, int order) {
    const double saved = get();
    double numeric = 0.0;
    if (order == 4) {
        set(saved + 2.0 * h);
        const double p2 = loss_fn();
        set(saved + h);
        const double p1 = loss_fn();
        set(saved - h);
        const double m1 = loss_fn();
        set(saved - 2.0 * h);
        const double m2 = loss_fn();
        numeric = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h);
    } else {
        set(saved + h);
        const double up = loss_fn();
        set(saved - h);
        const double down = loss_fn();
        numeric = (up - down) / (2.0 * h);
    }
    set(saved);
    return numeric;
}

}  // namespace detail

/// Central finite differences over every trainable coordinate. The analytic
/// gradients must already be populated (one forward+backward of `loss_fn`'s
/// model); `loss_fn` itself must be a deterministic pure re-evaluation.
inline GradCheckResult grad_check(const std::function<double()>& loss_fn, ParamStore& params,
                                  double h = 1e-5, int order = 2) {
    GradCheckResult result;
    for (Tensor* t : params.tensors()) {
        if (!t->trainable) continue;
        for (Eigen::Index i = 0; i < t->value.rows(); ++i) {
            for (Eigen::Index j = 0; j < t->value.cols(); ++j) {
                const double numeric = detail::central_difference(
                    loss_fn, [&]() { return t->value(i, j); },
                    [&](double v) { t->value(i, j) = v; }, h, order);
                const double err = fd_rel_err(t->grad(i, j), numeric);
                if (err > result.max_rel_err) {
                    result.max_rel_err = err;
                    result.worst_coordinate = t->name + "(" + std::to_string(i) + "," +
                                              std::to_string(j) + ")";
                }
            }
        }
    }
    return result;
}

/// Same check against an arbitrary matrix (e.g. a layer input).
inline double grad_check_matrix(const std::function<double()>& loss_fn, Matrix& target,
                                const Matrix& analytic_grad, double h = 1e-5, int order = 2) {
    check(target.rows() == analytic_grad.rows() && target.cols() == analytic_grad.cols(),
          "grad_check_matrix: shape mismatch");
    double worst = 0.0;
    for (Eigen::Index i = 0; i < target.rows(); ++i) {
        for (Eigen::Index j = 0; j < target.cols(); ++j) {
            const double numeric = detail::central_difference(
                loss_fn, [&]() { return target(i, j); }, [&](double v) { target(i, j) = v; }, h,
                order);
            worst = std::max(worst, fd_rel_err(analytic_grad(i, j), numeric));
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Bit-exact text serialization (hexfloat) of a parameter store.
// ---------------------------------------------------------------------------

inline void write_param_store(std::ostream& os, const ParamStore& params, const Rng& dropout_rng) {
    const auto ts = params.tensors();
    os << "params " << ts.size() << "\n";
    char buf[64];
    for (const Tensor* t : ts) {
        os << "tensor " << t->name << " " << t->value.rows() << " " << t->value.cols() << " "
           << (t->trainable ? 1 : 0) << "\n";
        for (Eigen::Index i = 0; i < t->value.rows(); ++i) {
            for (Eigen::Index j = 0; j < t->value.cols(); ++j) {
                std::snprintf(buf, sizeof(buf), "%a", t->value(i, j));
                os << buf << (j + 1 == t->value.cols() ? "" : " ");
            }
            os << "\n";
        }
    }
    os << "rng_init_seed " << params.init_seed() << "\n";
    os << "rng_init_state " << params.init_rng().save_state() << "\n";
    os << "rng_dropout_state " << dropout_rng.save_state() << "\n";
}

inline void read_param_store(std::istream& is, ParamStore& params, Rng& dropout_rng) {
    std::string tag;
    std::size_t count = 0;
    is >> tag >> count;
    check(tag == "params", "checkpoint: expected 'params' header");
    const auto ts = params.tensors();
    check(count == ts.size(), "checkpoint: tensor count mismatch (file " + std::to_string(count) +
                                  ", model " + std::to_string(ts.size()) + ")");
    for (Tensor* t : ts) {
        std::string name;
        Eigen::Index rows = 0, cols = 0;
        int trainable = 0;
        is >> tag >> name >> rows >> cols >> trainable;
        check(tag == "tensor" && !is.fail(), "checkpoint: malformed tensor header");
        check(name == t->name, "checkpoint: tensor '" + name + "' does not match model tensor '" +
                                   t->name + "'");
        check(rows == t->value.rows() && cols == t->value.cols(),
              "checkpoint: shape mismatch for '" + name + "'");
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) {
                std::string cell;
                is >> cell;
                char* end = nullptr;
                t->value(i, j) = std::strtod(cell.c_str(), &end);
                check(end == cell.c_str() + cell.size(),
                      "checkpoint: bad value in tensor '" + name + "'");
            }
    }
    std::string state;
    std::uint64_t seed = 0;
    is >> tag >> seed;
    check(tag == "rng_init_seed", "checkpoint: missing rng_init_seed");
    is >> tag >> state;
    check(tag == "rng_init_state", "checkpoint: missing rng_init_state");
    params.init_rng().load_state(state);
    is >> tag >> state;
    check(tag == "rng_dropout_state", "checkpoint: missing rng_dropout_state");
    dropout_rng.load_state(state);
}

}  // namespace ncatab
