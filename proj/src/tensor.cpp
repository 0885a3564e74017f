// SPDX-License-Identifier: Apache-2.0
#include "hfat/tensor.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <string>

#include "hfat/kernels.hpp"

namespace hfat {

namespace {

std::atomic<bool> g_finite_checks{true};

std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

std::size_t shape_numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

void require_matrix(const Tensor& t, const char* what) {
    if (t.shape().size() != 2)
        throw DimensionError(std::string(what) + ": expected a matrix, got " +
                             shape_str(t.shape()));
}

} // namespace

bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }
void set_finite_checks(bool enabled) { g_finite_checks.store(enabled, std::memory_order_relaxed); }

void check_finite(std::span<const double> values, const char* what) {
    for (double v : values)
        if (!std::isfinite(v))
            throw NumericError(std::string(what) + ": non-finite value produced");
}

Tensor Tensor::leaf(std::vector<std::size_t> shape, std::vector<double> data,
                    bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw DimensionError("leaf: shape " + shape_str(shape) + " does not match data length " +
                             std::to_string(data.size()));
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    std::vector<double> data(shape_numel(shape), 0.0);
    return leaf(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar_of(double value) { return leaf({1}, {value}); }

std::span<double> Tensor::grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
}

std::span<const double> Tensor::grad_view() const {
    if (impl_->grad.empty())
        throw ContractError("grad_view: no gradient has been computed for this tensor");
    return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

double Tensor::scalar() const {
    if (numel() != 1)
        throw ContractError("scalar: tensor has " + std::to_string(numel()) + " elements");
    return impl_->data[0];
}

Tensor Tensor::clone() const {
    return leaf(impl_->shape, impl_->data, impl_->requires_grad);
}

Tensor Tape::make_output(std::vector<std::size_t> shape, std::vector<double> data,
                         bool requires_grad) {
    if (consumed_)
        throw LifecycleError("tape: recording after backward; call reset() first");
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    impl->origin = this;
    impl->origin_gen = generation_;
    if (finite_checks_enabled()) check_finite(impl->data, "op output");
    return Tensor(std::move(impl));
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul lhs");
    require_matrix(b, "matmul rhs");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    std::vector<double> out(m * n);
    kernels::matmul(a.data().data(), b.data().data(), out.data(), m, k, n);
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor c = make_output({m, n}, std::move(out), rg);
    if (rg) {
        auto ai = a.impl_, bi = b.impl_, ci = c.impl_;
        record([ai, bi, ci, m, k, n] {
            if (ci->grad.empty()) return;
            if (ai->requires_grad) {
                if (ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.0);
                kernels::matmul_acc_nt(ci->grad.data(), bi->data.data(), ai->grad.data(), m, n, k);
            }
            if (bi->requires_grad) {
                if (bi->grad.empty()) bi->grad.assign(bi->data.size(), 0.0);
                kernels::matmul_acc_tn(ai->data.data(), ci->grad.data(), bi->grad.data(), m, k, n);
            }
        });
    }
    return c;
}

Tensor Tape::relu(const Tensor& a) {
    std::vector<double> out(a.numel());
    kernels::relu_fwd(a.data().data(), out.data(), a.numel());
    const bool rg = a.requires_grad();
    Tensor c = make_output(a.shape(), std::move(out), rg);
    if (rg) {
        auto ai = a.impl_, ci = c.impl_;
        record([ai, ci] {
            if (ci->grad.empty()) return;
            if (ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.0);
            kernels::relu_bwd_acc(ai->data.data(), ci->grad.data(), ai->grad.data(),
                                  ai->data.size());
        });
    }
    return c;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("add: shapes differ, " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor c = make_output(a.shape(), std::move(out), rg);
    if (rg) {
        auto ai = a.impl_, bi = b.impl_, ci = c.impl_;
        record([ai, bi, ci] {
            if (ci->grad.empty()) return;
            for (auto* t : {ai.get(), bi.get()}) {
                if (!t->requires_grad) continue;
                if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
                for (std::size_t i = 0; i < t->grad.size(); ++i) t->grad[i] += ci->grad[i];
            }
        });
    }
    return c;
}

Tensor Tape::add_bias(const Tensor& a, const Tensor& bias) {
    require_matrix(a, "add_bias input");
    if (bias.shape().size() != 1 || bias.dim(0) != a.dim(1))
        throw DimensionError("add_bias: bias " + shape_str(bias.shape()) +
                             " does not match columns of " + shape_str(a.shape()));
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    std::vector<double> out(rows * cols);
    kernels::add_bias(a.data().data(), bias.data().data(), out.data(), rows, cols);
    const bool rg = a.requires_grad() || bias.requires_grad();
    Tensor c = make_output(a.shape(), std::move(out), rg);
    if (rg) {
        auto ai = a.impl_, bi = bias.impl_, ci = c.impl_;
        record([ai, bi, ci, rows, cols] {
            if (ci->grad.empty()) return;
            if (ai->requires_grad) {
                if (ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.0);
                for (std::size_t i = 0; i < ai->grad.size(); ++i) ai->grad[i] += ci->grad[i];
            }
            if (bi->requires_grad) {
                if (bi->grad.empty()) bi->grad.assign(bi->data.size(), 0.0);
                kernels::bias_grad_acc(ci->grad.data(), bi->grad.data(), rows, cols);
            }
        });
    }
    return c;
}

Tensor Tape::scale(const Tensor& a, double s) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * a.at(i);
    const bool rg = a.requires_grad();
    Tensor c = make_output(a.shape(), std::move(out), rg);
    if (rg) {
        auto ai = a.impl_, ci = c.impl_;
        record([ai, ci, s] {
            if (ci->grad.empty()) return;
            if (ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.0);
            for (std::size_t i = 0; i < ai->grad.size(); ++i) ai->grad[i] += s * ci->grad[i];
        });
    }
    return c;
}

Tensor Tape::sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    const bool rg = a.requires_grad();
    Tensor c = make_output({1}, {acc}, rg);
    if (rg) {
        auto ai = a.impl_, ci = c.impl_;
        record([ai, ci] {
            if (ci->grad.empty()) return;
            if (ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.0);
            const double g = ci->grad[0];
            for (double& v : ai->grad) v += g;
        });
    }
    return c;
}

Tensor Tape::cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    require_matrix(logits, "cross_entropy logits");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    if (rows == 0) throw ContractError("cross_entropy: empty batch");
    if (labels.size() != rows)
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(rows) + " rows");
    for (std::size_t i = 0; i < rows; ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= cols)
            throw IndexError("cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                             std::to_string(i) + " outside [0, " + std::to_string(cols) + ")");
    std::vector<double> logp(rows * cols);
    kernels::log_softmax_rows(logits.data().data(), logp.data(), rows, cols);
    double loss = 0.0;
    for (std::size_t i = 0; i < rows; ++i)
        loss -= logp[i * cols + static_cast<std::size_t>(labels[i])];
    loss /= static_cast<double>(rows);
    const bool rg = logits.requires_grad();
    Tensor c = make_output({1}, {loss}, rg);
    if (rg) {
        auto li = logits.impl_, ci = c.impl_;
        auto logp_saved = std::make_shared<std::vector<double>>(std::move(logp));
        record([li, ci, logp_saved, labels, rows, cols] {
            if (ci->grad.empty()) return;
            if (li->grad.empty()) li->grad.assign(li->data.size(), 0.0);
            const double g = ci->grad[0] / static_cast<double>(rows);
            const auto& lp = *logp_saved;
            for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t j = 0; j < cols; ++j) {
                    double p = std::exp(lp[i * cols + j]);
                    double onehot = (static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0;
                    li->grad[i * cols + j] += g * (p - onehot);
                }
            }
        });
    }
    return c;
}

Tensor Tape::kl_divergence(const Tensor& p_logits, const Tensor& q_logits) {
    require_matrix(p_logits, "kl_divergence p");
    require_matrix(q_logits, "kl_divergence q");
    if (p_logits.shape() != q_logits.shape())
        throw DimensionError("kl_divergence: shapes differ, " + shape_str(p_logits.shape()) +
                             " vs " + shape_str(q_logits.shape()));
    const std::size_t rows = p_logits.dim(0), cols = p_logits.dim(1);
    std::vector<double> logp(rows * cols), logq(rows * cols);
    kernels::log_softmax_rows(p_logits.data().data(), logp.data(), rows, cols);
    kernels::log_softmax_rows(q_logits.data().data(), logq.data(), rows, cols);
    // Row KLs are saved for the backward pass.
    std::vector<double> row_kl(rows, 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            const std::size_t ix = i * cols + j;
            acc += std::exp(logp[ix]) * (logp[ix] - logq[ix]);
        }
        row_kl[i] = acc;
        loss += acc;
    }
    loss /= static_cast<double>(rows);
    const bool rg = p_logits.requires_grad() || q_logits.requires_grad();
    Tensor c = make_output({1}, {loss}, rg);
    if (rg) {
        auto pi = p_logits.impl_, qi = q_logits.impl_, ci = c.impl_;
        auto saved = std::make_shared<std::array<std::vector<double>, 3>>();
        (*saved)[0] = std::move(logp);
        (*saved)[1] = std::move(logq);
        (*saved)[2] = std::move(row_kl);
        record([pi, qi, ci, saved, rows, cols] {
            if (ci->grad.empty()) return;
            const double g = ci->grad[0] / static_cast<double>(rows);
            const auto& lp = (*saved)[0];
            const auto& lq = (*saved)[1];
            const auto& rk = (*saved)[2];
            if (pi->requires_grad) {
                if (pi->grad.empty()) pi->grad.assign(pi->data.size(), 0.0);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) {
                        const std::size_t ix = i * cols + j;
                        const double p = std::exp(lp[ix]);
                        pi->grad[ix] += g * p * (lp[ix] - lq[ix] - rk[i]);
                    }
            }
            if (qi->requires_grad) {
                if (qi->grad.empty()) qi->grad.assign(qi->data.size(), 0.0);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) {
                        const std::size_t ix = i * cols + j;
                        qi->grad[ix] += g * (std::exp(lq[ix]) - std::exp(lp[ix]));
                    }
            }
        });
    }
    return c;
}

Tensor Tape::cw_margin(const Tensor& logits, const std::vector<int>& labels, double kappa) {
    require_matrix(logits, "cw_margin logits");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    if (cols < 2) throw ContractError("cw_margin: needs at least 2 classes");
    if (labels.size() != rows)
        throw DimensionError("cw_margin: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(rows) + " rows");
    // Runner-up index per row; ties toward the smallest class index.
    std::vector<std::size_t> runner(rows);
    std::vector<double> margins(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        if (y >= cols)
            throw IndexError("cw_margin: label " + std::to_string(labels[i]) + " outside [0, " +
                             std::to_string(cols) + ")");
        std::size_t best = y == 0 ? 1 : 0;
        for (std::size_t j = 0; j < cols; ++j) {
            if (j == y) continue;
            if (logits.at(i * cols + j) > logits.at(i * cols + best)) best = j;
        }
        runner[i] = best;
        margins[i] = logits.at(i * cols + y) - logits.at(i * cols + best);
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < rows; ++i) loss += std::max(margins[i], -kappa);
    loss /= static_cast<double>(rows);
    const bool rg = logits.requires_grad();
    Tensor c = make_output({1}, {loss}, rg);
    if (rg) {
        auto li = logits.impl_, ci = c.impl_;
        record([li, ci, labels, runner, margins, kappa, rows, cols] {
            if (ci->grad.empty()) return;
            if (li->grad.empty()) li->grad.assign(li->data.size(), 0.0);
            const double g = ci->grad[0] / static_cast<double>(rows);
            for (std::size_t i = 0; i < rows; ++i) {
                if (margins[i] <= -kappa) continue; // clamp active, zero subgradient
                li->grad[i * cols + static_cast<std::size_t>(labels[i])] += g;
                li->grad[i * cols + runner[i]] -= g;
            }
        });
    }
    return c;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.valid() || loss.numel() != 1)
        throw ContractError("backward: loss must be a scalar tensor");
    if (loss.impl_->origin != this || loss.impl_->origin_gen != generation_)
        throw LifecycleError("backward: loss was not produced by this tape's current recording");
    if (consumed_)
        throw LifecycleError("backward: tape already consumed; call reset() before reuse");
    consumed_ = true;
    loss.impl_->grad.assign(1, 1.0);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void Tape::reset() {
    nodes_.clear();
    consumed_ = false;
    ++generation_;
}

std::vector<double> softmax_rows(const Tensor& logits) {
    if (logits.shape().size() != 2)
        throw DimensionError("softmax_rows: expected a matrix");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    std::vector<double> out(rows * cols);
    kernels::log_softmax_rows(logits.data().data(), out.data(), rows, cols);
    for (double& v : out) v = std::exp(v);
    return out;
}

} // namespace hfat
