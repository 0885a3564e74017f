// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "hfat/errors.hpp"

namespace hfat {

class Tape;

namespace detail {
struct TensorImpl {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad; // empty until first touched
    const Tape* origin = nullptr;
    std::uint64_t origin_gen = 0;
};
} // namespace detail

/// Dense row-major f64 tensor. Copying a Tensor copies the handle, not the
/// buffer; clone() makes an independent leaf.
class Tensor {
public:
    Tensor() = default;

    static Tensor leaf(std::vector<std::size_t> shape, std::vector<double> data,
                       bool requires_grad = false);
    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor scalar_of(double value);

    bool valid() const { return impl_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return impl_->shape; }
    std::size_t numel() const { return impl_->data.size(); }
    std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }

    std::span<const double> data() const { return impl_->data; }
    std::span<double> mutable_data() { return impl_->data; }
    double at(std::size_t i) const { return impl_->data[i]; }

    bool requires_grad() const { return impl_->requires_grad; }
    /// Flips gradient tracking for subsequent recordings on this buffer.
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }
    bool has_grad() const { return !impl_->grad.empty(); }
    /// Gradient buffer, zero-filled on first access.
    std::span<double> grad();
    std::span<const double> grad_view() const;
    void zero_grad();

    /// Value of a one-element tensor.
    double scalar() const;

    Tensor clone() const;

    /// Identity of the underlying buffer (used by tests).
    const void* id() const { return impl_.get(); }

private:
    friend class Tape;
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Records differentiable ops as they execute (define-by-run) and replays them
/// in reverse on backward(). A tape is single-use: backward() consumes it and
/// reset() must be called before recording again.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor relu(const Tensor& a);
    Tensor add(const Tensor& a, const Tensor& b);
    /// a is rows x cols, bias has cols entries, broadcast over rows.
    Tensor add_bias(const Tensor& a, const Tensor& bias);
    Tensor scale(const Tensor& a, double s);
    Tensor sum(const Tensor& a);
    Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
    Tensor kl_divergence(const Tensor& p_logits, const Tensor& q_logits);
    /// Mean over rows of max(z_y - max_{c != y} z_c, -kappa).
    Tensor cw_margin(const Tensor& logits, const std::vector<int>& labels, double kappa);

    /// Reverse-mode sweep from a scalar loss. Gradients land on every
    /// requires_grad tensor reachable from the loss, readable via grad().
    void backward(const Tensor& loss);

    /// Clears recorded nodes and invalidates tensors produced so far.
    void reset();

    std::size_t node_count() const { return nodes_.size(); }

private:
    Tensor make_output(std::vector<std::size_t> shape, std::vector<double> data,
                       bool requires_grad);
    void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

    std::vector<std::function<void()>> nodes_;
    bool consumed_ = false;
    std::uint64_t generation_ = 1;
};

/// Row-wise softmax of a logits matrix (forward only, no tape).
std::vector<double> softmax_rows(const Tensor& logits);

bool finite_checks_enabled();
void set_finite_checks(bool enabled);

/// Throws NumericError if any entry is non-finite.
void check_finite(std::span<const double> values, const char* what);

} // namespace hfat
