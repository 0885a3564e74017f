// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "hfat/model.hpp"
#include "hfat/rng.hpp"

namespace hfat::testing {

/// Central finite differences, the independent gradient oracle.
inline std::vector<double> finite_difference_grad(
    const std::function<double(std::span<const double>)>& f, std::vector<double> x,
    double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline double max_rel_error(std::span<const double> a, std::span<const double> b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -1.0,
                                         double hi = 1.0) {
    std::vector<double> out(n);
    for (double& v : out) v = rng.uniform(lo, hi);
    return out;
}

/// Two-class linear model on a 2-D input: logit_c = x0 W0c + x1 W1c + b_c.
/// The closed-form workhorse for attack oracles.
inline ModelWeights logistic_2d(double w00, double w01, double w10, double w11, double b0 = 0.0,
                                double b1 = 0.0) {
    MlpSpec spec;
    spec.layer_sizes = {2, 2};
    ModelWeights w;
    w.spec = spec;
    w.weights.push_back(Tensor::leaf({2, 2}, {w00, w01, w10, w11}));
    w.biases.push_back(Tensor::leaf({2}, {b0, b1}));
    return w;
}

inline ModelWeights random_logistic_2d(Rng& rng) {
    return logistic_2d(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0),
                       rng.uniform(-2.0, 2.0), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
}

inline bool tensors_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.numel(); ++i)
        if (a.at(i) != b.at(i)) return false;
    return true;
}

inline bool weights_equal(const ModelWeights& a, const ModelWeights& b) {
    if (a.spec != b.spec) return false;
    for (std::size_t l = 0; l < a.weights.size(); ++l)
        if (!tensors_equal(a.weights[l], b.weights[l]) || !tensors_equal(a.biases[l], b.biases[l]))
            return false;
    return true;
}

} // namespace hfat::testing
