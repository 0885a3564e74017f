// SPDX-License-Identifier: Apache-2.0
#include "hfat/auxiliary.hpp"

#include <cmath>

namespace hfat {

ProbePoint transform_T(const Tensor& x, const Tensor& x_adv, double r, double eps,
                       const Domain& domain, Rng* rng, double noise_scale) {
    if (x.shape() != x_adv.shape())
        throw DimensionError("transform_T: x and x_adv shapes differ");
    if (noise_scale > 0.0 && rng == nullptr)
        throw ContractError("transform_T: noise requested without an RNG");
    const std::size_t n = x.numel();
    std::vector<double> probe(n);
    for (std::size_t i = 0; i < n; ++i) {
        double v = x.at(i) + r * (x_adv.at(i) - x.at(i));
        if (noise_scale > 0.0) v += rng->uniform(-noise_scale, noise_scale);
        // Total displacement stays inside the ball, then inside the domain.
        double d = std::min(eps, std::max(-eps, v - x.at(i)));
        probe[i] = domain.clamp(x.at(i) + d);
    }
    ProbePoint out;
    out.x_probe = Tensor::leaf(x.shape(), std::move(probe));
    out.r_used = r;
    out.noise_scale = noise_scale;
    return out;
}

ModelWeights reverse_train_step(const ModelWeights& theta, const ProbePoint& probe,
                                const std::vector<int>& y, double eta) {
    if (eta < 0.0) throw ContractError("reverse_train_step: eta must be >= 0");
    ModelWeights theta_hat = theta.clone();
    theta_hat.set_requires_grad(true);
    Tape tape;
    Tensor loss = tape.cross_entropy(forward(tape, theta_hat, probe.x_probe), y);
    tape.backward(loss);
    for (auto* t : theta_hat.tensors()) {
        auto data = t->mutable_data();
        if (!t->has_grad()) continue;
        auto g = t->grad();
        for (std::size_t i = 0; i < data.size(); ++i) {
            data[i] += eta * g[i];
            if (!std::isfinite(data[i]))
                throw NumericError("reverse_train_step: non-finite weight produced");
        }
    }
    theta_hat.zero_grad();
    theta_hat.set_requires_grad(false);
    return theta_hat;
}

MomentumResult compute_momentum_p(const ModelWeights& theta_hat, const Tensor& x,
                                  const std::vector<int>& y, const AttackSpec& aux_attack,
                                  const Domain& domain, Rng* rng) {
    if (aux_attack.kind != AttackKind::Pgd)
        throw ContractError("compute_momentum_p: auxiliary attack must be pgd");
    if (aux_attack.steps < 1)
        throw ContractError("compute_momentum_p: auxiliary attack needs steps >= 1");

    MomentumResult out;
    out.adv = pgd(theta_hat, x, y, aux_attack, domain, rng);

    ModelWeights diff = theta_hat;
    diff.set_requires_grad(true);
    Tape tape;
    Tensor loss = tape.cross_entropy(forward(tape, diff, out.adv.x_adv), y);
    tape.backward(loss);
    for (auto* t : diff.tensors()) {
        auto g = t->grad();
        check_finite(g, "compute_momentum_p");
        out.p.parts.emplace_back(g.begin(), g.end());
        t->zero_grad();
    }
    diff.set_requires_grad(false);
    return out;
}

} // namespace hfat
