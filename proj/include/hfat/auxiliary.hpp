// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hfat/attacks.hpp"
#include "hfat/model.hpp"

namespace hfat {

/// Batch of probe points placed at relative position r along the segment from
/// each clean sample to its adversarial example, plus a little noise, all
/// clamped back into the ball.
struct ProbePoint {
    Tensor x_probe;
    double r_used = 0.0;
    double noise_scale = 0.0;
};

/// Gradient of the auxiliary model's adversarial loss w.r.t. its weights, in
/// the main model's tensor order so it can be mixed into the update directly.
struct MomentumP {
    std::vector<std::vector<double>> parts; // one block per weight/bias tensor
};

/// Probe construction: x + r (x_adv - x) + u, u uniform in +-noise_scale per
/// coordinate, then ball and domain clamping. Pass noise_scale = 0 to disable
/// the noise; the default operating value is eps / 10.
ProbePoint transform_T(const Tensor& x, const Tensor& x_adv, double r, double eps,
                       const Domain& domain, Rng* rng, double noise_scale);

/// One gradient-ascent step on the probe batch: theta_hat = theta + eta * grad.
/// theta itself is untouched.
ModelWeights reverse_train_step(const ModelWeights& theta, const ProbePoint& probe,
                                const std::vector<int>& y, double eta);

/// Attacks the auxiliary model with aux_attack (must be pgd) and returns the
/// weight gradient of the CE loss at x + delta*, plus the adversarial batch
/// used (needed by the adaptive weighting).
struct MomentumResult {
    MomentumP p;
    AdvBatch adv;
};
MomentumResult compute_momentum_p(const ModelWeights& theta_hat, const Tensor& x,
                                  const std::vector<int>& y, const AttackSpec& aux_attack,
                                  const Domain& domain, Rng* rng);

} // namespace hfat
