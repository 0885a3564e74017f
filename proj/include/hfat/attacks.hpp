// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hfat/model.hpp"
#include "hfat/rng.hpp"
#include "hfat/tensor.hpp"

namespace hfat {

enum class AttackKind { Fgsm, Pgd, Mim, Cw };

AttackKind attack_kind_from_string(const std::string& s);
std::string to_string(AttackKind k);

/// Parameters of one inner-maximization solve over the linf ball.
struct AttackSpec {
    AttackKind kind = AttackKind::Pgd;
    double eps = 0.1;
    double alpha = 0.0; // 0 means "unset": defaults to eps/4
    std::size_t steps = 1;
    bool random_start = false;
    double mim_decay = 1.0;
    double cw_kappa = 0.0;

    double effective_alpha() const { return alpha > 0.0 ? alpha : eps / 4.0; }
    void validate() const;
};

/// Coordinate box the inputs live in. Image-like data uses [0,1]; synthetic
/// low-dimensional data is typically unbounded.
struct Domain {
    bool bounded = false;
    double lo = 0.0;
    double hi = 1.0;

    static Domain unbounded() { return {}; }
    static Domain unit() { return {true, 0.0, 1.0}; }
    double clamp(double v) const { return bounded ? std::min(hi, std::max(lo, v)) : v; }
};

struct AdvBatch {
    Tensor x_adv;
    Tensor delta;
    std::vector<double> loss_trace; // objective value before step 1 and after each step
};

/// Elementwise clamp of delta to [-eps, eps].
void project_linf(std::span<double> delta, double eps);
Tensor project_linf(const Tensor& delta, double eps);

AdvBatch fgsm(const ModelWeights& w, const Tensor& x, const std::vector<int>& y,
              const AttackSpec& spec, const Domain& domain);
AdvBatch pgd(const ModelWeights& w, const Tensor& x, const std::vector<int>& y,
             const AttackSpec& spec, const Domain& domain, Rng* rng = nullptr);
AdvBatch mim(const ModelWeights& w, const Tensor& x, const std::vector<int>& y,
             const AttackSpec& spec, const Domain& domain, Rng* rng = nullptr);
AdvBatch cw_margin_pgd(const ModelWeights& w, const Tensor& x, const std::vector<int>& y,
                       const AttackSpec& spec, const Domain& domain, Rng* rng = nullptr);

/// Dispatch on spec.kind.
AdvBatch run_attack(const ModelWeights& w, const Tensor& x, const std::vector<int>& y,
                    const AttackSpec& spec, const Domain& domain, Rng* rng = nullptr);

/// PGD-style ascent of KL(p_ref || f(x')) over the ball around x; p_ref are
/// the frozen logits of the clean batch. Used by the TRADES inner problem.
AdvBatch kl_ascent(const ModelWeights& w, const Tensor& x, const Tensor& p_ref_logits,
                   const AttackSpec& spec, const Domain& domain, Rng* rng = nullptr);

/// Exhaustive grid search over the ball for a single sample; the test oracle
/// for the inner maximization. Input dimension must be at most 3.
struct BruteForceResult {
    std::vector<double> delta;
    double loss = 0.0;
};
BruteForceResult brute_force_worst_case(const ModelWeights& w, std::span<const double> x, int y,
                                        double eps, std::size_t grid_n, const Domain& domain);

} // namespace hfat
