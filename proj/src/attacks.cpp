// SPDX-License-Identifier: Apache-2.0
#include "hfat/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace hfat {

namespace {

inline double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::vector<double> clamp_to_domain(const Tensor& x, std::vector<double> delta, double eps,
                                    const Domain& domain) {
    project_linf(std::span<double>(delta), eps);
    for (std::size_t i = 0; i < delta.size(); ++i) {
        const double xa = domain.clamp(x.at(i) + delta[i]);
        delta[i] = xa - x.at(i);
    }
    return delta;
}

AdvBatch finish(const Tensor& x, std::vector<double> delta, std::vector<double> trace) {
    std::vector<double> xa(x.numel());
    for (std::size_t i = 0; i < xa.size(); ++i) xa[i] = x.at(i) + delta[i];
    AdvBatch out;
    out.x_adv = Tensor::leaf(x.shape(), std::move(xa));
    out.delta = Tensor::leaf(x.shape(), std::move(delta));
    out.loss_trace = std::move(trace);
    return out;
}

// Objective evaluated at the current iterate; returns the scalar to ascend.
using Objective = std::function<Tensor(Tape&, const Tensor& x_adv)>;

// Shared projected sign-ascent loop. Records the objective at the start point
// and after every step, so the trace has steps+1 entries.
AdvBatch sign_ascent_loop(const Tensor& x, const AttackSpec& spec, const Domain& domain,
                          Rng* rng, const Objective& objective,
                          bool momentum_normalized) {
    const std::size_t n = x.numel();
    const double alpha = spec.effective_alpha();
    std::vector<double> delta(n, 0.0);
    if (spec.random_start && rng) {
        for (double& d : delta) d = rng->uniform(-spec.eps, spec.eps);
        delta = clamp_to_domain(x, std::move(delta), spec.eps, domain);
    }
    std::vector<double> trace;
    trace.reserve(spec.steps + 1);
    std::vector<double> momentum(momentum_normalized ? n : 0, 0.0);
    const std::size_t rows = x.dim(0);
    const std::size_t cols = x.dim(1);

    for (std::size_t step = 0; step < spec.steps; ++step) {
        Tape tape;
        std::vector<double> xa(n);
        for (std::size_t i = 0; i < n; ++i) xa[i] = x.at(i) + delta[i];
        Tensor x_leaf = Tensor::leaf(x.shape(), std::move(xa), true);
        Tensor obj = objective(tape, x_leaf);
        trace.push_back(obj.scalar());
        tape.backward(obj);
        auto g = x_leaf.grad();

        if (momentum_normalized) {
            // g <- decay * g + grad / ||grad||_1 per sample; zero-gradient rows
            // skip the normalization step and leave the buffer unchanged.
            for (std::size_t r = 0; r < rows; ++r) {
                double l1 = 0.0;
                for (std::size_t c = 0; c < cols; ++c) l1 += std::abs(g[r * cols + c]);
                for (std::size_t c = 0; c < cols; ++c) {
                    const std::size_t ix = r * cols + c;
                    momentum[ix] *= spec.mim_decay;
                    if (l1 > 0.0) momentum[ix] += g[ix] / l1;
                }
            }
            for (std::size_t i = 0; i < n; ++i) delta[i] += alpha * sign0(momentum[i]);
        } else {
            for (std::size_t i = 0; i < n; ++i) delta[i] += alpha * sign0(g[i]);
        }
        delta = clamp_to_domain(x, std::move(delta), spec.eps, domain);
    }

    {
        Tape tape;
        std::vector<double> xa(n);
        for (std::size_t i = 0; i < n; ++i) xa[i] = x.at(i) + delta[i];
        Tensor x_leaf = Tensor::leaf(x.shape(), std::move(xa));
        trace.push_back(objective(tape, x_leaf).scalar());
    }
    return finish(x, std::move(delta), std::move(trace));
}

// Plain forward pass on raw doubles, independent of the tape machinery; this
// keeps the grid oracle a separate route from the implementation it checks.
double plain_ce_loss(const ModelWeights& w, std::span<const double> x_in, int y) {
    std::vector<double> h(x_in.begin(), x_in.end());
    const auto& sizes = w.spec.layer_sizes;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const std::size_t fi = sizes[l], fo = sizes[l + 1];
        std::vector<double> out(fo);
        const auto wd = w.weights[l].data();
        const auto bd = w.biases[l].data();
        for (std::size_t j = 0; j < fo; ++j) {
            double acc = bd[j];
            for (std::size_t i = 0; i < fi; ++i) acc += h[i] * wd[i * fo + j];
            out[j] = acc;
        }
        if (l + 2 < sizes.size())
            for (double& v : out) v = v > 0.0 ? v : 0.0;
        h = std::move(out);
    }
    double mx = h[0];
    for (double v : h) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : h) sum += std::exp(v - mx);
    return std::log(sum) - (h[static_cast<std::size_t>(y)] - mx);
}

} // namespace

AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "fgsm") return AttackKind::Fgsm;
    if (s == "pgd") return AttackKind::Pgd;
    if (s == "mim") return AttackKind::Mim;
    if (s == "cw") return AttackKind::Cw;
    throw SpecError("unknown attack kind: " + s);
}

std::string to_string(AttackKind k) {
    switch (k) {
    case AttackKind::Fgsm: return "fgsm";
    case AttackKind::Pgd: return "pgd";
    case AttackKind::Mim: return "mim";
    case AttackKind::Cw: return "cw";
    }
    return "?";
}

void AttackSpec::validate() const {
    if (eps < 0.0) throw SpecError("attack spec: eps must be >= 0");
    if (alpha < 0.0) throw SpecError("attack spec: alpha must be >= 0");
    if (steps < 1) throw SpecError("attack spec: steps must be >= 1");
    if (mim_decay < 0.0) throw SpecError("attack spec: mim_decay must be >= 0");
}

void project_linf(std::span<double> delta, double eps) {
    for (double& d : delta) d = std::min(eps, std::max(-eps, d));
}

Tensor project_linf(const Tensor& delta, double eps) {
    std::vector<double> d(delta.data().begin(), delta.data().end());
    project_linf(std::span<double>(d), eps);
    return Tensor::leaf(delta.shape(), std::move(d));
}

AdvBatch fgsm(const ModelWeights& w, const Tensor& x, const std::vector<int>& y,
              const AttackSpec& spec, const Domain& domain) {
    spec.validate();
    Tape tape;
    Tensor x_leaf = Tensor::leaf(x.shape(), {x.data().begin(), x.data().end()}, true);
    Tensor loss = tape.cross_entropy(forward(tape, w, x_leaf), y);
    std::vector<double> trace{loss.scalar()};
    tape.backward(loss);
    auto g = x_leaf.grad();
    std::vector<double> delta(x.numel());
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = spec.eps * sign0(g[i]);
    delta = clamp_to_domain(x, std::move(delta), spec.eps, domain);
    std::vector<double> xa(x.numel());
    for (std::size_t i = 0; i < xa.size(); ++i) xa[i] = x.at(i) + delta[i];
    {
        Tape t2;
        Tensor xf = Tensor::leaf(x.shape(), std::move(xa));
        trace.push_back(t2.cross_entropy(forward(t2, w, xf), y).scalar());
    }
    return finish(x, std::move(delta), std::move(trace));
}

AdvBatch pgd(const ModelWeights& w, const Tensor& x, const std::vector<int>& y,
             const AttackSpec& spec, const Domain& domain, Rng* rng) {
    spec.validate();
    return sign_ascent_loop(
        x, spec, domain, rng,
        [&](Tape& tape, const Tensor& xa) { return tape.cross_entropy(forward(tape, w, xa), y); },
        false);
}

AdvBatch mim(const ModelWeights& w, const Tensor& x, const std::vector<int>& y,
             const AttackSpec& spec, const Domain& domain, Rng* rng) {
    spec.validate();
    return sign_ascent_loop(
        x, spec, domain, rng,
        [&](Tape& tape, const Tensor& xa) { return tape.cross_entropy(forward(tape, w, xa), y); },
        true);
}

AdvBatch cw_margin_pgd(const ModelWeights& w, const Tensor& x, const std::vector<int>& y,
                       const AttackSpec& spec, const Domain& domain, Rng* rng) {
    spec.validate();
    // Ascends the negated clamped margin; the trace records that objective.
    return sign_ascent_loop(
        x, spec, domain, rng,
        [&](Tape& tape, const Tensor& xa) {
            return tape.scale(tape.cw_margin(forward(tape, w, xa), y, spec.cw_kappa), -1.0);
        },
        false);
}

AdvBatch run_attack(const ModelWeights& w, const Tensor& x, const std::vector<int>& y,
                    const AttackSpec& spec, const Domain& domain, Rng* rng) {
    switch (spec.kind) {
    case AttackKind::Fgsm: return fgsm(w, x, y, spec, domain);
    case AttackKind::Pgd: return pgd(w, x, y, spec, domain, rng);
    case AttackKind::Mim: return mim(w, x, y, spec, domain, rng);
    case AttackKind::Cw: return cw_margin_pgd(w, x, y, spec, domain, rng);
    }
    throw SpecError("run_attack: bad attack kind");
}

AdvBatch kl_ascent(const ModelWeights& w, const Tensor& x, const Tensor& p_ref_logits,
                   const AttackSpec& spec, const Domain& domain, Rng* rng) {
    spec.validate();
    Tensor p_ref = Tensor::leaf(p_ref_logits.shape(),
                                {p_ref_logits.data().begin(), p_ref_logits.data().end()});
    return sign_ascent_loop(
        x, spec, domain, rng,
        [&, p_ref](Tape& tape, const Tensor& xa) {
            return tape.kl_divergence(p_ref, forward(tape, w, xa));
        },
        false);
}

BruteForceResult brute_force_worst_case(const ModelWeights& w, std::span<const double> x, int y,
                                        double eps, std::size_t grid_n, const Domain& domain) {
    const std::size_t dim = x.size();
    if (dim > 3)
        throw CapabilityError("brute_force_worst_case: input dimension " + std::to_string(dim) +
                              " exceeds 3");
    if (grid_n < 1 || grid_n > 301)
        throw ContractError("brute_force_worst_case: grid_n must be in [1, 301]");
    if (dim != w.spec.input_dim())
        throw DimensionError("brute_force_worst_case: input dim mismatch");

    std::vector<double> axis;
    if (eps == 0.0 || grid_n == 1) {
        axis.push_back(0.0);
    } else {
        axis.resize(grid_n);
        for (std::size_t i = 0; i < grid_n; ++i)
            axis[i] = -eps + 2.0 * eps * static_cast<double>(i) / static_cast<double>(grid_n - 1);
    }

    BruteForceResult best;
    best.delta.assign(dim, 0.0);
    best.loss = -std::numeric_limits<double>::infinity();
    std::vector<double> delta(dim, 0.0), probe(dim, 0.0);
    const std::size_t total = [&] {
        std::size_t t = 1;
        for (std::size_t d = 0; d < dim; ++d) t *= axis.size();
        return t;
    }();
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat;
        for (std::size_t d = 0; d < dim; ++d) {
            delta[d] = axis[rem % axis.size()];
            rem /= axis.size();
        }
        for (std::size_t d = 0; d < dim; ++d) probe[d] = domain.clamp(x[d] + delta[d]);
        const double loss = plain_ce_loss(w, probe, y);
        if (loss > best.loss) {
            best.loss = loss;
            for (std::size_t d = 0; d < dim; ++d) {
                best.delta[d] = probe[d] - x[d];
            }
        }
    }
    return best;
}

} // namespace hfat
