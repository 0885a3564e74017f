// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "hfat/auxiliary.hpp"
#include "test_support.hpp"

using namespace hfat;
using namespace hfat::testing;

TEST_CASE("transform_T endpoints and ball invariant") {
    Rng rng(3);
    Tensor x = Tensor::leaf({2, 3}, random_vector(rng, 6));
    std::vector<double> adv(6);
    for (std::size_t i = 0; i < 6; ++i) adv[i] = x.at(i) + (i % 2 ? 0.1 : -0.1);
    Tensor x_adv = Tensor::leaf({2, 3}, adv);
    const double eps = 0.1;

    const ProbePoint at_x =
        transform_T(x, x_adv, 0.0, eps, Domain::unbounded(), nullptr, 0.0);
    CHECK(tensors_equal(at_x.x_probe, x));

    const ProbePoint at_adv =
        transform_T(x, x_adv, 1.0, eps, Domain::unbounded(), nullptr, 0.0);
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(at_adv.x_probe.at(i) == doctest::Approx(x_adv.at(i)).epsilon(1e-12));

    Rng noise_rng(17);
    for (int trial = 0; trial < 10000; ++trial) {
        const double r = noise_rng.uniform(0.0, 2.0);
        const ProbePoint p =
            transform_T(x, x_adv, r, eps, Domain::unbounded(), &noise_rng, eps / 10.0);
        for (std::size_t i = 0; i < 6; ++i)
            CHECK(std::abs(p.x_probe.at(i) - x.at(i)) <= eps + 1e-12);
    }

    // Boundary case: x_adv exactly on the ball surface, extrapolation r > 1.
    std::vector<double> on_ball(6);
    for (std::size_t i = 0; i < 6; ++i) on_ball[i] = x.at(i) + eps;
    const ProbePoint clamped = transform_T(x, Tensor::leaf({2, 3}, on_ball), 2.0, eps,
                                           Domain::unbounded(), nullptr, 0.0);
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(std::abs(clamped.x_probe.at(i) - x.at(i)) <= eps + 1e-12);

    CHECK_THROWS_AS(
        (void)transform_T(x, x_adv, 0.5, eps, Domain::unbounded(), nullptr, 0.01),
        ContractError);

    // Domain clamp applies after the ball clamp.
    const ProbePoint boxed = transform_T(x, x_adv, 1.0, eps, Domain::unit(), nullptr, 0.0);
    for (double v : boxed.x_probe.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("reverse_train_step ascends and is deterministic") {
    MlpSpec spec{{3, 8, 2}};
    const ModelWeights theta = init_model(spec, 31);
    Rng rng(5);
    ProbePoint probe;
    probe.x_probe = Tensor::leaf({4, 3}, random_vector(rng, 12));
    const std::vector<int> y{0, 1, 1, 0};

    const ModelWeights still = reverse_train_step(theta, probe, y, 0.0);
    CHECK(weights_equal(still, theta));

    const ModelWeights up = reverse_train_step(theta, probe, y, 1e-3);
    const ModelWeights up2 = reverse_train_step(theta, probe, y, 1e-3);
    CHECK(weights_equal(up, up2));
    CHECK_FALSE(weights_equal(up, theta));

    auto loss_of = [&](const ModelWeights& w) {
        Tape tape;
        return tape.cross_entropy(forward(tape, w, probe.x_probe), y).scalar();
    };
    CHECK(loss_of(up) >= loss_of(theta) - 1e-9);

    // Single-step displacement bound: |theta_hat - theta| <= eta * |grad|_inf.
    ModelWeights diff = theta.clone();
    diff.set_requires_grad(true);
    Tape tape;
    tape.backward(tape.cross_entropy(forward(tape, diff, probe.x_probe), y));
    double gmax = 0.0;
    for (auto* t : diff.tensors())
        for (double g : t->grad()) gmax = std::max(gmax, std::abs(g));
    for (std::size_t l = 0; l < theta.weights.size(); ++l)
        for (std::size_t i = 0; i < theta.weights[l].numel(); ++i)
            CHECK(std::abs(up.weights[l].at(i) - theta.weights[l].at(i)) <=
                  1e-3 * gmax + 1e-18);

    // The input weights are untouched.
    const ModelWeights fresh = init_model(spec, 31);
    CHECK(weights_equal(theta, fresh));
}

TEST_CASE("compute_momentum_p closed form with a zeroed output layer") {
    MlpSpec spec{{2, 4, 3}};
    ModelWeights theta_hat = init_model(spec, 7);
    for (double& v : theta_hat.weights[1].mutable_data()) v = 0.0;
    for (double& v : theta_hat.biases[1].mutable_data()) v = 0.0;

    Rng rng(11);
    Tensor x = Tensor::leaf({6, 2}, random_vector(rng, 12));
    const std::vector<int> y{0, 1, 2, 0, 1, 0};
    AttackSpec aux{AttackKind::Pgd, 0.1, 0.025, 5, false, 1.0, 0.0};
    const MomentumResult res = compute_momentum_p(theta_hat, x, y, aux, Domain::unbounded(),
                                                  nullptr);

    // Zero output layer: logits are identically zero, softmax is uniform, so
    // the last-layer bias gradient is mean(1/C - onehot).
    const auto& bias_grad = res.p.parts[3];
    REQUIRE(bias_grad.size() == 3);
    const double counts[3] = {3, 2, 1};
    for (std::size_t c = 0; c < 3; ++c) {
        const double expected = (1.0 / 3.0) - counts[c] / 6.0;
        CHECK(bias_grad[c] == doctest::Approx(expected).epsilon(1e-12));
    }
    // Shape congruence with the model weights.
    REQUIRE(res.p.parts.size() == 4);
    CHECK(res.p.parts[0].size() == 8);
    CHECK(res.p.parts[1].size() == 4);
    CHECK(res.p.parts[2].size() == 12);
    for (const auto& block : res.p.parts)
        for (double v : block) CHECK(std::isfinite(v));

    AttackSpec bad = aux;
    bad.steps = 0;
    CHECK_THROWS_AS((void)compute_momentum_p(theta_hat, x, y, bad, Domain::unbounded(), nullptr),
                    ContractError);
    AttackSpec wrong_kind = aux;
    wrong_kind.kind = AttackKind::Fgsm;
    CHECK_THROWS_AS(
        (void)compute_momentum_p(theta_hat, x, y, wrong_kind, Domain::unbounded(), nullptr),
        ContractError);
}

TEST_CASE("momentum p agrees with finite differences at the fixed adversarial batch") {
    MlpSpec spec{{2, 5, 2}};
    const ModelWeights theta_hat = init_model(spec, 13);
    Rng rng(17);
    Tensor x = Tensor::leaf({3, 2}, random_vector(rng, 6));
    const std::vector<int> y{0, 1, 1};
    AttackSpec aux{AttackKind::Pgd, 0.15, 0.0375, 5, false, 1.0, 0.0};
    const MomentumResult res = compute_momentum_p(theta_hat, x, y, aux, Domain::unbounded(),
                                                  nullptr);

    // p is an ordinary weight gradient once delta* is frozen.
    const auto tensors = theta_hat.tensors();
    for (std::size_t b = 0; b < tensors.size(); ++b) {
        std::vector<double> base(tensors[b]->data().begin(), tensors[b]->data().end());
        auto run = [&](std::span<const double> v) {
            ModelWeights W = theta_hat.clone();
            auto blocks = W.tensors();
            auto data = blocks[b]->mutable_data();
            std::copy(v.begin(), v.end(), data.begin());
            Tape tape;
            return tape.cross_entropy(forward(tape, W, res.adv.x_adv), y).scalar();
        };
        const auto fd = finite_difference_grad(run, base);
        CHECK(max_rel_error(res.p.parts[b], fd) < 1e-5);
    }
}
