// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hfat/model.hpp"
#include "test_support.hpp"

using namespace hfat;
using namespace hfat::testing;

namespace {
std::filesystem::path tmpdir() {
    auto p = std::filesystem::temp_directory_path() / "hfat_model_tests";
    std::filesystem::create_directories(p);
    return p;
}
} // namespace

TEST_CASE("init is deterministic, biases zero, scale near sqrt(2/fan_in)") {
    MlpSpec spec{{256, 256, 10}};
    const ModelWeights a = init_model(spec, 42);
    const ModelWeights b = init_model(spec, 42);
    CHECK(weights_equal(a, b));
    const ModelWeights c = init_model(spec, 43);
    CHECK_FALSE(weights_equal(a, c));

    for (const auto& bias : a.biases)
        for (double v : bias.data()) CHECK(v == 0.0);

    double sq = 0.0;
    for (double v : a.weights[0].data()) sq += v * v;
    const double std_hat = std::sqrt(sq / static_cast<double>(a.weights[0].numel()));
    const double target = std::sqrt(2.0 / 256.0);
    CHECK(std_hat == doctest::Approx(target).epsilon(0.10));

    CHECK_THROWS_AS(init_model(MlpSpec{{4, 0, 2}}, 1), SpecError);
    CHECK_THROWS_AS(init_model(MlpSpec{{4}}, 1), SpecError);
}

TEST_CASE("forward reproduces an explicit affine map and zero weights give uniform logits") {
    ModelWeights lin = logistic_2d(1.0, -2.0, 0.5, 3.0, 0.25, -0.5);
    Tape tape;
    Tensor x = Tensor::leaf({1, 2}, {2.0, -1.0});
    Tensor logits = forward(tape, lin, x);
    CHECK(logits.at(0) == doctest::Approx(1.0 * 2.0 + 0.5 * -1.0 + 0.25).epsilon(1e-15));
    CHECK(logits.at(1) == doctest::Approx(-2.0 * 2.0 + 3.0 * -1.0 - 0.5).epsilon(1e-15));

    MlpSpec spec{{3, 4, 5}};
    ModelWeights zero;
    zero.spec = spec;
    zero.weights = {Tensor::zeros({3, 4}), Tensor::zeros({4, 5})};
    zero.biases = {Tensor::zeros({4}), Tensor::zeros({5})};
    Tensor z = forward_nograd(zero, Tensor::leaf({2, 3}, {1, 2, 3, 4, 5, 6}));
    for (double v : z.data()) CHECK(v == 0.0);

    CHECK_THROWS_AS((void)forward_nograd(zero, Tensor::leaf({1, 2}, {1, 2})), DimensionError);
}

TEST_CASE("input gradient of CE(forward) matches finite differences") {
    MlpSpec spec{{3, 8, 4}};
    const ModelWeights w = init_model(spec, 7);
    Rng rng(19);
    const auto x0 = random_vector(rng, 6);
    const std::vector<int> y{1, 3};
    auto run = [&](std::span<const double> xv) {
        Tape t;
        Tensor x = Tensor::leaf({2, 3}, {xv.begin(), xv.end()});
        return t.cross_entropy(forward(t, w, x), y).scalar();
    };
    Tape tape;
    Tensor x = Tensor::leaf({2, 3}, x0, true);
    tape.backward(tape.cross_entropy(forward(tape, w, x), y));
    CHECK(max_rel_error(x.grad(), finite_difference_grad(run, x0)) < 1e-5);
}

TEST_CASE("predict argmax with deterministic tie-break") {
    ModelWeights lin = logistic_2d(0, 0, 0, 0);
    lin.biases[0] = Tensor::leaf({2}, {0.5, 0.5});
    CHECK(predict(lin, Tensor::leaf({1, 2}, {1, 1}))[0] == 0); // exact tie -> class 0

    MlpSpec spec{{1, 3}};
    ModelWeights w3;
    w3.spec = spec;
    w3.weights = {Tensor::zeros({1, 3})};
    w3.biases = {Tensor::leaf({3}, {0.1, 0.9, 0.0})};
    CHECK(predict(w3, Tensor::leaf({1, 1}, {0.0}))[0] == 1);
}

TEST_CASE("predict is invariant under increasing logit transforms") {
    MlpSpec spec{{4, 6, 3}};
    const ModelWeights w = init_model(spec, 11);
    Rng rng(29);
    Tensor x = Tensor::leaf({16, 4}, random_vector(rng, 64));
    const auto base = predict(w, x);

    // Shift every logit by a constant and scale positively via the last layer.
    for (double shift : {1.0, 123.0}) {
        ModelWeights shifted = w.clone();
        auto bias = shifted.biases.back().mutable_data();
        for (double& v : bias) v += shift;
        CHECK(predict(shifted, x) == base);
    }
    ModelWeights scaled = w.clone();
    for (double& v : scaled.weights.back().mutable_data()) v *= 2.5;
    for (double& v : scaled.biases.back().mutable_data()) v *= 2.5;
    CHECK(predict(scaled, x) == base);

    // Agreement with the softmax-probability argmax.
    const Tensor logits = forward_nograd(w, x);
    const auto probs = softmax_rows(logits);
    for (std::size_t r = 0; r < 16; ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < 3; ++c)
            if (probs[r * 3 + c] > probs[r * 3 + best]) best = c;
        CHECK(base[r] == static_cast<int>(best));
    }
}

TEST_CASE("batched forward equals row-wise forward") {
    MlpSpec spec{{5, 16, 4}};
    const ModelWeights w = init_model(spec, 3);
    Rng rng(37);
    const auto xd = random_vector(rng, 40);
    Tensor batch = Tensor::leaf({8, 5}, xd);
    const Tensor full = forward_nograd(w, batch);
    for (std::size_t r = 0; r < 8; ++r) {
        Tensor row = Tensor::leaf({1, 5}, {xd.begin() + static_cast<std::ptrdiff_t>(r * 5),
                                           xd.begin() + static_cast<std::ptrdiff_t>((r + 1) * 5)});
        const Tensor one = forward_nograd(w, row);
        for (std::size_t c = 0; c < 4; ++c)
            CHECK(std::abs(full.at(r * 4 + c) - one.at(c)) <= 1e-12);
    }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    MlpSpec spec{{6, 12, 3}};
    Checkpoint c{spec, init_model(spec, 99), 17, 99, 1};
    const auto path = tmpdir() / "roundtrip.ckpt";
    save_checkpoint(c, path);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.epoch == 17);
    CHECK(back.seed == 99);
    CHECK(back.spec == spec);
    CHECK(weights_equal(back.weights, c.weights));
}

TEST_CASE("checkpoint format errors") {
    MlpSpec spec{{4, 2}};
    Checkpoint c{spec, init_model(spec, 1), 1, 1, 1};
    const auto good = tmpdir() / "good.ckpt";
    save_checkpoint(c, good);

    // Truncated file.
    const auto truncated = tmpdir() / "truncated.ckpt";
    {
        std::ifstream in(good, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        std::ofstream out(truncated, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS((void)load_checkpoint(truncated), FormatError);

    // Bad magic.
    const auto badmagic = tmpdir() / "badmagic.ckpt";
    {
        std::ifstream in(good, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        bytes[0] = 'X';
        std::ofstream out(badmagic, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS((void)load_checkpoint(badmagic), FormatError);

    // Unsupported version (version+1 at offset 8, little endian).
    const auto badver = tmpdir() / "badversion.ckpt";
    {
        std::ifstream in(good, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        bytes[8] = 2;
        std::ofstream out(badver, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS((void)load_checkpoint(badver), FormatError);

    // Trailing bytes beyond the declared shapes.
    const auto trailing = tmpdir() / "trailing.ckpt";
    {
        std::filesystem::copy_file(good, trailing,
                                   std::filesystem::copy_options::overwrite_existing);
        std::ofstream out(trailing, std::ios::binary | std::ios::app);
        const char pad[4] = {0, 0, 0, 0};
        out.write(pad, 4);
    }
    CHECK_THROWS_AS((void)load_checkpoint(trailing), FormatError);
}
