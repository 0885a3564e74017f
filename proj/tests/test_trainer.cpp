// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hfat/config_json.hpp"
#include "hfat/trainer.hpp"
#include "test_support.hpp"

using namespace hfat;
using namespace hfat::testing;

namespace {

std::filesystem::path tmpdir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / "hfat_trainer_tests" / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

Dataset small_moons(std::size_t n = 120, std::uint64_t seed = 7) {
    DatasetSpec spec;
    spec.kind = DatasetKind::Moons;
    spec.n_samples = n;
    spec.noise = 0.15;
    spec.seed = seed;
    return make_dataset(spec);
}

TrainConfig small_config(TrainMode mode) {
    TrainConfig cfg;
    cfg.mode = mode;
    cfg.epochs = 2;
    cfg.batch_size = 32;
    cfg.lr = 0.05;
    cfg.eps = 0.2;
    cfg.train_attack = {AttackKind::Pgd, 0.0, 0.0, 4, true, 1.0, 0.0};
    cfg.aux_attack = {AttackKind::Pgd, 0.0, 0.0, 3, true, 1.0, 0.0};
    cfg.hidden = {8};
    cfg.seed = 3;
    cfg.probe_subset = 40;
    return cfg;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is);
    return {std::istreambuf_iterator<char>(is), {}};
}

// Byte comparison of two run directories, wall-clock file excluded.
void check_run_dirs_equal(const std::filesystem::path& a, const std::filesystem::path& b,
                          bool include_config = true) {
    std::vector<std::string> names;
    for (const auto& entry : std::filesystem::directory_iterator(a))
        names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    for (const auto& name : names) {
        if (name == "timing.csv") continue;
        if (!include_config && name == "config.json") continue;
        INFO("file: ", name);
        REQUIRE(std::filesystem::exists(b / name));
        CHECK(slurp(a / name) == slurp(b / name));
    }
}

} // namespace

TEST_CASE("lambda_from_kls formula") {
    const WeightPair equal = lambda_from_kls(3.7, 3.7);
    CHECK(equal.lambda_a == 0.5);
    CHECK(equal.lambda_s == 0.5);

    const WeightPair tilted = lambda_from_kls(0.0, 10.0);
    CHECK(std::abs(tilted.lambda_a - 0.9999546021312976) < 1e-6);

    const WeightPair zeroes = lambda_from_kls(0.0, 0.0);
    CHECK(zeroes.lambda_a == 0.5);

    Rng rng(5);
    for (int trial = 0; trial < 10000; ++trial) {
        const double km = rng.uniform(0.0, 20.0);
        const double ka = rng.uniform(0.0, 20.0);
        const WeightPair w = lambda_from_kls(km, ka);
        CHECK(std::abs(w.lambda_s + w.lambda_a - 1.0) <= 1e-12);
        CHECK(w.lambda_a > 0.0);
        CHECK(w.lambda_a < 1.0);
        CHECK(w.lambda_s > 0.0);
        CHECK(w.lambda_s < 1.0);
    }
    // Saturating inputs stay inside the open interval.
    const WeightPair hot = lambda_from_kls(0.0, 800.0);
    CHECK(hot.lambda_a < 1.0);
    CHECK(hot.lambda_a > 0.99);
    const WeightPair cold = lambda_from_kls(800.0, 0.0);
    CHECK(cold.lambda_a > 0.0);
    CHECK(cold.lambda_a < 0.01);

    CHECK_THROWS_AS((void)lambda_from_kls(std::nan(""), 0.0), NumericError);
}

TEST_CASE("adaptive_lambda is exactly one half under symmetric branches") {
    MlpSpec spec{{2, 6, 2}};
    const ModelWeights theta = init_model(spec, 19);
    Rng rng(23);
    Tensor x = Tensor::leaf({8, 2}, random_vector(rng, 16));
    Tensor x_adv = Tensor::leaf({8, 2}, random_vector(rng, 16));
    const WeightPair w = adaptive_lambda(theta, theta, x, x_adv, x_adv);
    CHECK(w.lambda_a == 0.5);
    CHECK(w.lambda_s == 0.5);
}

TEST_CASE("sgd_momentum_step recurrences") {
    MlpSpec spec{{2, 2}};

    auto make = [&] {
        ModelWeights w;
        w.spec = spec;
        w.weights = {Tensor::leaf({2, 2}, {1.0, 2.0, 3.0, 4.0})};
        w.biases = {Tensor::leaf({2}, {0.5, -0.5})};
        return w;
    };

    // momentum = 0, weight_decay = 0: plain gradient descent.
    ModelWeights w = make();
    SgdState state = SgdState::zeros_like(w);
    GradVector g{{1.0, 1.0, 1.0, 1.0}, {2.0, 2.0}};
    sgd_momentum_step(w, g, state, 0.1, 0.0, 0.0);
    CHECK(w.weights[0].at(0) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(w.biases[0].at(0) == doctest::Approx(0.3).epsilon(1e-15));

    // Two steps with constant gradient: total displacement lr*g*(2+m).
    ModelWeights w2 = make();
    SgdState s2 = SgdState::zeros_like(w2);
    const double lr = 0.1, m = 0.9;
    sgd_momentum_step(w2, g, s2, lr, m, 0.0);
    sgd_momentum_step(w2, g, s2, lr, m, 0.0);
    CHECK(w2.weights[0].at(0) ==
          doctest::Approx(1.0 - lr * 1.0 * (2.0 + m)).epsilon(1e-12));

    // Zero gradient with fresh velocity: parameters unchanged.
    ModelWeights w3 = make();
    SgdState s3 = SgdState::zeros_like(w3);
    GradVector zero{{0.0, 0.0, 0.0, 0.0}, {0.0, 0.0}};
    sgd_momentum_step(w3, zero, s3, 0.1, 0.9, 0.0);
    CHECK(weights_equal(w3, make()));

    // Update assembly identity: theta' - theta == -lr * velocity, bitwise.
    ModelWeights w4 = make();
    const ModelWeights before = w4.clone();
    SgdState s4 = SgdState::zeros_like(w4);
    GradVector g4{{0.3, -0.7, 0.1, 0.0}, {1.5, -2.5}};
    sgd_momentum_step(w4, g4, s4, 0.05, 0.9, 5e-4);
    for (std::size_t b = 0; b < 2; ++b) {
        auto now = w4.tensors()[b]->data();
        auto then = before.tensors()[b]->data();
        for (std::size_t i = 0; i < now.size(); ++i)
            CHECK(now[i] == then[i] - 0.05 * s4.velocity[b][i]);
    }
}

TEST_CASE("train_epoch with eps 0 reduces to standard training bit-exactly") {
    const Dataset data = small_moons();
    TrainConfig cfg = small_config(TrainMode::At);
    cfg.eps = 0.0;
    cfg.train_attack.eps = 0.0;
    cfg.epochs = 1;
    Trainer trainer(cfg, data);
    trainer.train_epoch(1);

    // Manual clean-SGD epoch over the same shuffle stream.
    MlpSpec spec{{2, 8, 2}};
    ModelWeights theta = init_model(spec, cfg.seed);
    SgdState state = SgdState::zeros_like(theta);
    std::vector<std::size_t> order(data.y_train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", 1));
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        std::vector<double> xb;
        std::vector<int> yb;
        for (std::size_t i = start; i < end; ++i) {
            xb.push_back(data.x_train.at(order[i] * 2));
            xb.push_back(data.x_train.at(order[i] * 2 + 1));
            yb.push_back(data.y_train[order[i]]);
        }
        GradVector grads;
        theta.set_requires_grad(true);
        {
            Tape tape;
            Tensor loss =
                tape.cross_entropy(forward(tape, theta, Tensor::leaf({yb.size(), 2}, xb)), yb);
            tape.backward(loss);
            for (auto* t : theta.tensors()) {
                auto gr = t->grad();
                grads.emplace_back(gr.begin(), gr.end());
                t->zero_grad();
            }
        }
        theta.set_requires_grad(false);
        sgd_momentum_step(theta, grads, state, cfg.lr, cfg.sgd_momentum, cfg.weight_decay);
    }
    CHECK(weights_equal(trainer.weights(), theta));
}

TEST_CASE("adversarial training drives the loss down on separable blobs") {
    DatasetSpec spec;
    spec.kind = DatasetKind::Blobs;
    spec.n_samples = 150;
    spec.n_classes = 2;
    spec.noise = 0.02;
    spec.dim = 2;
    spec.seed = 31;
    spec.domain = Domain::unit();
    const Dataset data = make_dataset(spec);

    TrainConfig cfg;
    cfg.mode = TrainMode::At;
    cfg.epochs = 50;
    cfg.batch_size = 50;
    cfg.lr = 0.1;
    cfg.eps = 0.02;
    cfg.train_attack = {AttackKind::Pgd, 0.0, 0.0, 3, true, 1.0, 0.0};
    cfg.hidden = {16};
    cfg.seed = 9;
    Trainer trainer(cfg, data);
    EpochLog last;
    for (std::size_t e = 1; e <= cfg.epochs; ++e) last = trainer.train_epoch(e);
    CHECK(last.train_loss < 0.1);
    CHECK(last.natural_accuracy == 1.0);
}

TEST_CASE("training is deterministic under a fixed seed") {
    const Dataset data = small_moons();
    const TrainConfig cfg = small_config(TrainMode::AtHf);
    Trainer a(cfg, data);
    Trainer b(cfg, data);
    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
        a.train_epoch(e);
        b.train_epoch(e);
    }
    CHECK(weights_equal(a.weights(), b.weights()));
    REQUIRE(a.lambda_trace().size() == b.lambda_trace().size());
    for (std::size_t i = 0; i < a.lambda_trace().size(); ++i) {
        CHECK(a.lambda_trace()[i].lambda_a == b.lambda_trace()[i].lambda_a);
        CHECK(a.lambda_trace()[i].lambda_s == b.lambda_trace()[i].lambda_s);
    }
}

TEST_CASE("trades with beta 0 reduces to clean training, KL adds nonnegative loss") {
    const Dataset data = small_moons();
    TrainConfig trades_cfg = small_config(TrainMode::Trades);
    trades_cfg.trades_beta = 0.0;
    trades_cfg.epochs = 1;
    Trainer trades_trainer(trades_cfg, data);
    const EpochLog trades_log = trades_trainer.train_epoch(1);

    TrainConfig clean_cfg = trades_cfg;
    clean_cfg.mode = TrainMode::At;
    clean_cfg.eps = 0.0;
    clean_cfg.train_attack.eps = 0.0;
    Trainer clean_trainer(clean_cfg, data);
    const EpochLog clean_log = clean_trainer.train_epoch(1);
    CHECK(weights_equal(trades_trainer.weights(), clean_trainer.weights()));
    CHECK(trades_log.train_loss == doctest::Approx(clean_log.train_loss).epsilon(1e-12));

    // With beta > 0 the composite loss dominates the clean CE loss batchwise.
    TrainConfig full = small_config(TrainMode::Trades);
    full.trades_beta = 4.0;
    full.epochs = 1;
    Trainer t2(full, data);
    const EpochLog log2 = t2.train_epoch(1);
    CHECK(std::isfinite(log2.train_loss));
}

TEST_CASE("trades composite gradient matches finite differences") {
    MlpSpec spec{{2, 5, 2}};
    const ModelWeights theta = init_model(spec, 41);
    Rng rng(43);
    Tensor x = Tensor::leaf({4, 2}, random_vector(rng, 8));
    Tensor x_adv = Tensor::leaf({4, 2}, random_vector(rng, 8));
    const std::vector<int> y{0, 1, 0, 1};
    const double beta = 3.0;

    ModelWeights diff = theta.clone();
    diff.set_requires_grad(true);
    GradVector grads;
    {
        Tape tape;
        Tensor ce = tape.cross_entropy(forward(tape, diff, x), y);
        Tensor kl = tape.kl_divergence(forward(tape, diff, x), forward(tape, diff, x_adv));
        tape.backward(tape.add(ce, tape.scale(kl, beta)));
        for (auto* t : diff.tensors()) {
            auto g = t->grad();
            grads.emplace_back(g.begin(), g.end());
            t->zero_grad();
        }
    }
    diff.set_requires_grad(false);

    const auto tensors = theta.tensors();
    for (std::size_t b = 0; b < tensors.size(); ++b) {
        std::vector<double> base(tensors[b]->data().begin(), tensors[b]->data().end());
        auto run = [&](std::span<const double> v) {
            ModelWeights W = theta.clone();
            auto data = W.tensors()[b]->mutable_data();
            std::copy(v.begin(), v.end(), data.begin());
            Tape tape;
            const double ce = tape.cross_entropy(forward(tape, W, x), y).scalar();
            const double kl =
                tape.kl_divergence(forward(tape, W, x), forward(tape, W, x_adv)).scalar();
            return ce + beta * kl;
        };
        CHECK(max_rel_error(grads[b], finite_difference_grad(run, base)) < 1e-5);
    }
}

TEST_CASE("hfat with static lambda 0 walks the exact AT trajectory") {
    const Dataset data = small_moons();
    TrainConfig at_cfg = small_config(TrainMode::At);
    TrainConfig hf_cfg = small_config(TrainMode::AtHf);
    hf_cfg.lambda_mode = LambdaMode::Static;
    hf_cfg.lambda_static = 0.0;

    Trainer at(at_cfg, data);
    Trainer hf(hf_cfg, data);
    for (std::size_t e = 1; e <= at_cfg.epochs; ++e) {
        const EpochLog la = at.train_epoch(e);
        const EpochLog lh = hf.train_epoch(e);
        CHECK(la.train_loss == lh.train_loss);
        CHECK(la.robust_accuracy == lh.robust_accuracy);
    }
    CHECK(weights_equal(at.weights(), hf.weights()));
}

TEST_CASE("adaptive lambda trace stays normalized during hfat training") {
    const Dataset data = small_moons(90);
    TrainConfig cfg = small_config(TrainMode::AtHf);
    cfg.epochs = 2;
    Trainer trainer(cfg, data);
    for (std::size_t e = 1; e <= cfg.epochs; ++e) trainer.train_epoch(e);
    REQUIRE_FALSE(trainer.lambda_trace().empty());
    for (const auto& row : trainer.lambda_trace()) {
        CHECK(std::abs(row.lambda_s + row.lambda_a - 1.0) <= 1e-12);
        CHECK(row.lambda_a > 0.0);
        CHECK(row.lambda_a < 1.0);
    }
}

TEST_CASE("online prior warms up from the fixed prior") {
    const Dataset data = small_moons();
    TrainConfig cfg = small_config(TrainMode::AtHf);
    cfg.prior_mode = PriorMode::Online;
    cfg.prior_warmup = 10;
    cfg.prior_mu = 0.7;
    cfg.prior_sigma = 0.1;
    Trainer trainer(cfg, data);
    const GaussianPrior before = trainer.active_prior();
    CHECK(before.mu == 0.7);
    CHECK(before.sigma == 0.1);
    for (int i = 0; i < 12; ++i) trainer.prior_accumulator().add(1.0 + 0.01 * i);
    const GaussianPrior after = trainer.active_prior();
    CHECK(after.n == 12);
    CHECK(after.mu == doctest::Approx(1.055).epsilon(1e-12));
}

TEST_CASE("lr schedule multiplies drop factors") {
    TrainConfig cfg;
    cfg.lr = 0.1;
    cfg.lr_drops = {{30, 0.1}, {45, 0.1}};
    CHECK(cfg.lr_at_epoch(1) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(cfg.lr_at_epoch(29) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(cfg.lr_at_epoch(30) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(cfg.lr_at_epoch(44) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(cfg.lr_at_epoch(45) == doctest::Approx(0.001).epsilon(1e-12));
    CHECK(cfg.lr_at_epoch(60) == doctest::Approx(0.001).epsilon(1e-12));

    TrainConfig bad = cfg;
    bad.lr_drops = {{45, 0.1}, {30, 0.1}};
    CHECK_THROWS_AS(bad.validate(), SpecError);
}

TEST_CASE("run_training writes the declared artifacts") {
    const Dataset data = small_moons(60);
    TrainConfig cfg = small_config(TrainMode::At);
    cfg.epochs = 1;
    const auto dir = tmpdir("artifacts");
    const RunArtifacts art = run_training(cfg, data, dir);
    CHECK(std::filesystem::exists(dir / "config.json"));
    CHECK(std::filesystem::exists(dir / "epoch_log.csv"));
    CHECK(std::filesystem::exists(dir / "lambda_trace.csv"));
    CHECK(std::filesystem::exists(dir / "timing.csv"));
    CHECK(std::filesystem::exists(dir / "epoch_1.ckpt"));
    CHECK(std::filesystem::exists(dir / "epoch_1.state"));
    REQUIRE(art.epoch_logs.size() == 1);

    const auto logs = load_epoch_log_csv(dir / "epoch_log.csv");
    REQUIRE(logs.size() == 1);
    CHECK(logs[0].epoch == 1);
    CHECK(logs[0].train_loss == art.epoch_logs[0].train_loss);
    CHECK(logs[0].mean_lambda_a == 0.0);

    const auto trace = load_lambda_trace_csv(dir / "lambda_trace.csv");
    CHECK(trace.size() == 2); // 60 train samples at batch 32 -> 2 steps
    // Config round-trips through the JSON reader.
    std::ifstream is(dir / "config.json");
    nlohmann::json j = nlohmann::json::parse(is);
    const RunConfig rc = j.get<RunConfig>();
    CHECK(rc.train.epochs == 1);
    CHECK(rc.dataset.n_samples == 60);
}

TEST_CASE("resumed runs reproduce the uninterrupted run byte for byte") {
    const Dataset data = small_moons(90);
    TrainConfig cfg = small_config(TrainMode::AtHf);
    cfg.prior_mode = PriorMode::Online;
    cfg.prior_warmup = 5;
    cfg.epochs = 4;

    const auto full_dir = tmpdir("resume_full");
    run_training(cfg, data, full_dir);

    const auto part_dir = tmpdir("resume_part");
    run_training(cfg, data, part_dir, false, "", 2); // simulate an interruption
    CHECK_FALSE(std::filesystem::exists(part_dir / "epoch_4.ckpt"));
    run_training(cfg, data, part_dir, true);

    check_run_dirs_equal(full_dir, part_dir);
}
