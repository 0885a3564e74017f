// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "hfat/dataset.hpp"
#include "hfat/tensor.hpp"
#include "hfat/trainer.hpp"
#include "test_support.hpp"

using namespace hfat;
using namespace hfat::testing;

namespace {
std::filesystem::path tmpdir() {
    auto p = std::filesystem::temp_directory_path() / "hfat_dataset_tests";
    std::filesystem::create_directories(p);
    return p;
}
} // namespace

TEST_CASE("same dataset spec twice gives identical bytes") {
    DatasetSpec spec;
    spec.kind = DatasetKind::Moons;
    spec.n_samples = 120;
    spec.noise = 0.15;
    spec.seed = 5;
    const Dataset a = make_dataset(spec);
    const Dataset b = make_dataset(spec);
    CHECK(tensors_equal(a.x_train, b.x_train));
    CHECK(tensors_equal(a.x_test, b.x_test));
    CHECK(a.y_train == b.y_train);
    CHECK(a.y_test == b.y_test);
    CHECK(a.y_train.size() == 80); // 2/3 of 120
    CHECK(a.y_test.size() == 40);
}

TEST_CASE("zero-noise blobs with two centers are linearly separable") {
    DatasetSpec spec;
    spec.kind = DatasetKind::Blobs;
    spec.n_samples = 60;
    spec.n_classes = 2;
    spec.noise = 0.0;
    spec.dim = 4;
    spec.seed = 9;
    spec.domain = Domain::unit();
    const Dataset ds = make_dataset(spec);

    // Fit a linear probe with a few plain gradient steps; zero-noise blobs
    // collapse onto their centers so it must reach 100%.
    MlpSpec probe_spec{{4, 2}};
    ModelWeights probe = init_model(probe_spec, 1);
    SgdState state = SgdState::zeros_like(probe);
    for (int step = 0; step < 200; ++step) {
        GradVector grads;
        {
            probe.set_requires_grad(true);
            Tape tape;
            Tensor loss = tape.cross_entropy(forward(tape, probe, ds.x_train), ds.y_train);
            tape.backward(loss);
            for (auto* t : probe.tensors()) {
                auto g = t->grad();
                grads.emplace_back(g.begin(), g.end());
                t->zero_grad();
            }
            probe.set_requires_grad(false);
        }
        sgd_momentum_step(probe, grads, state, 0.5, 0.0, 0.0);
    }
    const auto pred_train = predict(probe, ds.x_train);
    const auto pred_test = predict(probe, ds.x_test);
    CHECK(pred_train == ds.y_train);
    CHECK(pred_test == ds.y_test);
}

TEST_CASE("blobs honor the domain box") {
    DatasetSpec spec;
    spec.kind = DatasetKind::Blobs;
    spec.n_samples = 200;
    spec.n_classes = 10;
    spec.noise = 0.25;
    spec.dim = 16;
    spec.seed = 3;
    spec.domain = Domain::unit();
    const Dataset ds = make_dataset(spec);
    for (double v : ds.x_train.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("dataset csv round-trip is identical") {
    DatasetSpec spec;
    spec.kind = DatasetKind::Moons;
    spec.n_samples = 50;
    spec.noise = 0.2;
    spec.seed = 21;
    const Dataset ds = make_dataset(spec);
    const auto path = tmpdir() / "moons.csv";
    save_dataset_csv(ds, path);

    DatasetSpec csv_spec;
    csv_spec.kind = DatasetKind::Csv;
    csv_spec.path = path.string();
    csv_spec.n_classes = 2;
    const Dataset back = make_dataset(csv_spec);
    CHECK(tensors_equal(back.x_train, ds.x_train));
    CHECK(tensors_equal(back.x_test, ds.x_test));
    CHECK(back.y_train == ds.y_train);
    CHECK(back.y_test == ds.y_test);
}

TEST_CASE("malformed csv rows carry line numbers") {
    const auto path = tmpdir() / "broken.csv";
    {
        std::ofstream os(path, std::ios::trunc);
        os << "split,label,x0,x1\n";
        os << "train,0,0.5,0.25\n";
        os << "train,zero,0.5,0.25\n";
    }
    DatasetSpec spec;
    spec.kind = DatasetKind::Csv;
    spec.path = path.string();
    try {
        (void)make_dataset(spec);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("invalid dataset specs are rejected") {
    DatasetSpec spec;
    spec.kind = DatasetKind::Moons;
    spec.n_samples = 1;
    CHECK_THROWS_AS((void)make_dataset(spec), SpecError);
    spec.n_samples = 100;
    spec.noise = -0.5;
    CHECK_THROWS_AS((void)make_dataset(spec), SpecError);
    spec.noise = 0.1;
    spec.train_fraction = 1.5;
    CHECK_THROWS_AS((void)make_dataset(spec), SpecError);
}
