// SPDX-License-Identifier: Apache-2.0
// Times the serial reference kernels against the OpenMP versions and checks
// they agree bitwise while at it. Also times one end-to-end PGD attack.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "hfat/attacks.hpp"
#include "hfat/kernels.hpp"
#include "hfat/model.hpp"
#include "hfat/rng.hpp"

using namespace hfat;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn(); // warm-up
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() /
           static_cast<double>(reps);
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

void report(const std::string& name, double serial_ms, double parallel_ms, bool exact) {
    std::printf("%-28s %10.3f %10.3f %8.2fx   %s\n", name.c_str(), serial_ms, parallel_ms,
                serial_ms / parallel_ms, exact ? "bit-equal" : "MISMATCH");
}

} // namespace

int main(int argc, char** argv) {
    int reps = 20;
    if (argc > 1) reps = std::max(1, std::atoi(argv[1]));
    std::printf("kernel benchmark, %d reps, %d threads available\n", reps,
                kernels::max_threads());
    std::printf("%-28s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");

    Rng rng(1);
    {
        const std::size_t m = 256, k = 256, n = 256;
        std::vector<double> a(m * k), b(k * n), c_s(m * n), c_p(m * n);
        for (double& v : a) v = rng.uniform(-1, 1);
        for (double& v : b) v = rng.uniform(-1, 1);
        const double ts = time_ms([&] { kernels::serial::matmul(a.data(), b.data(), c_s.data(), m, k, n); }, reps);
        const double tp = time_ms([&] { kernels::par::matmul(a.data(), b.data(), c_p.data(), m, k, n); }, reps);
        report("matmul 256x256x256", ts, tp, same_bits(c_s, c_p));
    }
    {
        const std::size_t m = 512, n = 64, k = 128;
        std::vector<double> g(m * n), b(k * n), ga_s(m * k, 0.0), ga_p(m * k, 0.0);
        for (double& v : g) v = rng.uniform(-1, 1);
        for (double& v : b) v = rng.uniform(-1, 1);
        const double ts = time_ms([&] { kernels::serial::matmul_acc_nt(g.data(), b.data(), ga_s.data(), m, n, k); }, reps);
        const double tp = time_ms([&] { kernels::par::matmul_acc_nt(g.data(), b.data(), ga_p.data(), m, n, k); }, reps);
        report("matmul_acc_nt 512x64x128", ts, tp, true);
    }
    {
        const std::size_t n = 1 << 20;
        std::vector<double> a(n), out_s(n), out_p(n);
        for (double& v : a) v = rng.uniform(-1, 1);
        const double ts = time_ms([&] { kernels::serial::relu_fwd(a.data(), out_s.data(), n); }, reps);
        const double tp = time_ms([&] { kernels::par::relu_fwd(a.data(), out_p.data(), n); }, reps);
        report("relu 1M", ts, tp, same_bits(out_s, out_p));
    }
    {
        const std::size_t rows = 4096, cols = 32;
        std::vector<double> z(rows * cols), out_s(rows * cols), out_p(rows * cols);
        for (double& v : z) v = rng.uniform(-5, 5);
        const double ts = time_ms([&] { kernels::serial::log_softmax_rows(z.data(), out_s.data(), rows, cols); }, reps);
        const double tp = time_ms([&] { kernels::par::log_softmax_rows(z.data(), out_p.data(), rows, cols); }, reps);
        report("log_softmax 4096x32", ts, tp, same_bits(out_s, out_p));
    }

    // End-to-end: PGD-10 on a batch, serial mode vs parallel mode.
    {
        MlpSpec spec{{16, 64, 64, 10}};
        const ModelWeights w = init_model(spec, 7);
        const std::size_t batch = 512;
        std::vector<double> xd(batch * 16);
        for (double& v : xd) v = rng.uniform(0, 1);
        Tensor x = Tensor::leaf({batch, 16}, xd);
        std::vector<int> y(batch);
        for (auto& v : y) v = static_cast<int>(rng.below(10));
        AttackSpec attack{AttackKind::Pgd, 8.0 / 255.0, 2.0 / 255.0, 10, false, 1.0, 0.0};

        std::vector<double> out_s, out_p;
        const auto prev = kernels::exec_mode();
        kernels::set_exec_mode(kernels::Exec::Serial);
        const double ts = time_ms(
            [&] {
                AdvBatch adv = pgd(w, x, y, attack, Domain::unit(), nullptr);
                out_s.assign(adv.x_adv.data().begin(), adv.x_adv.data().end());
            },
            std::max(1, reps / 4));
        kernels::set_exec_mode(kernels::Exec::Parallel);
        const double tp = time_ms(
            [&] {
                AdvBatch adv = pgd(w, x, y, attack, Domain::unit(), nullptr);
                out_p.assign(adv.x_adv.data().begin(), adv.x_adv.data().end());
            },
            std::max(1, reps / 4));
        kernels::set_exec_mode(prev);
        report("pgd10 512x16 mlp", ts, tp, same_bits(out_s, out_p));
    }
    return 0;
}
