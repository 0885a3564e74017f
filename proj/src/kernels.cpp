// SPDX-License-Identifier: Apache-2.0
#include "hfat/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#ifdef HFAT_HAVE_OPENMP
#include <omp.h>
#endif

namespace hfat::kernels {

namespace {

#ifdef HFAT_HAVE_OPENMP
std::atomic<Exec> g_mode{Exec::Parallel};
#else
std::atomic<Exec> g_mode{Exec::Serial};
#endif

// Below these sizes the fork/join overhead outweighs the work. Elementwise
// kernels are memory-bound, so their cutoff is much higher than the flop one.
constexpr std::size_t kParElems = 1 << 16;
constexpr std::size_t kParFlops = 16384;

inline void matmul_row(const double* a, const double* b, double* c, std::size_t k,
                       std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) c[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        const double av = a[p];
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
}

inline void log_softmax_row(const double* z, double* out, std::size_t cols) {
    double mx = z[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, z[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += std::exp(z[c] - mx);
    const double lse = std::log(sum);
    for (std::size_t c = 0; c < cols; ++c) out[c] = z[c] - mx - lse;
}

} // namespace

Exec exec_mode() { return g_mode.load(std::memory_order_relaxed); }

void set_exec_mode(Exec mode) {
#ifndef HFAT_HAVE_OPENMP
    mode = Exec::Serial;
#endif
    g_mode.store(mode, std::memory_order_relaxed);
}

int max_threads() {
#ifdef HFAT_HAVE_OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace serial {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) matmul_row(a + i * k, b, c + i * n, k, n);
}

// ga += g * b^T, g is m x n, b is k x n, ga is m x k
void matmul_acc_nt(const double* g, const double* b, double* ga, std::size_t m, std::size_t n,
                   std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        double* garow = ga + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            garow[p] += acc;
        }
    }
}

// gb += a^T * g, a is m x k, g is m x n, gb is k x n
void matmul_acc_tn(const double* a, const double* g, double* gb, std::size_t m, std::size_t k,
                   std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        double* gbrow = gb + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = a[i * k + p];
            const double* grow = g + i * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
    }
}

void add_bias(const double* a, const double* bias, double* out, std::size_t rows,
              std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = a[i * cols + j] + bias[j];
}

void bias_grad_acc(const double* g, double* gb, std::size_t rows, std::size_t cols) {
    for (std::size_t j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < rows; ++i) acc += g[i * cols + j];
        gb[j] += acc;
    }
}

void relu_fwd(const double* a, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void relu_bwd_acc(const double* a, const double* g, double* ga, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (a[i] > 0.0) ga[i] += g[i];
}

void log_softmax_rows(const double* z, double* out, std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) log_softmax_row(z + i * cols, out + i * cols, cols);
}

} // namespace serial

namespace par {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
    if (m * k * n < kParFlops) {
        serial::matmul(a, b, c, m, k, n);
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
        matmul_row(a + i * k, b, c + i * n, k, n);
}

void matmul_acc_nt(const double* g, const double* b, double* ga, std::size_t m, std::size_t n,
                   std::size_t k) {
    if (m * n * k < kParFlops) {
        serial::matmul_acc_nt(g, b, ga, m, n, k);
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        const double* grow = g + i * n;
        double* garow = ga + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            garow[p] += acc;
        }
    }
}

void matmul_acc_tn(const double* a, const double* g, double* gb, std::size_t m, std::size_t k,
                   std::size_t n) {
    if (m * k * n < kParFlops) {
        serial::matmul_acc_tn(a, g, gb, m, k, n);
        return;
    }
    // Parallel over output rows of gb; the inner i-loop keeps the serial
    // accumulation order so results match the reference bitwise.
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(k); ++p) {
        double* gbrow = gb + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = a[i * k + p];
            const double* grow = g + i * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
    }
}

void add_bias(const double* a, const double* bias, double* out, std::size_t rows,
              std::size_t cols) {
    if (rows * cols < kParElems) {
        serial::add_bias(a, bias, out, rows, cols);
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i)
        for (std::size_t j = 0; j < cols; ++j)
            out[i * cols + j] = a[i * cols + j] + bias[j];
}

void bias_grad_acc(const double* g, double* gb, std::size_t rows, std::size_t cols) {
    if (rows * cols < kParElems) {
        serial::bias_grad_acc(g, gb, rows, cols);
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(cols); ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < rows; ++i) acc += g[i * cols + j];
        gb[j] += acc;
    }
}

void relu_fwd(const double* a, double* out, std::size_t n) {
    if (n < kParElems) {
        serial::relu_fwd(a, out, n);
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void relu_bwd_acc(const double* a, const double* g, double* ga, std::size_t n) {
    if (n < kParElems) {
        serial::relu_bwd_acc(a, g, ga, n);
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        if (a[i] > 0.0) ga[i] += g[i];
}

void log_softmax_rows(const double* z, double* out, std::size_t rows, std::size_t cols) {
    if (rows * cols < kParElems) {
        serial::log_softmax_rows(z, out, rows, cols);
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i)
        log_softmax_row(z + i * cols, out + i * cols, cols);
}

} // namespace par

#define HFAT_DISPATCH(fn, ...)                                                                 \
    do {                                                                                       \
        if (exec_mode() == Exec::Parallel)                                                     \
            par::fn(__VA_ARGS__);                                                              \
        else                                                                                   \
            serial::fn(__VA_ARGS__);                                                           \
    } while (0)

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
    HFAT_DISPATCH(matmul, a, b, c, m, k, n);
}
void matmul_acc_nt(const double* g, const double* b, double* ga, std::size_t m, std::size_t n,
                   std::size_t k) {
    HFAT_DISPATCH(matmul_acc_nt, g, b, ga, m, n, k);
}
void matmul_acc_tn(const double* a, const double* g, double* gb, std::size_t m, std::size_t k,
                   std::size_t n) {
    HFAT_DISPATCH(matmul_acc_tn, a, g, gb, m, k, n);
}
void add_bias(const double* a, const double* bias, double* out, std::size_t rows,
              std::size_t cols) {
    HFAT_DISPATCH(add_bias, a, bias, out, rows, cols);
}
void bias_grad_acc(const double* g, double* gb, std::size_t rows, std::size_t cols) {
    HFAT_DISPATCH(bias_grad_acc, g, gb, rows, cols);
}
void relu_fwd(const double* a, double* out, std::size_t n) { HFAT_DISPATCH(relu_fwd, a, out, n); }
void relu_bwd_acc(const double* a, const double* g, double* ga, std::size_t n) {
    HFAT_DISPATCH(relu_bwd_acc, a, g, ga, n);
}
void log_softmax_rows(const double* z, double* out, std::size_t rows, std::size_t cols) {
    HFAT_DISPATCH(log_softmax_rows, z, out, rows, cols);
}

#undef HFAT_DISPATCH

} // namespace hfat::kernels
