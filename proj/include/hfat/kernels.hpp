// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

// Dense f64 kernels behind the tensor ops. Every kernel exists twice: a serial
// reference under kernels::serial and an OpenMP version under kernels::par.
// The top-level functions dispatch on the active execution mode.
//
// Parallel loops are structured so each output element is written by exactly
// one thread running the same scalar inner loop as the serial variant, and
// reductions keep a fixed serial order. Results are therefore bit-identical
// across modes and thread counts; tests assert this.

namespace hfat::kernels {

enum class Exec { Serial, Parallel };

Exec exec_mode();
void set_exec_mode(Exec mode);
int max_threads();

namespace serial {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n);
void matmul_acc_nt(const double* g, const double* b, double* ga, std::size_t m, std::size_t n,
                   std::size_t k);
void matmul_acc_tn(const double* a, const double* g, double* gb, std::size_t m, std::size_t k,
                   std::size_t n);
void add_bias(const double* a, const double* bias, double* out, std::size_t rows,
              std::size_t cols);
void bias_grad_acc(const double* g, double* gb, std::size_t rows, std::size_t cols);
void relu_fwd(const double* a, double* out, std::size_t n);
void relu_bwd_acc(const double* a, const double* g, double* ga, std::size_t n);
void log_softmax_rows(const double* z, double* out, std::size_t rows, std::size_t cols);

} // namespace serial

namespace par {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n);
void matmul_acc_nt(const double* g, const double* b, double* ga, std::size_t m, std::size_t n,
                   std::size_t k);
void matmul_acc_tn(const double* a, const double* g, double* gb, std::size_t m, std::size_t k,
                   std::size_t n);
void add_bias(const double* a, const double* bias, double* out, std::size_t rows,
              std::size_t cols);
void bias_grad_acc(const double* g, double* gb, std::size_t rows, std::size_t cols);
void relu_fwd(const double* a, double* out, std::size_t n);
void relu_bwd_acc(const double* a, const double* g, double* ga, std::size_t n);
void log_softmax_rows(const double* z, double* out, std::size_t rows, std::size_t cols);

} // namespace par

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n);
void matmul_acc_nt(const double* g, const double* b, double* ga, std::size_t m, std::size_t n,
                   std::size_t k);
void matmul_acc_tn(const double* a, const double* g, double* gb, std::size_t m, std::size_t k,
                   std::size_t n);
void add_bias(const double* a, const double* bias, double* out, std::size_t rows,
              std::size_t cols);
void bias_grad_acc(const double* g, double* gb, std::size_t rows, std::size_t cols);
void relu_fwd(const double* a, double* out, std::size_t n);
void relu_bwd_acc(const double* a, const double* g, double* ga, std::size_t n);
void log_softmax_rows(const double* z, double* out, std::size_t rows, std::size_t cols);

} // namespace hfat::kernels
