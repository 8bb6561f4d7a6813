#pragma once

#include <cstddef>
#include <span>

namespace ipnmt::nn::kernels {

// Dense inner loops used by the differentiable ops. Each kernel exists as a
// serial reference and an OpenMP variant; the dispatching entry points at
// the bottom pick one based on problem size and the process-wide policy.
//
// Layout: W is row-major [in x out], x is [in], y is [out].

namespace serial {
// y += x^T W
void vec_mat(std::span<const double> x, std::span<const double> w,
             std::span<double> y);
// dx += W dy
void mat_vec(std::span<const double> w, std::span<const double> dy,
             std::span<double> dx);
// dW += x dy^T
void outer_add(std::span<const double> x, std::span<const double> dy,
               std::span<double> dw);
// dst += scale * src
void axpy(double scale, std::span<const double> src, std::span<double> dst);
}  // namespace serial

namespace parallel {
void vec_mat(std::span<const double> x, std::span<const double> w,
             std::span<double> y);
void mat_vec(std::span<const double> w, std::span<const double> dy,
             std::span<double> dx);
void outer_add(std::span<const double> x, std::span<const double> dy,
               std::span<double> dw);
void axpy(double scale, std::span<const double> src, std::span<double> dst);
}  // namespace parallel

enum class Policy { Serial, Parallel };

// Process-wide default. Parallel kernels are only used above
// `parallel_threshold()` multiply-adds and never from inside an active
// OpenMP region (batch-level parallelism already owns the threads there).
void set_policy(Policy policy);
Policy policy();
std::size_t parallel_threshold();
void set_parallel_threshold(std::size_t flops);

bool openmp_enabled();
int max_threads();

void vec_mat(std::span<const double> x, std::span<const double> w,
             std::span<double> y);
void mat_vec(std::span<const double> w, std::span<const double> dy,
             std::span<double> dx);
void outer_add(std::span<const double> x, std::span<const double> dy,
               std::span<double> dw);
void axpy(double scale, std::span<const double> src, std::span<double> dst);

}  // namespace ipnmt::nn::kernels
