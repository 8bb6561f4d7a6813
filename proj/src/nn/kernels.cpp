#include "ipnmt/nn/kernels.hpp"

#include <algorithm>
#include <atomic>

#ifdef IPNMT_HAVE_OPENMP
#include <omp.h>
#endif

namespace ipnmt::nn::kernels {

namespace {

std::atomic<Policy> g_policy{Policy::Parallel};
std::atomic<std::size_t> g_threshold{1u << 16};

constexpr std::size_t kColumnBlock = 64;

bool use_parallel(std::size_t flops) {
#ifdef IPNMT_HAVE_OPENMP
  return g_policy.load(std::memory_order_relaxed) == Policy::Parallel &&
         flops >= g_threshold.load(std::memory_order_relaxed) &&
         !omp_in_parallel() && omp_get_max_threads() > 1;
#else
  (void)flops;
  return false;
#endif
}

}  // namespace

namespace serial {

void vec_mat(std::span<const double> x, std::span<const double> w,
             std::span<double> y) {
  const std::size_t out = y.size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double* row = w.data() + i * out;
    for (std::size_t j = 0; j < out; ++j) y[j] += xi * row[j];
  }
}

void mat_vec(std::span<const double> w, std::span<const double> dy,
             std::span<double> dx) {
  const std::size_t out = dy.size();
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const double* row = w.data() + i * out;
    double acc = 0.0;
    for (std::size_t j = 0; j < out; ++j) acc += row[j] * dy[j];
    dx[i] += acc;
  }
}

void outer_add(std::span<const double> x, std::span<const double> dy,
               std::span<double> dw) {
  const std::size_t out = dy.size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    double* row = dw.data() + i * out;
    for (std::size_t j = 0; j < out; ++j) row[j] += xi * dy[j];
  }
}

void axpy(double scale, std::span<const double> src, std::span<double> dst) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += scale * src[i];
}

}  // namespace serial

namespace parallel {

void vec_mat(std::span<const double> x, std::span<const double> w,
             std::span<double> y) {
  const std::size_t out = y.size();
  const std::size_t in = x.size();
  const long blocks = static_cast<long>((out + kColumnBlock - 1) / kColumnBlock);
#pragma omp parallel for schedule(static)
  for (long b = 0; b < blocks; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kColumnBlock;
    const std::size_t hi = std::min(out, lo + kColumnBlock);
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = x[i];
      const double* row = w.data() + i * out;
      for (std::size_t j = lo; j < hi; ++j) y[j] += xi * row[j];
    }
  }
}

void mat_vec(std::span<const double> w, std::span<const double> dy,
             std::span<double> dx) {
  const std::size_t out = dy.size();
  const long in = static_cast<long>(dx.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < in; ++i) {
    const double* row = w.data() + static_cast<std::size_t>(i) * out;
    double acc = 0.0;
    for (std::size_t j = 0; j < out; ++j) acc += row[j] * dy[j];
    dx[static_cast<std::size_t>(i)] += acc;
  }
}

void outer_add(std::span<const double> x, std::span<const double> dy,
               std::span<double> dw) {
  const std::size_t out = dy.size();
  const long in = static_cast<long>(x.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < in; ++i) {
    const double xi = x[static_cast<std::size_t>(i)];
    double* row = dw.data() + static_cast<std::size_t>(i) * out;
    for (std::size_t j = 0; j < out; ++j) row[j] += xi * dy[j];
  }
}

void axpy(double scale, std::span<const double> src, std::span<double> dst) {
  const long n = static_cast<long>(src.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    dst[static_cast<std::size_t>(i)] += scale * src[static_cast<std::size_t>(i)];
  }
}

}  // namespace parallel

void set_policy(Policy p) { g_policy.store(p); }
Policy policy() { return g_policy.load(); }
std::size_t parallel_threshold() { return g_threshold.load(); }
void set_parallel_threshold(std::size_t flops) { g_threshold.store(flops); }

bool openmp_enabled() {
#ifdef IPNMT_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef IPNMT_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void vec_mat(std::span<const double> x, std::span<const double> w,
             std::span<double> y) {
  if (use_parallel(x.size() * y.size())) {
    parallel::vec_mat(x, w, y);
  } else {
    serial::vec_mat(x, w, y);
  }
}

void mat_vec(std::span<const double> w, std::span<const double> dy,
             std::span<double> dx) {
  if (use_parallel(dx.size() * dy.size())) {
    parallel::mat_vec(w, dy, dx);
  } else {
    serial::mat_vec(w, dy, dx);
  }
}

void outer_add(std::span<const double> x, std::span<const double> dy,
               std::span<double> dw) {
  if (use_parallel(x.size() * dy.size())) {
    parallel::outer_add(x, dy, dw);
  } else {
    serial::outer_add(x, dy, dw);
  }
}

void axpy(double scale, std::span<const double> src, std::span<double> dst) {
  if (use_parallel(src.size())) {
    parallel::axpy(scale, src, dst);
  } else {
    serial::axpy(scale, src, dst);
  }
}

}  // namespace ipnmt::nn::kernels
