#include "plaus/numeric/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace plaus::kernels {

namespace {
std::atomic<Exec> g_exec{Exec::parallel};

// One output row of a*b. Shared by the serial and parallel drivers so the
// accumulation order is identical.
inline void nn_row(const double* a, const double* b, double* c, std::size_t i, std::size_t k,
                   std::size_t n, bool accumulate) {
  double* crow = c + i * n;
  if (!accumulate) {
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
  }
  const double* arow = a + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = arow[p];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline void nt_row(const double* a, const double* b, double* c, std::size_t i, std::size_t k,
                   std::size_t n, bool accumulate) {
  const double* arow = a + i * k;
  double* crow = c + i * n;
  for (std::size_t j = 0; j < n; ++j) {
    const double* brow = b + j * k;
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
    crow[j] = accumulate ? crow[j] + s : s;
  }
}

inline void tn_row(const double* a, const double* b, double* c, std::size_t i, std::size_t m,
                   std::size_t k, std::size_t n, bool accumulate) {
  double* crow = c + i * n;
  if (!accumulate) {
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p * m + i];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}
}  // namespace

void set_default_exec(Exec e) { g_exec.store(e); }
Exec default_exec() { return g_exec.load(); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm_nn_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) nn_row(a.data(), b.data(), c.data(), i, k, n, accumulate);
}

void gemm_nn_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < rows; ++i) {
    nn_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), k, n, accumulate);
  }
}

void gemm_nt_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) nt_row(a.data(), b.data(), c.data(), i, k, n, accumulate);
}

void gemm_nt_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < rows; ++i) {
    nt_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), k, n, accumulate);
  }
}

void gemm_tn_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) tn_row(a.data(), b.data(), c.data(), i, m, k, n, accumulate);
}

void gemm_tn_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < rows; ++i) {
    tn_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), m, k, n, accumulate);
  }
}

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate, Exec exec) {
  if (exec == Exec::parallel && m > 1 && m * k * n >= kParallelThreshold) {
    gemm_nn_parallel(a, b, c, m, k, n, accumulate);
  } else {
    gemm_nn_serial(a, b, c, m, k, n, accumulate);
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate, Exec exec) {
  if (exec == Exec::parallel && m > 1 && m * k * n >= kParallelThreshold) {
    gemm_nt_parallel(a, b, c, m, k, n, accumulate);
  } else {
    gemm_nt_serial(a, b, c, m, k, n, accumulate);
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate, Exec exec) {
  if (exec == Exec::parallel && m > 1 && m * k * n >= kParallelThreshold) {
    gemm_tn_parallel(a, b, c, m, k, n, accumulate);
  } else {
    gemm_tn_serial(a, b, c, m, k, n, accumulate);
  }
}

}  // namespace plaus::kernels
