#pragma once

// Dense row-major kernels. Each routine has a serial reference and an
// OpenMP variant; both produce bit-identical results because every output
// element is accumulated in the same order regardless of the thread count.

#include <cstddef>
#include <span>

namespace plaus::kernels {

enum class Exec { serial, parallel };

// Process-wide default used by the tensor ops. Tests pin it to serial to
// compare against the parallel path.
void set_default_exec(Exec e);
Exec default_exec();

// Work (m*k*n) below which the parallel variant falls back to serial.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

// c[m,n] (+)= a[m,k] * b[k,n]
void gemm_nn_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_nn_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// c[m,n] (+)= a[m,k] * b[n,k]^T
void gemm_nt_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_nt_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// c[m,n] (+)= a[k,m]^T * b[k,n]
void gemm_tn_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_tn_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// Dispatch on `exec` and problem size.
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate, Exec exec = default_exec());
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate, Exec exec = default_exec());
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate, Exec exec = default_exec());

int max_threads();

}  // namespace plaus::kernels
