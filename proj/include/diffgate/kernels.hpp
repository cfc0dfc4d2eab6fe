#pragma once

#include <cstddef>

namespace diffgate::kernels {

// Dense kernels behind the tensor ops. Each has a serial reference and an
// OpenMP variant; every output element is an independent serial reduction,
// so the parallel results are bitwise identical to the serial ones. The
// benchmark target in bench/ compares the two.

// c[m x n] = a[m x k] * b[k x n]
void matmul_serial(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_omp(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n);

// c[m x n] += a[m x k] * b[n x k]^T   (i.e. a * b^T, accumulating)
void matmul_nt_acc_serial(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_acc_omp(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k, std::size_t n);

// c[k x n] += a[m x k]^T * b[m x n]   (accumulating)
void matmul_tn_acc_serial(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_acc_omp(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k, std::size_t n);

// Dispatchers: OpenMP above a size cutoff, serial below.
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_acc(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_acc(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);

}  // namespace diffgate::kernels
