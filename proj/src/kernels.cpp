#include "diffgate/kernels.hpp"

#include <cstdint>

namespace diffgate::kernels {

namespace {
// Below this many output elements the OpenMP fork overhead dominates.
constexpr std::size_t kParallelCutoff = 4096;
}  // namespace

void matmul_serial(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    }
}

void matmul_omp(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    }
}

void matmul_nt_acc_serial(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
            c[i * n + j] += acc;
        }
    }
}

void matmul_nt_acc_omp(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
            c[i * n + j] += acc;
        }
    }
}

void matmul_tn_acc_serial(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < m; ++p) acc += a[p * k + i] * b[p * n + j];
            c[i * n + j] += acc;
        }
    }
}

void matmul_tn_acc_omp(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(k); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < m; ++p) acc += a[p * k + i] * b[p * n + j];
            c[i * n + j] += acc;
        }
    }
}

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
    if (m * n >= kParallelCutoff)
        matmul_omp(a, b, c, m, k, n);
    else
        matmul_serial(a, b, c, m, k, n);
}

void matmul_nt_acc(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
    if (m * n >= kParallelCutoff)
        matmul_nt_acc_omp(a, b, c, m, k, n);
    else
        matmul_nt_acc_serial(a, b, c, m, k, n);
}

void matmul_tn_acc(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
    if (k * n >= kParallelCutoff)
        matmul_tn_acc_omp(a, b, c, m, k, n);
    else
        matmul_tn_acc_serial(a, b, c, m, k, n);
}

}  // namespace diffgate::kernels
